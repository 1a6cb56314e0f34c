//! Single model trees with geometry-shaped oblique splits.
//!
//! Every node fits a ridge model on its data; the fitted coefficient vector
//! is the candidate split normal. Before routing, the normal is shaped on
//! the image lattice in three optional stages, in order:
//!
//! 1. **Smooth** — reshape to H×W, Gaussian-smooth, flatten back;
//! 2. **Prune** — keep the `prune_k` features with the largest importance
//!    `|w_i|·h_i` (half-widths `h` from the node's bounding box), zero the
//!    rest;
//! 3. **Tilt** — if `Σ_{i≠k}|w_i|h_i > τ·|w_k|h_k` at the dominant feature
//!    `k`, rescale all non-dominant coefficients so equality holds.
//!
//! Samples route left when `(x − m)ᵀw ≤ 0`, with `m` the bounding-box
//! midpoint. Nodes split only when the shaped normal is accepted, depth
//! allows, and both children keep at least `min_leaf` samples; otherwise the
//! node keeps its fitted model as a leaf.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, Result};
use crate::grid::{GaussianKernel, ImageGrid};
use crate::rng::derive_seed;
use crate::solver::{dot, fit_ridge_adam, DesignMatrix, LinearModel, RidgeConfig};

/// Axis-aligned bounding box of a node's samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBox {
    x_min: Vec<f64>,
    x_max: Vec<f64>,
}

impl NodeBox {
    pub fn x_min(&self) -> &[f64] {
        &self.x_min
    }

    pub fn x_max(&self) -> &[f64] {
        &self.x_max
    }

    /// Box center `m = (x_min + x_max) / 2`.
    pub fn midpoint(&self) -> Vec<f64> {
        self.x_min
            .iter()
            .zip(&self.x_max)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Per-feature half-width `h = (x_max − x_min) / 2`.
    pub fn half_width(&self) -> Vec<f64> {
        self.x_min
            .iter()
            .zip(&self.x_max)
            .map(|(lo, hi)| 0.5 * (hi - lo))
            .collect()
    }
}

/// Per-feature min/max over the rows of `x`.
pub fn compute_box(x: &DesignMatrix) -> Result<NodeBox> {
    if x.rows() == 0 {
        return Err(invalid_argument("cannot bound zero samples"));
    }
    let mut x_min = x.row(0).to_vec();
    let mut x_max = x.row(0).to_vec();
    for i in 1..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            if v < x_min[j] {
                x_min[j] = v;
            }
            if v > x_max[j] {
                x_max[j] = v;
            }
        }
    }
    Ok(NodeBox { x_min, x_max })
}

/// Which stages shape a candidate split normal, and their parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitShapingConfig {
    pub use_conv: bool,
    pub use_prune: bool,
    pub use_tilt: bool,
    pub kernel: GaussianKernel,
    /// Features kept by the pruning stage.
    pub prune_k: usize,
    /// Tilt dominance ratio τ.
    pub tilt_tau: f64,
}

impl Default for SplitShapingConfig {
    fn default() -> Self {
        SplitShapingConfig {
            use_conv: true,
            use_prune: true,
            use_tilt: true,
            kernel: GaussianKernel::default(),
            prune_k: 256,
            tilt_tau: 0.7,
        }
    }
}

impl SplitShapingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prune_k == 0 {
            return Err(invalid_argument("prune_k must be ≥ 1"));
        }
        if !(self.tilt_tau > 0.0) || !self.tilt_tau.is_finite() {
            return Err(invalid_argument(format!(
                "tilt tau must be positive, got {}",
                self.tilt_tau
            )));
        }
        Ok(())
    }
}

/// How a tree combines leaf predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    /// Follow the route to a single leaf.
    Hard,
    /// Blend children by `p_right = σ(soft_beta · g(x))` at every split.
    /// Experimental; hard gating is the deployed configuration.
    Soft,
}

/// Growth and inference parameters for one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
    pub shaping: SplitShapingConfig,
    pub ridge: RidgeConfig,
    pub gating: Gating,
    pub soft_beta: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: 6,
            min_leaf: 200,
            shaping: SplitShapingConfig::default(),
            ridge: RidgeConfig::default(),
            gating: Gating::Hard,
            soft_beta: 1.0,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(invalid_argument("min_leaf must be ≥ 1"));
        }
        if !(self.soft_beta > 0.0) || !self.soft_beta.is_finite() {
            return Err(invalid_argument(format!(
                "soft_beta must be positive, got {}",
                self.soft_beta
            )));
        }
        self.shaping.validate()?;
        self.ridge.validate()
    }
}

/// A grown model tree.
///
/// Internal nodes keep the half-width snapshot of the box their normal was
/// shaped against so the tilt inequality stays auditable after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        normal: Vec<f64>,
        midpoint: Vec<f64>,
        half_width: Vec<f64>,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        model: LinearModel,
        n_train: usize,
    },
}

/// Routing margin `g(x) = (x − m)ᵀw`, the one evaluation order used
/// everywhere (routing, soft gating, orientation scoring).
pub(crate) fn margin(x: &[f64], midpoint: &[f64], normal: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), midpoint.len());
    debug_assert_eq!(x.len(), normal.len());
    let mut acc = [0.0f64; 4];
    let n4 = x.len() - x.len() % 4;
    let mut i = 0;
    while i < n4 {
        acc[0] += (x[i] - midpoint[i]) * normal[i];
        acc[1] += (x[i + 1] - midpoint[i + 1]) * normal[i + 1];
        acc[2] += (x[i + 2] - midpoint[i + 2]) * normal[i + 2];
        acc[3] += (x[i + 3] - midpoint[i + 3]) * normal[i + 3];
        i += 4;
    }
    let mut tail = 0.0;
    for j in n4..x.len() {
        tail += (x[j] - midpoint[j]) * normal[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Routing direction of one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Routes `x` through one split: left iff `(x − m)ᵀw ≤ 0` (ties left).
pub fn route(x: &[f64], normal: &[f64], midpoint: &[f64]) -> Result<Side> {
    if x.len() != normal.len() || x.len() != midpoint.len() {
        return Err(invalid_argument(format!(
            "route dimension mismatch: x={}, w={}, m={}",
            x.len(),
            normal.len(),
            midpoint.len()
        )));
    }
    Ok(if margin(x, midpoint, normal) <= 0.0 {
        Side::Left
    } else {
        Side::Right
    })
}

fn importances(w: &[f64], half_width: &[f64]) -> Vec<f64> {
    w.iter()
        .zip(half_width)
        .map(|(wi, hi)| wi.abs() * hi)
        .collect()
}

/// Index of the maximum; the first maximum wins ties.
fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Shapes a candidate split normal for an H×W grid against `node_box`.
///
/// Stages run in the fixed order smooth → prune → tilt (each subject to its
/// flag). Returns the shaped normal and whether it can anchor a split: the
/// flag is false only when the normal is all-zero or the dominant importance
/// `max_i |w_i|·h_i` is zero.
pub fn shape_normal(
    w: &[f64],
    node_box: &NodeBox,
    cfg: &SplitShapingConfig,
    height: usize,
    width: usize,
) -> Result<(Vec<f64>, bool)> {
    cfg.validate()?;
    let d = height * width;
    if w.len() != d || node_box.x_min.len() != d {
        return Err(invalid_argument(format!(
            "shape mismatch: {}x{} grid has {d} features, normal has {}, box has {}",
            height,
            width,
            w.len(),
            node_box.x_min.len()
        )));
    }
    let mut shaped = w.to_vec();

    if cfg.use_conv {
        let grid = ImageGrid::new(height, width, shaped)?;
        shaped = grid.gaussian_smooth(&cfg.kernel)?.into_values();
    }

    let half_width = node_box.half_width();
    if cfg.use_prune && cfg.prune_k < d {
        let imp = importances(&shaped, &half_width);
        let mut order: Vec<usize> = (0..d).collect();
        // Descending importance, lower index first on ties.
        order.sort_by(|&a, &b| imp[b].partial_cmp(&imp[a]).unwrap().then(a.cmp(&b)));
        let mut keep = vec![false; d];
        for &i in order.iter().take(cfg.prune_k) {
            keep[i] = true;
        }
        for (i, v) in shaped.iter_mut().enumerate() {
            if !keep[i] {
                *v = 0.0;
            }
        }
    }

    let imp = importances(&shaped, &half_width);
    let k = argmax_first(&imp);
    let dominant = imp[k];
    if dominant == 0.0 || shaped.iter().all(|v| *v == 0.0) {
        return Ok((shaped, false));
    }

    if cfg.use_tilt {
        let off_sum: f64 = imp
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, v)| v)
            .sum();
        let budget = cfg.tilt_tau * dominant;
        if off_sum > budget {
            let scale = budget / off_sum;
            for (i, v) in shaped.iter_mut().enumerate() {
                if i != k {
                    *v *= scale;
                }
            }
        }
    }

    Ok((shaped, true))
}

/// Grows a model tree on `(x, y)` whose rows are flattened `grid_shape`
/// images.
///
/// Per-node ridge seeds derive from `seed` and the node's path position, so
/// the result is independent of traversal order and bit-reproducible.
pub fn grow_tree(
    x: &DesignMatrix,
    y: &[f64],
    grid_shape: (usize, usize),
    cfg: &TreeConfig,
    seed: u64,
) -> Result<TreeNode> {
    cfg.validate()?;
    let (height, width) = grid_shape;
    if x.cols() != height * width {
        return Err(invalid_argument(format!(
            "{}x{} grid implies {} features, matrix has {}",
            height,
            width,
            height * width,
            x.cols()
        )));
    }
    if x.rows() != y.len() || x.rows() == 0 {
        return Err(invalid_argument(format!(
            "{} rows with {} targets",
            x.rows(),
            y.len()
        )));
    }
    grow(x, y, grid_shape, cfg, seed, 0, 1)
}

fn grow(
    x: &DesignMatrix,
    y: &[f64],
    grid_shape: (usize, usize),
    cfg: &TreeConfig,
    seed: u64,
    depth: usize,
    path_code: u64,
) -> Result<TreeNode> {
    let n = x.rows();
    let ridge = RidgeConfig {
        seed: derive_seed(seed, path_code),
        ..cfg.ridge
    };
    let model = fit_ridge_adam(x, y, &ridge)?;

    if depth < cfg.max_depth && n >= 2 * cfg.min_leaf {
        let node_box = compute_box(x)?;
        let (normal, accepted) = shape_normal(
            &model.weights,
            &node_box,
            &cfg.shaping,
            grid_shape.0,
            grid_shape.1,
        )?;
        if accepted {
            let midpoint = node_box.midpoint();
            let mut left_rows = Vec::new();
            let mut right_rows = Vec::new();
            for i in 0..n {
                if margin(x.row(i), &midpoint, &normal) <= 0.0 {
                    left_rows.push(i);
                } else {
                    right_rows.push(i);
                }
            }
            if left_rows.len() >= cfg.min_leaf && right_rows.len() >= cfg.min_leaf {
                let lx = x.select(&left_rows);
                let ly: Vec<f64> = left_rows.iter().map(|&i| y[i]).collect();
                let rx = x.select(&right_rows);
                let ry: Vec<f64> = right_rows.iter().map(|&i| y[i]).collect();
                let left = grow(&lx, &ly, grid_shape, cfg, seed, depth + 1, path_code * 2)?;
                let right = grow(&rx, &ry, grid_shape, cfg, seed, depth + 1, path_code * 2 + 1)?;
                return Ok(TreeNode::Internal {
                    normal,
                    midpoint,
                    half_width: node_box.half_width(),
                    left: Box::new(left),
                    right: Box::new(right),
                });
            }
        }
    }

    Ok(TreeNode::Leaf {
        model,
        n_train: n,
    })
}

/// Evaluates a tree on `x`.
pub fn predict_tree(tree: &TreeNode, x: &[f64], gating: Gating, soft_beta: f64) -> f64 {
    match tree {
        TreeNode::Leaf { model, .. } => dot(x, &model.weights) + model.intercept,
        TreeNode::Internal {
            normal,
            midpoint,
            left,
            right,
            ..
        } => {
            let g = margin(x, midpoint, normal);
            match gating {
                Gating::Hard => {
                    let child = if g <= 0.0 { left } else { right };
                    predict_tree(child, x, gating, soft_beta)
                }
                Gating::Soft => {
                    let p_right = 1.0 / (1.0 + (-soft_beta * g).exp());
                    let lv = predict_tree(left, x, gating, soft_beta);
                    let rv = predict_tree(right, x, gating, soft_beta);
                    (1.0 - p_right) * lv + p_right * rv
                }
            }
        }
    }
}

/// Structural facts collected from a grown tree for invariant audits.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeAudit {
    pub internal_count: usize,
    pub leaf_count: usize,
    /// Deepest node, root = 0.
    pub depth: usize,
    /// Largest nonzero count over internal normals (0 when no internals).
    pub max_normal_nnz: usize,
    /// Worst tilt excess `Σ_{i≠k}|w_i|h_i − τ·|w_k|h_k` against each
    /// internal node's stored half-width snapshot (−∞ when no internals).
    pub worst_tilt_excess: f64,
    /// Smallest leaf size.
    pub min_leaf_n: usize,
    /// Sum of leaf sizes (= training-sample count under hard routing).
    pub total_leaf_n: usize,
}

/// Walks a tree and gathers the audit facts for the given tilt ratio.
pub fn audit_tree(tree: &TreeNode, tilt_tau: f64) -> TreeAudit {
    let mut audit = TreeAudit {
        internal_count: 0,
        leaf_count: 0,
        depth: 0,
        max_normal_nnz: 0,
        worst_tilt_excess: f64::NEG_INFINITY,
        min_leaf_n: usize::MAX,
        total_leaf_n: 0,
    };
    walk_audit(tree, tilt_tau, 0, &mut audit);
    audit
}

fn walk_audit(tree: &TreeNode, tilt_tau: f64, depth: usize, audit: &mut TreeAudit) {
    audit.depth = audit.depth.max(depth);
    match tree {
        TreeNode::Leaf { n_train, .. } => {
            audit.leaf_count += 1;
            audit.min_leaf_n = audit.min_leaf_n.min(*n_train);
            audit.total_leaf_n += n_train;
        }
        TreeNode::Internal {
            normal,
            half_width,
            left,
            right,
            ..
        } => {
            audit.internal_count += 1;
            let nnz = normal.iter().filter(|v| **v != 0.0).count();
            audit.max_normal_nnz = audit.max_normal_nnz.max(nnz);
            let imp = importances(normal, half_width);
            let k = argmax_first(&imp);
            let off_sum: f64 = imp
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, v)| v)
                .sum();
            let excess = off_sum - tilt_tau * imp[k];
            audit.worst_tilt_excess = audit.worst_tilt_excess.max(excess);
            walk_audit(left, tilt_tau, depth + 1, audit);
            walk_audit(right, tilt_tau, depth + 1, audit);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(d: usize) -> NodeBox {
        NodeBox {
            x_min: vec![0.0; d],
            x_max: vec![1.0; d],
        }
    }

    fn shaping_off() -> SplitShapingConfig {
        SplitShapingConfig {
            use_conv: false,
            use_prune: false,
            use_tilt: false,
            ..SplitShapingConfig::default()
        }
    }

    #[test]
    fn box_of_single_row_is_degenerate() {
        let x = DesignMatrix::new(1, 3, vec![0.2, -1.0, 4.0]).unwrap();
        let b = compute_box(&x).unwrap();
        assert_eq!(b.midpoint(), vec![0.2, -1.0, 4.0]);
        assert_eq!(b.half_width(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn box_midpoint_and_half_width_follow_definitions() {
        let x = DesignMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let b = compute_box(&x).unwrap();
        assert_eq!(b.midpoint(), vec![0.5, 0.5]);
        assert_eq!(b.half_width(), vec![0.5, 0.5]);
    }

    #[test]
    fn box_matches_naive_min_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let values: Vec<f64> = (0..100 * 7).map(|_| rng.random_range(-3.0..3.0)).collect();
        let x = DesignMatrix::new(100, 7, values.clone()).unwrap();
        let b = compute_box(&x).unwrap();
        for j in 0..7 {
            let col: Vec<f64> = (0..100).map(|i| values[i * 7 + j]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(b.x_min()[j], lo);
            assert_eq!(b.x_max()[j], hi);
        }
    }

    #[test]
    fn one_hot_normal_passes_tilt_unchanged() {
        let mut w = vec![0.0; 9];
        w[4] = 2.0;
        let cfg = SplitShapingConfig {
            use_tilt: true,
            ..shaping_off()
        };
        let (shaped, accepted) = shape_normal(&w, &unit_box(9), &cfg, 3, 3).unwrap();
        assert!(accepted);
        assert_eq!(shaped, w);
    }

    #[test]
    fn tilt_rescales_to_exact_equality() {
        // Two equal coefficients; the non-dominant one must shrink by τ.
        let w = vec![1.0, 1.0];
        let b = NodeBox {
            x_min: vec![-1.0, -1.0],
            x_max: vec![1.0, 1.0],
        };
        let cfg = SplitShapingConfig {
            use_tilt: true,
            tilt_tau: 0.7,
            ..shaping_off()
        };
        let (shaped, accepted) = shape_normal(&w, &b, &cfg, 1, 2).unwrap();
        assert!(accepted);
        assert_eq!(shaped[0], 1.0); // index 0 wins the argmax tie
        assert_eq!(shaped[1], 0.7);
        let h = b.half_width();
        assert_eq!(shaped[1].abs() * h[1], 0.7 * shaped[0].abs() * h[0]);
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let w = vec![1.0, -2.0, 3.0, 0.5];
        let b = NodeBox {
            x_min: vec![0.3; 4],
            x_max: vec![0.3; 4],
        };
        let (_, accepted) = shape_normal(&w, &b, &shaping_off(), 2, 2).unwrap();
        assert!(!accepted, "zero half-widths leave no informative feature");
    }

    #[test]
    fn all_zero_normal_is_rejected() {
        let (_, accepted) =
            shape_normal(&vec![0.0; 4], &unit_box(4), &shaping_off(), 2, 2).unwrap();
        assert!(!accepted);
    }

    #[test]
    fn prune_keeps_brute_force_top_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let d = 30;
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x_max: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..2.0)).collect();
        let b = NodeBox {
            x_min: vec![0.0; d],
            x_max,
        };
        let cfg = SplitShapingConfig {
            use_prune: true,
            prune_k: 10,
            ..shaping_off()
        };
        let (shaped, accepted) = shape_normal(&w, &b, &cfg, 5, 6).unwrap();
        assert!(accepted);
        assert_eq!(shaped.iter().filter(|v| **v != 0.0).count(), 10);

        let h = b.half_width();
        let mut by_importance: Vec<usize> = (0..d).collect();
        by_importance.sort_by(|&a, &c| {
            (w[c].abs() * h[c])
                .partial_cmp(&(w[a].abs() * h[a]))
                .unwrap()
                .then(a.cmp(&c))
        });
        for (i, v) in shaped.iter().enumerate() {
            let should_keep = by_importance[..10].contains(&i);
            assert_eq!(*v != 0.0, should_keep && w[i] != 0.0, "feature {i}");
            if should_keep {
                assert_eq!(*v, w[i], "kept coefficients are untouched");
            }
        }
    }

    #[test]
    fn prune_ties_keep_lower_indices() {
        let w = vec![1.0; 6];
        let cfg = SplitShapingConfig {
            use_prune: true,
            prune_k: 3,
            ..shaping_off()
        };
        let (shaped, _) = shape_normal(&w, &unit_box(6), &cfg, 2, 3).unwrap();
        assert_eq!(shaped, vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn smoothing_runs_before_pruning() {
        // An impulse smears over its neighborhood before pruning, so kept
        // features include pixels that were zero in the raw normal.
        let mut w = vec![0.0; 49];
        w[24] = 1.0; // center of a 7×7 grid
        let cfg = SplitShapingConfig {
            use_conv: true,
            use_prune: true,
            prune_k: 3,
            kernel: GaussianKernel::new(3, 1.0).unwrap(),
            ..shaping_off()
        };
        let (shaped, accepted) = shape_normal(&w, &unit_box(49), &cfg, 7, 7).unwrap();
        assert!(accepted);
        let nnz: Vec<usize> = shaped
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(nnz.len(), 3);
        assert!(nnz.contains(&24));
        assert!(nnz.iter().all(|i| *i != 24 && (*i == 17 || *i == 23 || *i == 25 || *i == 31) || *i == 24),
            "support {nnz:?} should sit in the 4-neighborhood");
    }

    #[test]
    fn conv_stage_matches_direct_smoothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let w: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kernel = GaussianKernel::default();
        let cfg = SplitShapingConfig {
            use_conv: true,
            kernel: kernel.clone(),
            ..shaping_off()
        };
        let (shaped, _) = shape_normal(&w, &unit_box(64), &cfg, 8, 8).unwrap();
        let direct = ImageGrid::new(8, 8, w)
            .unwrap()
            .gaussian_smooth(&kernel)
            .unwrap();
        assert_eq!(shaped, direct.values());
    }

    #[test]
    fn route_follows_margin_sign_with_ties_left() {
        let normal = vec![1.0, 0.0];
        let midpoint = vec![0.5, 0.5];
        assert_eq!(route(&[0.5, 0.5], &normal, &midpoint).unwrap(), Side::Left);
        assert_eq!(route(&[1.5, 0.0], &normal, &midpoint).unwrap(), Side::Right);
        assert_eq!(route(&[0.1, 0.9], &normal, &midpoint).unwrap(), Side::Left);
        assert!(route(&[0.1], &normal, &midpoint).is_err());
    }

    #[test]
    fn margin_matches_naive_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..50 {
            let d = rng.random_range(1..40);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let naive: f64 = (0..d).map(|i| (x[i] - m[i]) * w[i]).sum();
            assert!((margin(&x, &m, &w) - naive).abs() < 1e-12);
        }
    }

    /// Two pixel clusters with opposite targets; linearly separable.
    fn clustered_problem(n: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = (6, 6);
        let mut values = Vec::with_capacity(n * h * w);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let cluster_a = i % 2 == 0;
            let mut img = vec![0.0; h * w];
            let (r0, c0) = if cluster_a { (0, 0) } else { (3, 3) };
            for r in r0..r0 + 3 {
                for c in c0..c0 + 3 {
                    img[r * w + c] = rng.random_range(0.5..1.0);
                }
            }
            values.extend_from_slice(&img);
            y.push(if cluster_a { 1.0 } else { -1.0 } + rng.random_range(-0.01..0.01));
        }
        (DesignMatrix::new(n, h * w, values).unwrap(), y)
    }

    fn small_grid_config() -> TreeConfig {
        TreeConfig {
            shaping: SplitShapingConfig {
                kernel: GaussianKernel::new(3, 1.0).unwrap(),
                prune_k: 12,
                ..SplitShapingConfig::default()
            },
            ridge: RidgeConfig {
                base_iters: 60,
                ..RidgeConfig::default()
            },
            ..TreeConfig::default()
        }
    }

    #[test]
    fn too_few_samples_produce_a_leaf() {
        let (x, y) = clustered_problem(300, 59); // < 2·min_leaf = 400
        let tree = grow_tree(&x, &y, (6, 6), &small_grid_config(), 1).unwrap();
        assert!(matches!(tree, TreeNode::Leaf { n_train: 300, .. }));
    }

    #[test]
    fn zero_depth_produces_a_leaf() {
        let (x, y) = clustered_problem(600, 61);
        let cfg = TreeConfig {
            max_depth: 0,
            ..small_grid_config()
        };
        let tree = grow_tree(&x, &y, (6, 6), &cfg, 1).unwrap();
        assert!(matches!(tree, TreeNode::Leaf { .. }));
    }

    #[test]
    fn separable_clusters_split_and_children_fit_better() {
        let (x, y) = clustered_problem(1000, 67);
        let cfg = TreeConfig {
            max_depth: 1,
            ..small_grid_config()
        };
        let stump = grow_tree(&x, &y, (6, 6), &cfg, 5).unwrap();
        let TreeNode::Internal { .. } = &stump else {
            panic!("expected the root to split");
        };
        // Same data and seed at depth 0: the single leaf IS the root model.
        let root_only = grow_tree(
            &x,
            &y,
            (6, 6),
            &TreeConfig {
                max_depth: 0,
                ..cfg.clone()
            },
            5,
        )
        .unwrap();
        let mse = |tree: &TreeNode| -> f64 {
            (0..x.rows())
                .map(|i| {
                    let e = predict_tree(tree, x.row(i), Gating::Hard, 1.0) - y[i];
                    e * e
                })
                .sum::<f64>()
                / x.rows() as f64
        };
        let split_mse = mse(&stump);
        let root_mse = mse(&root_only);
        assert!(
            split_mse < root_mse,
            "split {split_mse} should beat root {root_mse}"
        );
    }

    #[test]
    fn growth_is_deterministic() {
        let (x, y) = clustered_problem(900, 71);
        let cfg = small_grid_config();
        let a = grow_tree(&x, &y, (6, 6), &cfg, 9).unwrap();
        let b = grow_tree(&x, &y, (6, 6), &cfg, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn grown_tree_passes_structural_audits() {
        let (x, y) = clustered_problem(1200, 73);
        let cfg = small_grid_config();
        let tree = grow_tree(&x, &y, (6, 6), &cfg, 3).unwrap();
        let audit = audit_tree(&tree, cfg.shaping.tilt_tau);
        assert!(audit.depth <= cfg.max_depth);
        assert!(audit.max_normal_nnz <= cfg.shaping.prune_k);
        assert!(audit.min_leaf_n >= cfg.min_leaf);
        assert_eq!(audit.total_leaf_n, 1200);
        if audit.internal_count > 0 {
            assert!(
                audit.worst_tilt_excess <= 1e-9,
                "tilt excess {}",
                audit.worst_tilt_excess
            );
        }
    }

    #[test]
    fn training_samples_partition_across_leaves() {
        let (x, y) = clustered_problem(1000, 79);
        let cfg = small_grid_config();
        let tree = grow_tree(&x, &y, (6, 6), &cfg, 11).unwrap();
        fn count_arrivals(tree: &TreeNode, x: &DesignMatrix, rows: Vec<usize>, out: &mut Vec<(usize, usize)>) {
            match tree {
                TreeNode::Leaf { n_train, .. } => out.push((*n_train, rows.len())),
                TreeNode::Internal {
                    normal,
                    midpoint,
                    left,
                    right,
                    ..
                } => {
                    let (mut l, mut r) = (Vec::new(), Vec::new());
                    for i in rows {
                        if margin(x.row(i), midpoint, normal) <= 0.0 {
                            l.push(i);
                        } else {
                            r.push(i);
                        }
                    }
                    count_arrivals(left, x, l, out);
                    count_arrivals(right, x, r, out);
                }
            }
        }
        let mut arrivals = Vec::new();
        count_arrivals(&tree, &x, (0..1000).collect(), &mut arrivals);
        let mut total = 0;
        for (stored, recounted) in arrivals {
            assert_eq!(stored, recounted, "leaf n_train must match re-routing");
            total += recounted;
        }
        assert_eq!(total, 1000);
    }

    #[test]
    fn single_leaf_prediction_ignores_gating() {
        let leaf = TreeNode::Leaf {
            model: LinearModel {
                weights: vec![2.0, 0.0],
                intercept: 1.0,
            },
            n_train: 10,
        };
        let x = [3.0, 9.9];
        assert_eq!(predict_tree(&leaf, &x, Gating::Hard, 1.0), 7.0);
        assert_eq!(predict_tree(&leaf, &x, Gating::Soft, 1.0), 7.0);
    }

    #[test]
    fn hard_gating_sends_midpoint_ties_left() {
        let make_leaf = |v: f64| {
            Box::new(TreeNode::Leaf {
                model: LinearModel {
                    weights: vec![0.0, 0.0],
                    intercept: v,
                },
                n_train: 1,
            })
        };
        let tree = TreeNode::Internal {
            normal: vec![1.0, 0.0],
            midpoint: vec![0.25, 0.75],
            half_width: vec![0.25, 0.25],
            left: make_leaf(-5.0),
            right: make_leaf(5.0),
        };
        assert_eq!(predict_tree(&tree, &[0.25, 0.1], Gating::Hard, 1.0), -5.0);
        assert_eq!(predict_tree(&tree, &[0.26, 0.1], Gating::Hard, 1.0), 5.0);
    }

    #[test]
    fn stiff_soft_gating_converges_to_hard() {
        let (x, y) = clustered_problem(1000, 83);
        let cfg = small_grid_config();
        let tree = grow_tree(&x, &y, (6, 6), &cfg, 13).unwrap();

        // Smallest |g| along the hard path; the soft blend only converges
        // where no margin sits on a decision boundary.
        fn min_path_margin(tree: &TreeNode, x: &[f64]) -> f64 {
            match tree {
                TreeNode::Leaf { .. } => f64::INFINITY,
                TreeNode::Internal {
                    normal,
                    midpoint,
                    left,
                    right,
                    ..
                } => {
                    let g = margin(x, midpoint, normal);
                    let child = if g <= 0.0 { left } else { right };
                    g.abs().min(min_path_margin(child, x))
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..200 {
            let probe: Vec<f64> = (0..36).map(|_| rng.random_range(0.0..1.0)).collect();
            // σ(1e6 · 1e-4) saturates to 1 exactly in f64.
            if min_path_margin(&tree, &probe) < 1e-4 {
                continue;
            }
            checked += 1;
            let hard = predict_tree(&tree, &probe, Gating::Hard, 1.0);
            let soft = predict_tree(&tree, &probe, Gating::Soft, 1e6);
            assert!(
                (hard - soft).abs() <= 1e-6,
                "hard {hard} vs soft {soft}"
            );
        }
        assert!(checked >= 50, "only {checked}/200 probes off the boundary");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn shaped_normals_always_satisfy_tilt(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 16usize;
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x_max: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.5)).collect();
            let b = NodeBox { x_min: vec![0.0; d], x_max };
            let cfg = SplitShapingConfig {
                use_conv: true,
                use_prune: true,
                use_tilt: true,
                kernel: GaussianKernel::new(3, 1.0).unwrap(),
                prune_k: 6,
                tilt_tau: 0.7,
            };
            let (shaped, accepted) = shape_normal(&w, &b, &cfg, 4, 4).unwrap();
            if accepted {
                let h = b.half_width();
                let imp: Vec<f64> = shaped.iter().zip(&h).map(|(wi, hi)| wi.abs() * hi).collect();
                let k = imp
                    .iter()
                    .enumerate()
                    .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                        if v > bv { (i, v) } else { (bi, bv) }
                    })
                    .0;
                let off: f64 = imp.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, v)| v).sum();
                prop_assert!(off <= cfg.tilt_tau * imp[k] + 1e-12,
                    "off {off} vs budget {}", cfg.tilt_tau * imp[k]);
                prop_assert!(shaped.iter().filter(|v| **v != 0.0).count() <= cfg.prune_k);
            }
        }
    }
}
