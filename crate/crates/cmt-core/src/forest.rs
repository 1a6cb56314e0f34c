//! Bootstrap forests of shaped model trees, and deployment-time
//! orientation search.
//!
//! A forest is trained once on upright data. At deployment, its pixel-
//! indexed coefficient vectors (split normals, split midpoints, leaf
//! weights) can be rotated like images, which reorients the whole model
//! without retraining. For each input, a confidence score — the summed
//! normalized routing margins along each tree's decision path — picks the
//! best orientation from a precomputed cache of rotated forests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid_argument, Result};
use crate::grid::ImageGrid;
use crate::solver::{dot, DesignMatrix};
use crate::tree::{grow_tree, margin, predict_tree, TreeConfig, TreeNode};

/// Ensemble parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Fraction of `n` drawn (with replacement) for each tree.
    pub bootstrap_fraction: f64,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 3,
            bootstrap_fraction: 0.6,
            tree: TreeConfig::default(),
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(invalid_argument("a forest needs at least one tree"));
        }
        if !(self.bootstrap_fraction > 0.0 && self.bootstrap_fraction <= 1.0) {
            return Err(invalid_argument(format!(
                "bootstrap fraction must lie in (0,1], got {}",
                self.bootstrap_fraction
            )));
        }
        self.tree.validate()
    }
}

/// Where a trained forest came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 over the training matrix and targets.
    pub train_fingerprint: String,
    /// Harness-assigned model name; empty when trained directly.
    pub model_name: String,
}

/// A trained ensemble over flattened H×W images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<TreeNode>,
    config: ForestConfig,
    grid_shape: (usize, usize),
    provenance: Provenance,
}

impl Forest {
    pub(crate) fn from_parts(
        trees: Vec<TreeNode>,
        config: ForestConfig,
        grid_shape: (usize, usize),
        provenance: Provenance,
    ) -> Forest {
        Forest {
            trees,
            config,
            grid_shape,
            provenance,
        }
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid_shape
    }

    pub fn feature_dim(&self) -> usize {
        self.grid_shape.0 * self.grid_shape.1
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn set_model_name(&mut self, name: &str) {
        self.provenance.model_name = name.to_string();
    }

    /// Structural consistency: tree count matches the config and every
    /// coefficient vector matches the grid dimension. Run after
    /// deserializing from untrusted bytes.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.trees.len() != self.config.n_trees {
            return Err(crate::error::CmtError::Consistency(format!(
                "{} trees stored but config says {}",
                self.trees.len(),
                self.config.n_trees
            )));
        }
        let d = self.feature_dim();
        if d == 0 {
            return Err(invalid_argument("grid shape must be nonzero"));
        }
        for tree in &self.trees {
            validate_tree_dims(tree, d)?;
        }
        Ok(())
    }

    /// Mean of per-tree predictions under the configured gating.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_dim() {
            return Err(invalid_argument(format!(
                "input has {} features, forest expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        let gating = self.config.tree.gating;
        let beta = self.config.tree.soft_beta;
        let sum: f64 = self
            .trees
            .iter()
            .map(|t| predict_tree(t, x, gating, beta))
            .sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Routing-margin confidence: for each tree, walk the hard decision
    /// path of `x` and add `|g(x)| / (‖w‖₂ + ε)` at every internal node.
    pub fn confidence_score(&self, x: &[f64], epsilon: f64) -> Result<f64> {
        if x.len() != self.feature_dim() {
            return Err(invalid_argument(format!(
                "input has {} features, forest expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        let mut score = 0.0;
        for tree in &self.trees {
            let mut node = tree;
            while let TreeNode::Internal {
                normal,
                midpoint,
                left,
                right,
                ..
            } = node
            {
                let g = margin(x, midpoint, normal);
                score += g.abs() / (dot(normal, normal).sqrt() + epsilon);
                node = if g <= 0.0 { left } else { right };
            }
        }
        Ok(score)
    }

    /// Rotates every pixel-indexed coefficient vector — internal normals
    /// and midpoints, leaf weights — as an H×W image (bilinear, fill 0).
    /// Intercepts, half-width snapshots, and structure are unchanged.
    pub fn rotate(&self, angle_degrees: f64) -> Result<Forest> {
        let (h, w) = self.grid_shape;
        let trees = self
            .trees
            .iter()
            .map(|t| rotate_node(t, h, w, angle_degrees))
            .collect::<Result<Vec<_>>>()?;
        Ok(Forest {
            trees,
            config: self.config.clone(),
            grid_shape: self.grid_shape,
            provenance: self.provenance.clone(),
        })
    }
}

fn validate_tree_dims(tree: &TreeNode, d: usize) -> Result<()> {
    match tree {
        TreeNode::Leaf { model, .. } => {
            if model.weights.len() != d {
                return Err(crate::error::CmtError::Consistency(format!(
                    "leaf weight vector has {} entries, grid implies {d}",
                    model.weights.len()
                )));
            }
            Ok(())
        }
        TreeNode::Internal {
            normal,
            midpoint,
            half_width,
            left,
            right,
        } => {
            if normal.len() != d || midpoint.len() != d || half_width.len() != d {
                return Err(crate::error::CmtError::Consistency(format!(
                    "internal node vectors have {}/{}/{} entries, grid implies {d}",
                    normal.len(),
                    midpoint.len(),
                    half_width.len()
                )));
            }
            if normal.iter().all(|v| *v == 0.0) {
                return Err(crate::error::CmtError::Consistency(
                    "internal node with an all-zero normal".into(),
                ));
            }
            validate_tree_dims(left, d)?;
            validate_tree_dims(right, d)
        }
    }
}

fn rotate_vec(v: &[f64], h: usize, w: usize, angle: f64) -> Result<Vec<f64>> {
    Ok(ImageGrid::new(h, w, v.to_vec())?
        .rotate_bilinear(angle, 0.0)?
        .into_values())
}

fn rotate_node(tree: &TreeNode, h: usize, w: usize, angle: f64) -> Result<TreeNode> {
    match tree {
        TreeNode::Leaf { model, n_train } => Ok(TreeNode::Leaf {
            model: crate::solver::LinearModel {
                weights: rotate_vec(&model.weights, h, w, angle)?,
                intercept: model.intercept,
            },
            n_train: *n_train,
        }),
        TreeNode::Internal {
            normal,
            midpoint,
            half_width,
            left,
            right,
        } => Ok(TreeNode::Internal {
            normal: rotate_vec(normal, h, w, angle)?,
            midpoint: rotate_vec(midpoint, h, w, angle)?,
            half_width: half_width.clone(),
            left: Box::new(rotate_node(left, h, w, angle)?),
            right: Box::new(rotate_node(right, h, w, angle)?),
        }),
    }
}

pub(crate) fn fingerprint(x: &DesignMatrix, y: &[f64]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((x.rows() as u64).to_le_bytes());
    hasher.update((x.cols() as u64).to_le_bytes());
    for i in 0..x.rows() {
        for v in x.row(i) {
            hasher.update(v.to_le_bytes());
        }
    }
    for v in y {
        hasher.update(v.to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Trains a bootstrap forest on `(x, y)` whose rows are flattened
/// `grid_shape` images.
///
/// Tree `t` draws `⌊bootstrap_fraction · n⌋` rows with replacement (at
/// least one) from a generator seeded with `seed + t`, then grows on the
/// resample. Identical inputs and config reproduce the forest bit for bit.
pub fn train_forest(
    x: &DesignMatrix,
    y: &[f64],
    grid_shape: (usize, usize),
    cfg: &ForestConfig,
) -> Result<Forest> {
    cfg.validate()?;
    let n = x.rows();
    if n == 0 || y.len() != n {
        return Err(invalid_argument(format!(
            "{n} rows with {} targets",
            y.len()
        )));
    }
    let draws = ((cfg.bootstrap_fraction * n as f64).floor() as usize).max(1);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = cfg.seed.wrapping_add(t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
            let rows: Vec<usize> = (0..draws).map(|_| rng.random_range(0..n)).collect();
            let xt = x.select(&rows);
            let yt: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            grow_tree(&xt, &yt, grid_shape, &cfg.tree, tree_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        config: cfg.clone(),
        grid_shape,
        provenance: Provenance {
            seed: cfg.seed,
            train_fingerprint: fingerprint(x, y),
            model_name: String::new(),
        },
    })
}

/// Candidate orientations and scoring parameters for deployment-time search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrientationConfig {
    /// Candidate angles Φ in degrees; must contain 0.
    pub candidates: Vec<f64>,
    /// Stabilizer ε in the score denominator.
    pub epsilon: f64,
    /// Additive bonus to the 0° score (calibration experiment; 0 = off).
    pub zero_bonus: f64,
    /// Minimum score gain a nonzero angle needs over 0° (0 = off).
    pub min_gain: f64,
}

impl Default for OrientationConfig {
    fn default() -> Self {
        OrientationConfig {
            candidates: vec![-40.0, -20.0, 0.0, 20.0, 40.0],
            epsilon: 1e-8,
            zero_bonus: 0.0,
            min_gain: 0.0,
        }
    }
}

impl OrientationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(invalid_argument("candidate angle set is empty"));
        }
        if !self.candidates.iter().any(|a| *a == 0.0) {
            return Err(invalid_argument("candidate angles must include 0°"));
        }
        if self.candidates.iter().any(|a| !a.is_finite()) {
            return Err(invalid_argument("candidate angles must be finite"));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid_argument(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !self.zero_bonus.is_finite() || !self.min_gain.is_finite() {
            return Err(invalid_argument("score adjustments must be finite"));
        }
        Ok(())
    }
}

/// Rotated variants of one forest, built once per candidate angle.
#[derive(Debug, Clone)]
pub struct RotatedForestCache {
    cfg: OrientationConfig,
    /// `(angle, forest)` pairs in candidate order.
    entries: Vec<(f64, Forest)>,
}

impl RotatedForestCache {
    /// Rotates `base` once per candidate angle.
    pub fn build(base: &Forest, cfg: &OrientationConfig) -> Result<Self> {
        cfg.validate()?;
        let entries = cfg
            .candidates
            .par_iter()
            .map(|&angle| Ok((angle, base.rotate(angle)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RotatedForestCache {
            cfg: cfg.clone(),
            entries,
        })
    }

    pub fn config(&self) -> &OrientationConfig {
        &self.cfg
    }

    pub fn angles(&self) -> Vec<f64> {
        self.entries.iter().map(|(a, _)| *a).collect()
    }

    pub fn forest_at(&self, angle: f64) -> Option<&Forest> {
        self.entries
            .iter()
            .find(|(a, _)| *a == angle)
            .map(|(_, f)| f)
    }
}

/// Picks the orientation whose rotated forest routes `x` with the highest
/// confidence, then predicts under it.
///
/// Ties prefer the smaller |angle|, then the negative one. With a nonzero
/// `min_gain`, a nonzero angle must beat the 0° score by at least that much
/// or the search falls back to 0°.
pub fn orientation_search(cache: &RotatedForestCache, x: &[f64]) -> Result<(f64, f64)> {
    let (angle, mut preds) = orientation_search_joint(std::slice::from_ref(cache), x)?;
    Ok((angle, preds.pop().expect("one cache in, one prediction out")))
}

/// Orientation search over several forests that must share one angle: the
/// per-angle score is the *sum* of every cache's confidence, so a group of
/// models (e.g. per-class regression heads) agrees on a single orientation
/// for the input. Returns the chosen angle and each cache's prediction
/// under it, in cache order.
pub fn orientation_search_joint(
    caches: &[RotatedForestCache],
    x: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let first = caches
        .first()
        .ok_or_else(|| invalid_argument("orientation search needs at least one cache"))?;
    let cfg = &first.cfg;
    for c in &caches[1..] {
        if c.angles() != first.angles() {
            return Err(invalid_argument(
                "joint orientation search requires identical candidate angles",
            ));
        }
    }

    // Priority order: smaller |angle| first, negative before positive on
    // magnitude ties. Walking in this order with a strict `>` makes every
    // tie resolve toward the front, deterministically.
    let mut order: Vec<usize> = (0..first.entries.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (first.entries[i].0, first.entries[j].0);
        a.abs()
            .partial_cmp(&b.abs())
            .unwrap()
            .then(a.partial_cmp(&b).unwrap())
    });

    let mut zero_score = None;
    let mut best: Option<(f64, f64)> = None; // (score, angle)
    for &i in &order {
        let angle = first.entries[i].0;
        let mut score = 0.0;
        for cache in caches {
            score += cache.entries[i].1.confidence_score(x, cfg.epsilon)?;
        }
        if angle == 0.0 {
            score += cfg.zero_bonus;
            zero_score = Some(score);
        }
        match best {
            Some((s, _)) if score <= s => {}
            _ => best = Some((score, angle)),
        }
    }
    let (best_score, mut chosen) = best.expect("candidate set is non-empty");
    if cfg.min_gain > 0.0 && chosen != 0.0 {
        let zero = zero_score.expect("candidates include 0°");
        if best_score < zero + cfg.min_gain {
            chosen = 0.0;
        }
    }
    let preds = caches
        .iter()
        .map(|cache| {
            cache
                .forest_at(chosen)
                .expect("chosen angle comes from the cache")
                .predict(x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((chosen, preds))
}
