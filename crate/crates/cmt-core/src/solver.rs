//! Node-local ridge regression via minibatch Adam.
//!
//! Fits `min_{w,b} (1/2n)‖Xw + b·1 − y‖² + (λ/2)‖w‖²` with the intercept
//! unregularized. The fitted coefficient vector doubles as the candidate
//! split normal during tree growth, so fits must be deterministic under a
//! fixed seed: full-batch mode (n ≤ batch size) consumes no randomness at
//! all, minibatch mode reshuffles with a seeded generator once per epoch
//! and walks sequential batches.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_argument, CmtError, Result};
use crate::grid::ImageGrid;

/// Hyperparameters of the node-local ridge fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeConfig {
    /// L2 penalty λ on the weights (never the intercept).
    pub l2: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Step budget for a batch-sized problem; larger nodes get
    /// `base_iters · ceil(sqrt(n / batch_size))` steps.
    pub base_iters: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        RidgeConfig {
            l2: 0.1,
            learning_rate: 0.05,
            batch_size: 2048,
            base_iters: 120,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl RidgeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(invalid_argument(format!("l2 must be ≥ 0, got {}", self.l2)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid_argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(invalid_argument("batch size must be positive"));
        }
        if self.base_iters == 0 {
            return Err(invalid_argument("base iteration count must be positive"));
        }
        for (name, beta) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(invalid_argument(format!(
                    "adam {name} must lie in [0,1), got {beta}"
                )));
            }
        }
        Ok(())
    }

    /// Total Adam steps for an `n`-row problem.
    pub fn planned_iters(&self, n: usize) -> usize {
        let ratio = (n as f64 / self.batch_size as f64).max(1.0);
        self.base_iters * ratio.sqrt().ceil() as usize
    }
}

/// A linear model `x ↦ xᵀw + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(invalid_argument(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.weights.len()
            )));
        }
        Ok(dot(x, &self.weights) + self.intercept)
    }
}

/// Dense row-major n×D matrix of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(invalid_argument(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(DesignMatrix { rows, cols, values })
    }

    /// Stacks images (all the same shape) as flattened rows.
    pub fn from_images(images: &[ImageGrid]) -> Result<Self> {
        let Some(first) = images.first() else {
            return Err(invalid_argument("cannot build a matrix from zero images"));
        };
        let (h, w) = (first.height(), first.width());
        let mut values = Vec::with_capacity(images.len() * h * w);
        for img in images {
            if img.height() != h || img.width() != w {
                return Err(invalid_argument(format!(
                    "image shapes differ: {}x{} vs {h}x{w}",
                    img.height(),
                    img.width()
                )));
            }
            values.extend_from_slice(img.values());
        }
        Ok(DesignMatrix {
            rows: images.len(),
            cols: h * w,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    /// Materializes the given rows as a new matrix.
    pub fn select(&self, rows: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.cols);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            rows: rows.len(),
            cols: self.cols,
            values,
        }
    }
}

/// Dot product with four independent accumulators.
///
/// The split keeps a fixed summation order (deterministic output) while
/// breaking the serial dependency chain that throttles a naive loop.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Full-data ridge objective `(1/2n)‖Xw + b·1 − y‖² + (λ/2)‖w‖²`.
pub fn ridge_objective(x: &DesignMatrix, y: &[f64], model: &LinearModel, l2: f64) -> f64 {
    let n = x.rows();
    let mut sq = 0.0;
    for i in 0..n {
        let r = dot(x.row(i), &model.weights) + model.intercept - y[i];
        sq += r * r;
    }
    sq / (2.0 * n as f64) + 0.5 * l2 * dot(&model.weights, &model.weights)
}

/// Minibatch gradient of the ridge objective at `(w, b)` over `batch` rows:
/// `((1/m) X_Bᵀ r + λw, mean(r))` with `r = X_B w + b − y_B`. Returns the
/// gradient pair and the minibatch objective value. This is the exact
/// quantity the Adam loop steps on; public so external checks can probe it.
pub fn batch_gradient(
    x: &DesignMatrix,
    y: &[f64],
    w: &[f64],
    b: f64,
    l2: f64,
    batch: &[usize],
) -> (Vec<f64>, f64, f64) {
    let m = batch.len() as f64;
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_b = 0.0;
    let mut sq = 0.0;
    for &i in batch {
        let row = x.row(i);
        let r = dot(row, w) + b - y[i];
        sq += r * r;
        grad_b += r;
        for (g, &v) in grad_w.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    let w_sq = dot(w, w);
    for (g, &wi) in grad_w.iter_mut().zip(w) {
        *g = *g / m + l2 * wi;
    }
    (grad_w, grad_b / m, sq / (2.0 * m) + 0.5 * l2 * w_sq)
}

/// Fits the ridge objective with minibatch Adam.
///
/// Initialization is `w = 0, b = mean(y)` (the best constant model), so a
/// zero-target problem is already at its optimum. The step budget is
/// [`RidgeConfig::planned_iters`]; there is no early stopping.
pub fn fit_ridge_adam(x: &DesignMatrix, y: &[f64], cfg: &RidgeConfig) -> Result<LinearModel> {
    cfg.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(invalid_argument("cannot fit a model on zero samples"));
    }
    if y.len() != n {
        return Err(invalid_argument(format!(
            "{} targets for {n} rows",
            y.len()
        )));
    }
    let d = x.cols();
    let mut w = vec![0.0; d];
    let mut b = y.iter().sum::<f64>() / n as f64;
    if !b.is_finite() {
        return Err(CmtError::Numerical(
            "target mean is not finite at initialization".into(),
        ));
    }

    let iters = cfg.planned_iters(n);
    let full_batch = n <= cfg.batch_size;
    // Full-batch fits consume no randomness; minibatch fits reshuffle the
    // row order once per epoch and walk it in sequential batches.
    let mut rng = if full_batch {
        None
    } else {
        Some(ChaCha8Rng::seed_from_u64(cfg.seed))
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut pos = n; // forces a shuffle before the first minibatch

    let mut m_w = vec![0.0; d];
    let mut v_w = vec![0.0; d];
    let (mut m_b, mut v_b) = (0.0, 0.0);
    let mut batch_buf: Vec<usize>;

    for step in 1..=iters {
        let batch: &[usize] = if full_batch {
            &order
        } else {
            if pos >= n {
                order.shuffle(rng.as_mut().expect("minibatch mode has an rng"));
                pos = 0;
            }
            let end = (pos + cfg.batch_size).min(n);
            batch_buf = order[pos..end].to_vec();
            pos = end;
            &batch_buf
        };
        let (grad_w, grad_b, loss) = batch_gradient(x, y, &w, b, cfg.l2, batch);
        if !loss.is_finite() {
            return Err(CmtError::Numerical(format!(
                "non-finite minibatch loss {loss} at step {step}/{iters} \
                 (n={n}, d={d}, batch={})",
                batch.len()
            )));
        }
        let bc1 = 1.0 - cfg.adam_beta1.powi(step as i32);
        let bc2 = 1.0 - cfg.adam_beta2.powi(step as i32);
        let scale = cfg.learning_rate / bc1;
        for j in 0..d {
            let g = grad_w[j];
            m_w[j] = cfg.adam_beta1 * m_w[j] + (1.0 - cfg.adam_beta1) * g;
            v_w[j] = cfg.adam_beta2 * v_w[j] + (1.0 - cfg.adam_beta2) * g * g;
            w[j] -= scale * m_w[j] / ((v_w[j] / bc2).sqrt() + cfg.adam_eps);
        }
        m_b = cfg.adam_beta1 * m_b + (1.0 - cfg.adam_beta1) * grad_b;
        v_b = cfg.adam_beta2 * v_b + (1.0 - cfg.adam_beta2) * grad_b * grad_b;
        b -= scale * m_b / ((v_b / bc2).sqrt() + cfg.adam_eps);
    }

    Ok(LinearModel {
        weights: w,
        intercept: b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    fn random_problem(n: usize, d: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = DesignMatrix::new(n, d, values).unwrap();
        let w_true: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| dot(x.row(i), &w_true) + 0.7 + rng.random_range(-0.05..0.05))
            .collect();
        (x, y)
    }

    // Closed-form oracle: solve (XᶜᵀXᶜ/n + λI) w = Xᶜᵀyᶜ/n on centered data,
    // then recover the intercept from the means.
    fn closed_form_ridge(x: &DesignMatrix, y: &[f64], l2: f64) -> LinearModel {
        let (n, d) = (x.rows(), x.cols());
        let mut col_mean = vec![0.0; d];
        for i in 0..n {
            for (m, &v) in col_mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        for m in &mut col_mean {
            *m /= n as f64;
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let xc = DMatrix::from_fn(n, d, |i, j| x.row(i)[j] - col_mean[j]);
        let yc = DVector::from_fn(n, |i, _| y[i] - y_mean);
        let a = (xc.transpose() * &xc) / n as f64 + DMatrix::identity(d, d) * l2;
        let rhs = xc.transpose() * yc / n as f64;
        let w = a.lu().solve(&rhs).expect("ridge system is SPD");
        let intercept = y_mean - w.iter().zip(&col_mean).map(|(a, b)| a * b).sum::<f64>();
        LinearModel {
            weights: w.iter().copied().collect(),
            intercept,
        }
    }

    #[test]
    fn single_sample_is_interpolated() {
        let x = DesignMatrix::new(1, 2, vec![1.0, 0.0]).unwrap();
        let cfg = RidgeConfig {
            l2: 0.0,
            ..RidgeConfig::default()
        };
        let model = fit_ridge_adam(&x, &[2.0], &cfg).unwrap();
        let pred = model.predict(&[1.0, 0.0]).unwrap();
        assert!((pred - 2.0).abs() <= 1e-3, "prediction {pred}");
    }

    #[test]
    fn zero_targets_stay_at_origin() {
        let (x, _) = random_problem(50, 8, 5);
        let y = vec![0.0; 50];
        let model = fit_ridge_adam(&x, &y, &RidgeConfig::default()).unwrap();
        let loss = ridge_objective(&x, &y, &model, 0.1);
        assert!(loss <= 1e-10, "loss {loss}");
        assert!(model.weights.iter().all(|w| w.abs() < 1e-6));
        assert!(model.intercept.abs() < 1e-6);
    }

    #[test]
    fn fit_approaches_closed_form_solution() {
        let (x, y) = random_problem(500, 20, 11);
        let cfg = RidgeConfig {
            base_iters: 1200,
            ..RidgeConfig::default()
        };
        let fitted = fit_ridge_adam(&x, &y, &cfg).unwrap();
        let oracle = closed_form_ridge(&x, &y, cfg.l2);
        let dist: f64 = fitted
            .weights
            .iter()
            .zip(&oracle.weights)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm = dot(&oracle.weights, &oracle.weights).sqrt();
        assert!(
            dist / norm <= 0.05,
            "relative weight distance {}",
            dist / norm
        );
    }

    #[test]
    fn long_fit_objective_is_near_optimal() {
        let (x, y) = random_problem(300, 20, 13);
        let cfg = RidgeConfig {
            base_iters: 1200, // 10× the default budget, full batch
            ..RidgeConfig::default()
        };
        let fitted = fit_ridge_adam(&x, &y, &cfg).unwrap();
        let oracle = closed_form_ridge(&x, &y, cfg.l2);
        let got = ridge_objective(&x, &y, &fitted, cfg.l2);
        let best = ridge_objective(&x, &y, &oracle, cfg.l2);
        assert!(
            got <= best * 1.01,
            "objective {got} vs closed-form {best}"
        );
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = random_problem(100, 15, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let batch: Vec<usize> = (0..32).map(|_| rng.random_range(0..100)).collect();
        let l2 = 0.1;
        let h = 1e-5;
        let loss_at = |w: &[f64], b: f64| batch_gradient(&x, &y, w, b, l2, &batch).2;
        for _ in 0..20 {
            let w: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: f64 = rng.random_range(-1.0..1.0);
            let (grad_w, grad_b, _) = batch_gradient(&x, &y, &w, b, l2, &batch);
            for j in 0..15 {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                let fd = (loss_at(&wp, b) - loss_at(&wm, b)) / (2.0 * h);
                let scale = grad_w[j].abs().max(1.0);
                assert!(
                    (grad_w[j] - fd).abs() / scale <= 1e-5,
                    "coord {j}: analytic {} vs fd {fd}",
                    grad_w[j]
                );
            }
            let fd_b = (loss_at(&w, b + h) - loss_at(&w, b - h)) / (2.0 * h);
            assert!((grad_b - fd_b).abs() / grad_b.abs().max(1.0) <= 1e-5);
        }
    }

    #[test]
    fn fits_are_bit_deterministic() {
        let (x, y) = random_problem(3000, 10, 23);
        let cfg = RidgeConfig {
            base_iters: 30,
            seed: 42,
            ..RidgeConfig::default()
        };
        let a = fit_ridge_adam(&x, &y, &cfg).unwrap();
        let b = fit_ridge_adam(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let c = fit_ridge_adam(
            &x,
            &y,
            &RidgeConfig {
                seed: 43,
                ..cfg
            },
        )
        .unwrap();
        assert_ne!(a, c, "different shuffle seeds should change the path");
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let (x, y) = random_problem(200, 10, 29);
        let norms: Vec<f64> = [0.0, 0.1, 1.0]
            .iter()
            .map(|&l2| {
                let cfg = RidgeConfig {
                    l2,
                    base_iters: 2000,
                    ..RidgeConfig::default()
                };
                let m = fit_ridge_adam(&x, &y, &cfg).unwrap();
                dot(&m.weights, &m.weights).sqrt()
            })
            .collect();
        assert!(norms[2] <= norms[1] && norms[1] <= norms[0], "{norms:?}");
    }

    #[test]
    fn planned_iters_scales_with_sqrt_ratio() {
        let cfg = RidgeConfig::default(); // base 120, batch 2048
        assert_eq!(cfg.planned_iters(1), 120);
        assert_eq!(cfg.planned_iters(2048), 120);
        assert_eq!(cfg.planned_iters(2049), 240); // ceil over the real ratio
        assert_eq!(cfg.planned_iters(8192), 240);
        assert_eq!(cfg.planned_iters(8193), 360);
    }

    #[test]
    fn non_finite_inputs_surface_as_numerical_errors() {
        let mut values = vec![0.5; 20];
        values[7] = f64::NAN;
        let x = DesignMatrix::new(4, 5, values).unwrap();
        match fit_ridge_adam(&x, &[1.0, 2.0, 3.0, 4.0], &RidgeConfig::default()) {
            Err(CmtError::Numerical(msg)) => {
                assert!(msg.contains("step"), "diagnostics missing: {msg}")
            }
            other => panic!("expected numerical error, got {other:?}"),
        }
        let x = DesignMatrix::new(2, 2, vec![1.0; 4]).unwrap();
        match fit_ridge_adam(&x, &[f64::INFINITY, 0.0], &RidgeConfig::default()) {
            Err(CmtError::Numerical(_)) => {}
            other => panic!("expected numerical error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_mismatched_inputs() {
        assert!(DesignMatrix::new(2, 3, vec![0.0; 5]).is_err());
        assert!(DesignMatrix::from_images(&[]).is_err());
        let imgs = vec![ImageGrid::zeros(2, 2), ImageGrid::zeros(3, 2)];
        assert!(DesignMatrix::from_images(&imgs).is_err());
        let x = DesignMatrix::new(0, 4, vec![]).unwrap();
        assert!(fit_ridge_adam(&x, &[], &RidgeConfig::default()).is_err());
        let x = DesignMatrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(fit_ridge_adam(&x, &[1.0, 2.0], &RidgeConfig::default()).is_err());
    }

    #[test]
    fn predict_evaluates_the_affine_form() {
        let model = LinearModel {
            weights: vec![0.0; 3],
            intercept: 3.0,
        };
        assert_eq!(model.predict(&[9.0, -2.0, 4.4]).unwrap(), 3.0);
        let unit = LinearModel {
            weights: vec![0.0, 1.0, 0.0],
            intercept: 0.0,
        };
        assert_eq!(unit.predict(&[1.0, 5.0, 7.0]).unwrap(), 5.0);
        assert!(unit.predict(&[1.0, 2.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let w: Vec<f64> = (0..37).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..37).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = LinearModel {
            weights: w.clone(),
            intercept: 0.25,
        };
        let naive: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + 0.25;
        assert!((model.predict(&x).unwrap() - naive).abs() < 1e-12);
    }

    #[test]
    fn select_copies_requested_rows() {
        let x = DesignMatrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let sub = x.select(&[2, 0]);
        assert_eq!(sub.rows(), 2);
        assert_eq!(sub.row(0), &[5.0, 6.0]);
        assert_eq!(sub.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let good = RidgeConfig::default();
        assert!(good.validate().is_ok());
        let cases = [
            RidgeConfig { l2: -0.1, ..good },
            RidgeConfig { learning_rate: 0.0, ..good },
            RidgeConfig { batch_size: 0, ..good },
            RidgeConfig { base_iters: 0, ..good },
            RidgeConfig { adam_beta1: 1.0, ..good },
            RidgeConfig { adam_beta2: -0.5, ..good },
        ];
        for bad in cases {
            assert!(bad.validate().is_err(), "{bad:?} should be rejected");
        }
    }
}
