//! Experiment harness: the model zoo, rotation sweeps, and report files.
//!
//! A sweep trains each model variant once on upright data, then measures it
//! on test inputs rotated through a ladder of angles while the targets stay
//! pinned to the unrotated images. Models that support orientation search
//! get a second row driven through the rotated-forest cache. Reports land
//! as a CSV (one row per model variant, one column per angle plus the
//! average), a JSON manifest carrying the full configuration echo and
//! timings, and two-column per-model files ready for plotting.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{perimeter_target, MnistSet, PerimeterConfig};
use crate::error::{invalid_argument, CmtError, Result};
use crate::forest::{
    fingerprint, orientation_search, orientation_search_joint, train_forest, Forest, ForestConfig,
    OrientationConfig, Provenance, RotatedForestCache,
};
use crate::rng::derive_seed;
use crate::solver::{fit_ridge_adam, DesignMatrix};
use crate::tree::{Gating, TreeConfig, TreeNode};

const TRAIN_SUBSET_SALT: u64 = 0x7472_6169;
const TEST_SUBSET_SALT: u64 = 0x7465_7374;

/// Default size of the seeded training subset.
pub const DESK_TRAIN: usize = 5000;
/// Default size of the seeded test subset.
pub const DESK_TEST: usize = 2000;

/// The evaluation ladder of input rotations, in degrees.
pub fn default_eval_angles() -> Vec<f64> {
    vec![-60.0, -40.0, -20.0, 0.0, 20.0, 40.0, 60.0]
}

/// The model zoo. Each member fixes which split-shaping stages run and
/// whether gating is forced hard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Single ridge fit on the whole training subset; no tree.
    Ridge,
    /// Plain model-tree forest: no smoothing, no pruning, no tilt; hard gating.
    StdForest,
    /// Smoothing only.
    CmtConv,
    /// Smoothing + tilt dominance.
    CmtConvTilt,
    /// Smoothing + importance pruning.
    CmtConvPrune,
    /// All three shaping stages.
    CmtFull,
    /// All three stages with gating forced hard.
    CmtFullHg,
}

impl ModelKind {
    pub fn all() -> [ModelKind; 7] {
        [
            ModelKind::Ridge,
            ModelKind::StdForest,
            ModelKind::CmtConv,
            ModelKind::CmtConvTilt,
            ModelKind::CmtConvPrune,
            ModelKind::CmtFull,
            ModelKind::CmtFullHg,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ridge => "Ridge",
            ModelKind::StdForest => "StdForest",
            ModelKind::CmtConv => "CMT-Conv",
            ModelKind::CmtConvTilt => "CMT-Conv+Tilt",
            ModelKind::CmtConvPrune => "CMT-Conv+Prune",
            ModelKind::CmtFull => "CMT-Full",
            ModelKind::CmtFullHg => "CMT-Full-HG",
        }
    }

    pub fn from_name(name: &str) -> Result<ModelKind> {
        ModelKind::all()
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                invalid_argument(format!(
                    "unknown model '{name}'; expected one of {}",
                    ModelKind::all().map(|k| k.name()).join(", ")
                ))
            })
    }

    /// Whether orientation search is part of this model's standard protocol.
    pub fn os_by_default(&self) -> bool {
        matches!(
            self,
            ModelKind::CmtConv | ModelKind::CmtConvTilt | ModelKind::CmtFull
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One entry in a sweep: a model plus whether to also run its
/// orientation-search variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub os_enabled: bool,
}

impl ModelSpec {
    /// The standard protocol: orientation search exactly where the model
    /// zoo prescribes it.
    pub fn standard(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            os_enabled: kind.os_by_default(),
        }
    }

    pub fn all_standard() -> Vec<ModelSpec> {
        ModelKind::all().into_iter().map(ModelSpec::standard).collect()
    }
}

/// Derives the forest configuration for a tree-based zoo member from the
/// shared base. `Ridge` has no forest configuration.
pub fn forest_config_for(kind: ModelKind, base: &ForestConfig) -> Option<ForestConfig> {
    let mut cfg = base.clone();
    let s = &mut cfg.tree.shaping;
    match kind {
        ModelKind::Ridge => return None,
        ModelKind::StdForest => {
            s.use_conv = false;
            s.use_prune = false;
            s.use_tilt = false;
            cfg.tree.gating = Gating::Hard;
        }
        ModelKind::CmtConv => {
            s.use_conv = true;
            s.use_prune = false;
            s.use_tilt = false;
        }
        ModelKind::CmtConvTilt => {
            s.use_conv = true;
            s.use_prune = false;
            s.use_tilt = true;
        }
        ModelKind::CmtConvPrune => {
            s.use_conv = true;
            s.use_prune = true;
            s.use_tilt = false;
        }
        ModelKind::CmtFull => {
            s.use_conv = true;
            s.use_prune = true;
            s.use_tilt = true;
        }
        ModelKind::CmtFullHg => {
            s.use_conv = true;
            s.use_prune = true;
            s.use_tilt = true;
            cfg.tree.gating = Gating::Hard;
        }
    }
    Some(cfg)
}

/// Which benchmark a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Perimeter,
    Classification,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Perimeter => "perimeter",
            TaskKind::Classification => "classification",
        })
    }
}

/// Everything a sweep needs beyond the datasets. Echoed verbatim into the
/// run manifest so a report is reproducible from its own artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Evaluation angles Θ.
    pub angles: Vec<f64>,
    /// Candidate grid Φ and scoring knobs for orientation search.
    pub orientation: OrientationConfig,
    /// Base forest configuration; per-model flags are derived from it.
    pub forest: ForestConfig,
    pub perimeter: PerimeterConfig,
    /// Seeded training subset size (clamped to the dataset).
    pub train_subset: usize,
    /// Seeded test subset size (clamped to the dataset).
    pub test_subset: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            angles: default_eval_angles(),
            orientation: OrientationConfig::default(),
            forest: ForestConfig::default(),
            perimeter: PerimeterConfig::default(),
            train_subset: DESK_TRAIN,
            test_subset: DESK_TEST,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(invalid_argument("evaluation angle list is empty"));
        }
        if self.angles.iter().any(|a| !a.is_finite()) {
            return Err(invalid_argument("evaluation angles must be finite"));
        }
        if self.train_subset == 0 || self.test_subset == 0 {
            return Err(invalid_argument("subset sizes must be at least 1"));
        }
        self.orientation.validate()?;
        self.forest.validate()?;
        self.perimeter.validate()
    }
}

/// One line of a sweep report: a model variant measured at every angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    /// "normal" or "os".
    pub variant: String,
    /// Populated when training or evaluation failed; the metric fields are
    /// then empty.
    pub error: Option<String>,
    pub per_angle: Vec<f64>,
    pub average: Option<f64>,
    /// Wall-clock training time for the model (same value on both of a
    /// model's rows). Never written to the CSV.
    pub train_seconds: f64,
}

impl ReportRow {
    fn ok(model: &str, variant: &str, per_angle: Vec<f64>, train_seconds: f64) -> ReportRow {
        let average = per_angle.iter().sum::<f64>() / per_angle.len() as f64;
        ReportRow {
            model: model.to_string(),
            variant: variant.to_string(),
            error: None,
            per_angle,
            average: Some(average),
            train_seconds,
        }
    }

    fn failed(model: &str, variant: &str, err: &CmtError, train_seconds: f64) -> ReportRow {
        ReportRow {
            model: model.to_string(),
            variant: variant.to_string(),
            error: Some(err.to_string()),
            per_angle: Vec::new(),
            average: None,
            train_seconds,
        }
    }
}

/// A finished sweep: metric rows plus everything needed to rerun it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: TaskKind,
    pub angles: Vec<f64>,
    pub seed: u64,
    pub train_fingerprint: String,
    pub config: SweepConfig,
    pub rows: Vec<ReportRow>,
}

/// Index of the best score, ties to the smallest class.
pub fn argmax_class(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Mean absolute error of `predict` over the rows of `x`, parallel over
/// samples with a sequential final sum so results never depend on thread
/// scheduling.
fn mean_abs_err(
    predict: &(impl Fn(&[f64]) -> Result<f64> + Sync),
    x: &DesignMatrix,
    y: &[f64],
) -> Result<f64> {
    let errs = (0..x.rows())
        .into_par_iter()
        .map(|i| Ok((predict(x.row(i))? - y[i]).abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Fraction of rows whose argmax over `scores` matches the label.
fn accuracy(
    scores: &(impl Fn(usize, &[f64]) -> Result<Vec<f64>> + Sync),
    x: &DesignMatrix,
    labels: &[u8],
) -> Result<f64> {
    let hits = (0..x.rows())
        .into_par_iter()
        .map(|i| Ok(argmax_class(&scores(i, x.row(i))?) == labels[i] as usize))
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
}

/// Trains one zoo member on `(x, y)`. `Ridge` becomes a single-leaf,
/// single-tree forest so the whole zoo shares one prediction interface.
pub fn train_spec_model(
    kind: ModelKind,
    x: &DesignMatrix,
    y: &[f64],
    grid_shape: (usize, usize),
    cfg: &SweepConfig,
) -> Result<Forest> {
    let mut forest = match forest_config_for(kind, &cfg.forest) {
        Some(fc) => train_forest(x, y, grid_shape, &fc)?,
        None => {
            let mut ridge = cfg.forest.tree.ridge.clone();
            ridge.seed = cfg.forest.seed;
            let model = fit_ridge_adam(x, y, &ridge)?;
            let tree = TreeNode::Leaf {
                model,
                n_train: x.rows(),
            };
            let config = ForestConfig {
                n_trees: 1,
                bootstrap_fraction: 1.0,
                tree: TreeConfig {
                    max_depth: 0,
                    min_leaf: 1,
                    ridge,
                    ..cfg.forest.tree.clone()
                },
                seed: cfg.forest.seed,
            };
            Forest::from_parts(
                vec![tree],
                config,
                grid_shape,
                Provenance {
                    seed: cfg.forest.seed,
                    train_fingerprint: fingerprint(x, y),
                    model_name: String::new(),
                },
            )
        }
    };
    forest.set_model_name(kind.name());
    Ok(forest)
}

/// Trains the ten one-vs-rest heads for a classification model. Head `k`
/// regresses the indicator of class `k`; its seed is derived from the base
/// seed and the class index so every head gets its own stream.
pub fn train_classification_heads(
    kind: ModelKind,
    x: &DesignMatrix,
    labels: &[u8],
    grid_shape: (usize, usize),
    cfg: &SweepConfig,
) -> Result<Vec<Forest>> {
    (0..10u8)
        .map(|class| {
            let yk: Vec<f64> = labels
                .iter()
                .map(|&l| if l == class { 1.0 } else { 0.0 })
                .collect();
            let mut cfg_k = cfg.clone();
            cfg_k.forest.seed = derive_seed(cfg.forest.seed, class as u64);
            let mut head = train_spec_model(kind, x, &yk, grid_shape, &cfg_k)?;
            head.set_model_name(&format!("{} head {class}", kind.name()));
            Ok(head)
        })
        .collect()
}

fn rotated_design(set: &MnistSet, angle: f64) -> Result<DesignMatrix> {
    let rotated = set
        .images
        .iter()
        .map(|img| img.rotate_bilinear(angle, 0.0))
        .collect::<Result<Vec<_>>>()?;
    DesignMatrix::from_images(&rotated)
}

/// Measures one trained forest on the perimeter task: MAE at every angle,
/// inputs rotated, targets pinned to the unrotated images. Returns the
/// "normal" row, plus an "os" row when an orientation config is given.
pub fn eval_perimeter_model(
    forest: &Forest,
    test: &MnistSet,
    angles: &[f64],
    perimeter: &PerimeterConfig,
    os: Option<&OrientationConfig>,
) -> Result<Vec<(String, Vec<f64>)>> {
    if test.is_empty() {
        return Err(invalid_argument("test set is empty"));
    }
    let targets: Vec<f64> = test
        .images
        .iter()
        .map(|img| perimeter_target(img, perimeter))
        .collect();
    let mut rows = Vec::new();
    let mut normal = Vec::with_capacity(angles.len());
    let rotated: Vec<DesignMatrix> = angles
        .iter()
        .map(|&a| rotated_design(test, a))
        .collect::<Result<_>>()?;
    for xr in &rotated {
        normal.push(mean_abs_err(
            &|p: &[f64]| forest.predict(p),
            xr,
            &targets,
        )?);
    }
    rows.push(("normal".to_string(), normal));
    if let Some(os_cfg) = os {
        let cache = RotatedForestCache::build(forest, os_cfg)?;
        let mut searched = Vec::with_capacity(angles.len());
        for xr in &rotated {
            searched.push(mean_abs_err(
                &|p: &[f64]| orientation_search(&cache, p).map(|(_, pred)| pred),
                xr,
                &targets,
            )?);
        }
        rows.push(("os".to_string(), searched));
    }
    Ok(rows)
}

/// Measures ten classification heads: accuracy of the argmax over head
/// scores at every angle. The "os" row (when requested) picks one angle per
/// input from the heads' summed confidence.
pub fn eval_classification_model(
    heads: &[Forest],
    test: &MnistSet,
    angles: &[f64],
    os: Option<&OrientationConfig>,
) -> Result<Vec<(String, Vec<f64>)>> {
    if heads.len() != 10 {
        return Err(invalid_argument(format!(
            "classification needs 10 heads, got {}",
            heads.len()
        )));
    }
    if test.is_empty() {
        return Err(invalid_argument("test set is empty"));
    }
    let rotated: Vec<DesignMatrix> = angles
        .iter()
        .map(|&a| rotated_design(test, a))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut normal = Vec::with_capacity(angles.len());
    for xr in &rotated {
        normal.push(accuracy(
            &|_i: usize, p: &[f64]| heads.iter().map(|h| h.predict(p)).collect(),
            xr,
            &test.labels,
        )?);
    }
    rows.push(("normal".to_string(), normal));
    if let Some(os_cfg) = os {
        let caches = heads
            .iter()
            .map(|h| RotatedForestCache::build(h, os_cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut searched = Vec::with_capacity(angles.len());
        for xr in &rotated {
            searched.push(accuracy(
                &|_i: usize, p: &[f64]| {
                    orientation_search_joint(&caches, p).map(|(_, preds)| preds)
                },
                xr,
                &test.labels,
            )?);
        }
        rows.push(("os".to_string(), searched));
    }
    Ok(rows)
}

/// Draws the seeded train/test subsets a sweep runs on. Public so one-off
/// training and evaluation hit the same samples as a sweep with equal
/// settings.
pub fn subset_pair(
    train: &MnistSet,
    test: &MnistSet,
    cfg: &SweepConfig,
) -> Result<(MnistSet, MnistSet)> {
    if train.is_empty() || test.is_empty() {
        return Err(invalid_argument("train and test sets must be non-empty"));
    }
    let seed = cfg.forest.seed;
    let train_sub = train.seeded_subset(cfg.train_subset, derive_seed(seed, TRAIN_SUBSET_SALT));
    let test_sub = test.seeded_subset(cfg.test_subset, derive_seed(seed, TEST_SUBSET_SALT));
    Ok((train_sub, test_sub))
}

fn grid_shape_of(set: &MnistSet) -> (usize, usize) {
    (set.images[0].height(), set.images[0].width())
}

/// Trained forests a sweep produced, keyed by a filesystem-safe stem.
pub type NamedForests = Vec<(String, Forest)>;

/// Lowercased name with every non-alphanumeric run collapsed to `-`.
pub fn slug(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut gap = false;
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            if gap && !out.is_empty() {
                out.push('-');
            }
            gap = false;
            out.push(ch.to_ascii_lowercase());
        } else {
            gap = true;
        }
    }
    out
}

/// Rotation sweep on the perimeter task. Each spec trains once on the
/// upright subset; per-model failures are recorded in their rows and the
/// sweep continues. Returns the report and every trained forest.
pub fn run_perimeter_sweep(
    train: &MnistSet,
    test: &MnistSet,
    specs: &[ModelSpec],
    cfg: &SweepConfig,
) -> Result<(SweepReport, NamedForests)> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(invalid_argument("no models requested"));
    }
    let (train_sub, test_sub) = subset_pair(train, test, cfg)?;
    let grid_shape = grid_shape_of(&train_sub);
    let x = DesignMatrix::from_images(&train_sub.images)?;
    let y: Vec<f64> = train_sub
        .images
        .iter()
        .map(|img| perimeter_target(img, &cfg.perimeter))
        .collect();

    let mut rows = Vec::new();
    let mut models = NamedForests::new();
    for spec in specs {
        let name = spec.kind.name();
        let os = spec.os_enabled.then_some(&cfg.orientation);
        let started = Instant::now();
        let trained = train_spec_model(spec.kind, &x, &y, grid_shape, cfg);
        let train_seconds = started.elapsed().as_secs_f64();
        let measured = trained.and_then(|forest| {
            models.push((slug(name), forest.clone()));
            eval_perimeter_model(&forest, &test_sub, &cfg.angles, &cfg.perimeter, os)
        });
        match measured {
            Ok(variants) => {
                for (variant, per_angle) in variants {
                    rows.push(ReportRow::ok(name, &variant, per_angle, train_seconds));
                }
            }
            Err(e) => {
                rows.push(ReportRow::failed(name, "normal", &e, train_seconds));
                if spec.os_enabled {
                    rows.push(ReportRow::failed(name, "os", &e, train_seconds));
                }
            }
        }
    }

    let report = SweepReport {
        task: TaskKind::Perimeter,
        angles: cfg.angles.clone(),
        seed: cfg.forest.seed,
        train_fingerprint: fingerprint(&x, &y),
        config: cfg.clone(),
        rows,
    };
    Ok((report, models))
}

/// Rotation sweep on classification-as-regression: ten one-vs-rest heads
/// per model, class = argmax over head scores. The orientation-search
/// variant picks one angle per input from the summed confidence of all ten
/// heads, then every head predicts under it.
pub fn run_classification_sweep(
    train: &MnistSet,
    test: &MnistSet,
    specs: &[ModelSpec],
    cfg: &SweepConfig,
) -> Result<(SweepReport, NamedForests)> {
    cfg.validate()?;
    if specs.is_empty() {
        return Err(invalid_argument("no models requested"));
    }
    let (train_sub, test_sub) = subset_pair(train, test, cfg)?;
    let grid_shape = grid_shape_of(&train_sub);
    let x = DesignMatrix::from_images(&train_sub.images)?;
    let label_trace: Vec<f64> = train_sub.labels.iter().map(|&l| l as f64).collect();

    let mut rows = Vec::new();
    let mut models = NamedForests::new();
    for spec in specs {
        let name = spec.kind.name();
        let os = spec.os_enabled.then_some(&cfg.orientation);
        let started = Instant::now();
        let trained = train_classification_heads(spec.kind, &x, &train_sub.labels, grid_shape, cfg);
        let train_seconds = started.elapsed().as_secs_f64();
        let measured = trained.and_then(|heads| {
            for (k, head) in heads.iter().enumerate() {
                models.push((format!("{}-head{k}", slug(name)), head.clone()));
            }
            eval_classification_model(&heads, &test_sub, &cfg.angles, os)
        });
        match measured {
            Ok(variants) => {
                for (variant, per_angle) in variants {
                    rows.push(ReportRow::ok(name, &variant, per_angle, train_seconds));
                }
            }
            Err(e) => {
                rows.push(ReportRow::failed(name, "normal", &e, train_seconds));
                if spec.os_enabled {
                    rows.push(ReportRow::failed(name, "os", &e, train_seconds));
                }
            }
        }
    }

    let report = SweepReport {
        task: TaskKind::Classification,
        angles: cfg.angles.clone(),
        seed: cfg.forest.seed,
        train_fingerprint: fingerprint(&x, &label_trace),
        config: cfg.clone(),
        rows,
    };
    Ok((report, models))
}

fn io_ctx(path: &Path, e: std::io::Error) -> CmtError {
    CmtError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn fmt_angle(a: f64) -> String {
    format!("{a}")
}

/// Writes the report artifacts into `dir`: the per-task CSV (metrics only,
/// no timings, so identical runs emit identical bytes), the JSON manifest
/// with the full report, and per-row angle/metric plot files. Returns every
/// path written.
pub fn emit_report(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_ctx(dir, e))?;
    let mut written = Vec::new();

    let mut csv = String::from("model,variant,status");
    for a in &report.angles {
        csv.push_str(&format!(",theta_{}", fmt_angle(*a)));
    }
    csv.push_str(",average\n");
    for row in &report.rows {
        let status = match &row.error {
            None => "ok".to_string(),
            Some(msg) => msg.replace([',', '\n'], ";"),
        };
        csv.push_str(&format!("{},{},{status}", row.model, row.variant));
        if row.error.is_none() {
            for v in &row.per_angle {
                csv.push_str(&format!(",{v}"));
            }
            csv.push_str(&format!(",{}\n", row.average.expect("ok rows carry an average")));
        } else {
            for _ in 0..=report.angles.len() {
                csv.push(',');
            }
            csv.push('\n');
        }
    }
    let csv_path = dir.join(format!("{}_sweep.csv", report.task));
    fs::write(&csv_path, csv).map_err(|e| io_ctx(&csv_path, e))?;
    written.push(csv_path);

    let manifest_path = dir.join(format!("{}_manifest.json", report.task));
    let manifest = serde_json::to_string_pretty(report)
        .map_err(|e| CmtError::Format(format!("manifest encoding failed: {e}")))?;
    fs::write(&manifest_path, manifest).map_err(|e| io_ctx(&manifest_path, e))?;
    written.push(manifest_path);

    let plot_dir = dir.join("plots");
    fs::create_dir_all(&plot_dir).map_err(|e| io_ctx(&plot_dir, e))?;
    for row in &report.rows {
        if row.error.is_some() {
            continue;
        }
        let mut dat = String::new();
        for (a, v) in report.angles.iter().zip(&row.per_angle) {
            dat.push_str(&format!("{a} {v}\n"));
        }
        let path = plot_dir.join(format!(
            "{}_{}_{}.dat",
            report.task,
            slug(&row.model),
            row.variant
        ));
        fs::write(&path, dat).map_err(|e| io_ctx(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
