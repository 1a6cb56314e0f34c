//! Convolutional model tree forests for image regression.
//!
//! The crate trains forests of oblique model trees whose split hyperplanes
//! are shaped on the image lattice — smoothed, pruned to a sparse support,
//! and tilted toward a dominant pixel — so that a trained forest can later be
//! *reoriented*: its coefficient vectors are rotated like images and the best
//! orientation for each input is picked at deployment time by a routing
//! -margin score. No retraining, no input-side preprocessing.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod forest;
pub mod grid;
mod rng;
pub mod solver;
pub mod store;
pub mod synth;
pub mod tree;

pub use dataset::{MnistSet, PerimeterConfig, RegressionDataset, Split};
pub use error::{CmtError, Result};
pub use eval::{
    emit_report, eval_classification_model, eval_perimeter_model, run_classification_sweep,
    run_perimeter_sweep, subset_pair, train_classification_heads, train_spec_model, ModelKind,
    ModelSpec, SweepConfig, SweepReport, TaskKind,
};
pub use forest::{
    orientation_search, train_forest, Forest, ForestConfig, OrientationConfig, Provenance,
    RotatedForestCache,
};
pub use grid::{GaussianKernel, ImageGrid};
pub use solver::{DesignMatrix, LinearModel, RidgeConfig};
pub use store::{load_forest, save_forest};
pub use tree::{Gating, SplitShapingConfig, TreeConfig, TreeNode};
