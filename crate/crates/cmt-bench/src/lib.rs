//! Shared fixtures for the criterion benchmarks.

use cmt_core::dataset::perimeter_target;
use cmt_core::synth::synthetic_set;
use cmt_core::{DesignMatrix, Forest, ForestConfig, MnistSet, PerimeterConfig, Split};

/// A small synthetic training problem: images, design matrix, and perimeter
/// targets. Deterministic, so repeated bench runs see the same inputs.
pub struct Fixture {
    pub set: MnistSet,
    pub x: DesignMatrix,
    pub y: Vec<f64>,
    pub grid_shape: (usize, usize),
}

pub fn fixture(n: usize) -> Fixture {
    let set = synthetic_set(n, Split::Train, 42);
    let x = DesignMatrix::from_images(&set.images).expect("uniform image shapes");
    let perimeter = PerimeterConfig::default();
    let y = set
        .images
        .iter()
        .map(|img| perimeter_target(img, &perimeter))
        .collect();
    let grid_shape = (set.images[0].height(), set.images[0].width());
    Fixture {
        set,
        x,
        y,
        grid_shape,
    }
}

/// Trains the default three-tree forest on a [`fixture`] problem.
pub fn trained_forest(n: usize) -> (Fixture, Forest) {
    let fx = fixture(n);
    let cfg = ForestConfig {
        tree: cmt_core::TreeConfig {
            min_leaf: (n / 8).max(20),
            ..cmt_core::TreeConfig::default()
        },
        ..ForestConfig::default()
    };
    let forest =
        cmt_core::train_forest(&fx.x, &fx.y, fx.grid_shape, &cfg).expect("training succeeds");
    (fx, forest)
}
