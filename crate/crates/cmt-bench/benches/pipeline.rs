use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use cmt_bench::{fixture, trained_forest};
use cmt_core::store::{forest_from_bytes, forest_to_bytes};
use cmt_core::tree::{compute_box, shape_normal, SplitShapingConfig};
use cmt_core::{train_forest, ForestConfig, OrientationConfig, RotatedForestCache};

fn grid_ops(c: &mut Criterion) {
    let fx = fixture(64);
    let img = &fx.set.images[0];
    let kernel = SplitShapingConfig::default().kernel;
    c.bench_function("gaussian_smooth_28x28", |b| {
        b.iter(|| img.gaussian_smooth(black_box(&kernel)).unwrap())
    });
    c.bench_function("rotate_bilinear_28x28", |b| {
        b.iter(|| img.rotate_bilinear(black_box(20.0), 0.0).unwrap())
    });
}

fn shaping(c: &mut Criterion) {
    let fx = fixture(256);
    let node_box = compute_box(&fx.x).unwrap();
    let cfg = SplitShapingConfig::default();
    let (h, w) = fx.grid_shape;
    // An arbitrary dense candidate normal.
    let normal: Vec<f64> = (0..h * w).map(|i| ((i * 37 % 101) as f64) - 50.0).collect();
    c.bench_function("shape_normal_784", |b| {
        b.iter(|| shape_normal(black_box(&normal), &node_box, &cfg, h, w).unwrap())
    });
}

fn training(c: &mut Criterion) {
    let fx = fixture(600);
    let cfg = ForestConfig {
        tree: cmt_core::TreeConfig {
            min_leaf: 75,
            ..cmt_core::TreeConfig::default()
        },
        ..ForestConfig::default()
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("forest_600x784", |b| {
        b.iter(|| train_forest(black_box(&fx.x), &fx.y, fx.grid_shape, &cfg).unwrap())
    });
    group.finish();
}

fn inference(c: &mut Criterion) {
    let (fx, forest) = trained_forest(400);
    let probe = fx.x.row(0);
    c.bench_function("predict_one", |b| {
        b.iter(|| forest.predict(black_box(probe)).unwrap())
    });

    let os = OrientationConfig::default();
    let cache = RotatedForestCache::build(&forest, &os).unwrap();
    c.bench_function("orientation_search_5_angles", |b| {
        b.iter(|| cmt_core::orientation_search(&cache, black_box(probe)).unwrap())
    });
    c.bench_function("rotate_forest_20deg", |b| {
        b.iter(|| forest.rotate(black_box(20.0)).unwrap())
    });
}

fn serialization(c: &mut Criterion) {
    let (_, forest) = trained_forest(400);
    let bytes = forest_to_bytes(&forest).unwrap();
    c.bench_function("forest_to_bytes", |b| {
        b.iter(|| forest_to_bytes(black_box(&forest)).unwrap())
    });
    c.bench_function("forest_from_bytes", |b| {
        b.iter(|| forest_from_bytes(black_box(&bytes)).unwrap())
    });
}

criterion_group!(benches, grid_ops, shaping, training, inference, serialization);
criterion_main!(benches);
