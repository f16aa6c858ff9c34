use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use polygam::booster::{param_gradients, FeatureCache};
use polygam::{
    build_bins, train, BinLayout, ConstraintSpec, Dataset, FeatureConstraint, FeatureKind, SplitScheme, Task,
    TrainConfig,
};
use polygam_testkit as tk;

fn dataset(n: usize) -> Dataset {
    let s = tk::cubic_regression(n, 0.5, 7);
    Dataset::new(
        s.columns,
        s.target,
        s.names,
        vec![FeatureKind::Continuous; 3],
        "y",
        Task::Regression,
    )
    .unwrap()
}

fn fixed_iterations(n: usize) -> TrainConfig {
    TrainConfig {
        max_iterations: n,
        early_stopping_patience: None,
        ..TrainConfig::default()
    }
}

fn binning(c: &mut Criterion) {
    let mut group = c.benchmark_group("binning");
    for n in [1_000, 10_000, 100_000] {
        let data = dataset(n);
        group.bench_with_input(BenchmarkId::new("build_bins", n), &data, |b, d| {
            b.iter(|| build_bins(black_box(d.column(0)), 256))
        });
        let layout = BinLayout::fit(&data, &SplitScheme::default());
        group.bench_with_input(BenchmarkId::new("feature_cache", n), &data, |b, d| {
            b.iter(|| FeatureCache::new(black_box(d.column(0)), &layout.features[0]))
        });
    }
    group.finish();
}

fn gradients(c: &mut Criterion) {
    let data = dataset(10_000);
    let x = data.column(0);
    let g: Vec<f64> = x.iter().map(|v| v.sin()).collect();
    let h = vec![2.0; x.len()];
    let mut group = c.benchmark_group("param_gradients");
    for d in 0..=3 {
        group.bench_with_input(BenchmarkId::from_parameter(d), &d, |b, &d| {
            b.iter(|| param_gradients(black_box(&g), &h, x, 0.1, d))
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_50_iterations");
    group.sample_size(10);
    for n in [2_000, 20_000] {
        let data = dataset(n);
        let layout = BinLayout::fit(&data, &SplitScheme::default());
        for s in [-1i8, 2] {
            let spec = ConstraintSpec::uniform(
                data.feature_kinds(),
                1,
                FeatureConstraint {
                    smoothness: s,
                    ..FeatureConstraint::free(3)
                },
            );
            group.bench_function(BenchmarkId::new(format!("S={s}"), n), |b| {
                b.iter(|| train(&data, None, &layout, &spec, &fixed_iterations(50)).unwrap())
            });
        }
    }
    group.finish();
}

fn prediction(c: &mut Criterion) {
    let data = dataset(20_000);
    let layout = BinLayout::fit(&data, &SplitScheme::default());
    let spec = ConstraintSpec::uniform(data.feature_kinds(), 1, FeatureConstraint::free(3));
    let model = train(&data, None, &layout, &spec, &fixed_iterations(200)).unwrap().model;
    c.bench_function("predict_20000", |b| {
        b.iter_batched(|| &data, |d| model.predict(d).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, binning, gradients, training, prediction);
criterion_main!(benches);
