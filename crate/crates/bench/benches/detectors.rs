use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use driftkit::bench::{detection_swidd, run_detector, DEFAULT_TRAIN_SIZE};
use driftkit::decompose::{kcurve_fit, linear_drifda, KcurveConfig, MiThreshold};
use driftkit::detectors::DetectorConfig;
use driftkit::sample::{feature_matrix, timestamps};
use driftkit::stats::{hsic_test, DEFAULT_PERMUTATIONS};
use driftkit::streams::{generate, Dataset, StreamSpec};

fn detectors(c: &mut Criterion) {
    let stream = generate(&StreamSpec::new(Dataset::Sea, 1000, 1)).unwrap();
    let mut group = c.benchmark_group("detector_stream_1000");
    group.sample_size(10);
    for name in DetectorConfig::NAMES {
        let config = match name {
            "swidd" => DetectorConfig::Swidd(detection_swidd()),
            _ => DetectorConfig::default_for(name).unwrap(),
        };
        group.bench_function(name, |b| {
            b.iter(|| run_detector(black_box(&stream), &config, 1, DEFAULT_TRAIN_SIZE).unwrap())
        });
    }
    group.finish();
}

fn hsic(c: &mut Criterion) {
    let mut group = c.benchmark_group("hsic_test");
    group.sample_size(10);
    for n in [50, 100, 200] {
        let stream = generate(&StreamSpec::new(Dataset::Twister, n, 2)).unwrap();
        let x = feature_matrix(&stream.samples).unwrap();
        let t = timestamps(&stream.samples);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| hsic_test(black_box(&x), &t, DEFAULT_PERMUTATIONS, 3).unwrap())
        });
    }
    group.finish();
}

fn decompose(c: &mut Criterion) {
    let mut group = c.benchmark_group("decompose_1000");
    group.sample_size(10);
    let square = generate(&StreamSpec::new(Dataset::Square, 1000, 4)).unwrap();
    group.bench_function("linear_square", |b| {
        b.iter(|| linear_drifda(black_box(&square.samples), 3, MiThreshold::Auto, 4).unwrap())
    });
    let twister = generate(&StreamSpec::new(Dataset::Twister, 1000, 4)).unwrap();
    let cfg = KcurveConfig {
        k: 4,
        n_chunks: 40,
        prototypes_per_curve: 10,
    };
    group.bench_function("kcurve_twister", |b| {
        b.iter(|| kcurve_fit(black_box(&twister.samples), &cfg, 4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, detectors, hsic, decompose);
criterion_main!(benches);
