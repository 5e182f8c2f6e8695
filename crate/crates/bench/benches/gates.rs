use std::hint::black_box;

use cascade_gate::eval::pooled_matches;
use cascade_gate::{
    average_precision, baseline_gate, combined_gate, correlation_gate, ClassifierGateConfig, CorrelationGateConfig,
    Pattern, PatternKind, SweepContext,
};
use cascade_gate_bench::{reference_cost, scenes};
use criterion::{criterion_group, criterion_main, Criterion};

fn gates(c: &mut Criterion) {
    let scene = scenes(1).remove(0);
    let alpha = Pattern::generate(scene.grid(), PatternKind::Alpha);
    let cor = CorrelationGateConfig::new(vec![1.0, 0.5], 0.25).unwrap();
    let clf = ClassifierGateConfig::new(0.0).unwrap();

    c.bench_function("correlation_gate 30x30 alpha k2", |b| {
        b.iter(|| correlation_gate(black_box(&scene), &alpha, &cor).unwrap())
    });
    c.bench_function("combined_gate 30x30 alpha k2", |b| {
        b.iter(|| combined_gate(black_box(&scene), &alpha, &cor, &clf).unwrap())
    });
}

fn metrics(c: &mut Criterion) {
    let sc = scenes(5);
    let decisions: Vec<_> = sc.iter().map(baseline_gate).collect();
    let (labeled, truths, _) = pooled_matches(&sc, &decisions, 0.5).unwrap();

    c.bench_function("pooled_matches 5 scenes", |b| {
        b.iter(|| pooled_matches(black_box(&sc), &decisions, 0.5).unwrap())
    });
    c.bench_function("average_precision 5 scenes", |b| {
        b.iter(|| average_precision(black_box(&labeled), truths))
    });
}

fn sweeps(c: &mut Criterion) {
    let sc = scenes(5);
    let ctx = SweepContext::with_defaults(&sc, reference_cost()).unwrap();
    let ts: Vec<f64> = (0..9).map(|i| -0.4 + 0.1 * i as f64).collect();
    c.bench_function("sweep_classifier 9 thresholds x 5 scenes", |b| {
        b.iter(|| cascade_gate::sweep_classifier(&ctx, black_box(&ts)).unwrap())
    });
}

criterion_group!(benches, gates, metrics, sweeps);
criterion_main!(benches);
