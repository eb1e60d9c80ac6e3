use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use wprox_core::random::{random_atomic, random_quantile, suite_rng};
use wprox_core::{geodesic_point, w2_distance, Measure};

fn distances(c: &mut Criterion) {
    let mut rng = suite_rng(1, 0);
    let mut group = c.benchmark_group("w2_distance");
    for n in [256, 1024, 4096] {
        let a = Measure::Quantile(random_quantile(&mut rng, n, 0.5));
        let b = Measure::Quantile(random_quantile(&mut rng, n, 0.5));
        group.bench_with_input(BenchmarkId::new("quantile", n), &n, |bench, _| {
            bench.iter(|| w2_distance(black_box(&a), black_box(&b)))
        });
    }
    let a = Measure::Atomic(random_atomic(&mut rng, 64, 3.0));
    let b = Measure::Quantile(random_quantile(&mut rng, 1024, 0.5));
    group.bench_function("atomic_vs_quantile_1024", |bench| bench.iter(|| w2_distance(black_box(&a), black_box(&b))));
    group.finish();

    let a = Measure::Quantile(random_quantile(&mut rng, 1024, 0.5));
    let b = Measure::Quantile(random_quantile(&mut rng, 1024, 0.5));
    c.bench_function("geodesic_point_1024", |bench| {
        bench.iter(|| geodesic_point(black_box(&a), black_box(&b), 0.3).unwrap())
    });
}

criterion_group!(benches, distances);
criterion_main!(benches);
