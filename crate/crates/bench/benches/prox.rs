use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use wprox_core::{jko_step, prox_barenblatt, run_flow, BarenblattParams, FlowOptions, FlowStart, FunctionalSpec, SolverOptions};

fn jko(c: &mut Criterion) {
    let opts = SolverOptions::default();
    let mut group = c.benchmark_group("jko_step");
    for p in [0.6, 1.0, 2.0] {
        let params = BarenblattParams::new(p).unwrap();
        let f = FunctionalSpec::renyi(p).unwrap();
        for n in [128, 512] {
            let start = params.profile(1.0, n).unwrap();
            group.bench_with_input(BenchmarkId::new(format!("p={p}"), n), &n, |bench, _| {
                bench.iter(|| jko_step(&f, black_box(&start), 0.05, &opts).unwrap())
            });
        }
    }
    group.finish();

    let params = BarenblattParams::new(2.0).unwrap();
    c.bench_function("prox_barenblatt_512", |bench| {
        bench.iter(|| prox_barenblatt(&params, black_box(1.0), 0.05, 512).unwrap())
    });
}

fn flows(c: &mut Criterion) {
    let f = FunctionalSpec::renyi(2.0).unwrap();
    let opts = FlowOptions { resolution: 256, force_numeric: true, ..FlowOptions::default() };
    let mut group = c.benchmark_group("flow");
    group.sample_size(10);
    group.bench_function("renyi2_256_x50", |bench| {
        bench.iter(|| run_flow(&f, &FlowStart::Barenblatt { r: 1.0 }, 0.02, 50, &opts).unwrap())
    });
    group.finish();
}

criterion_group!(benches, jko, flows);
criterion_main!(benches);
