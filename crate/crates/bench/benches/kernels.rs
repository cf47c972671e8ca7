use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use randprod_bench::{near_identity, scenario, tangent};
use randprod_core::{evaluate, mat_exp, mat_log, simulate_paths};

fn exp_log(c: &mut Criterion) {
    let mut g = c.benchmark_group("chart");
    for k in [2usize, 3, 6] {
        let v = tangent(k, 0.3);
        let x = near_identity(k, 0.3);
        g.bench_with_input(BenchmarkId::new("mat_exp", k), &v, |b, v| b.iter(|| mat_exp(black_box(v))));
        g.bench_with_input(BenchmarkId::new("mat_log", k), &x, |b, x| b.iter(|| mat_log(black_box(x))));
    }
    g.finish();
}

fn simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate_paths");
    g.sample_size(10);
    for name in ["gaussian-decay-q2", "haar-c4"] {
        let sc = scenario(name, 2_000, 32);
        let opts = sc.policy.simulation();
        g.bench_function(name, |b| b.iter(|| simulate_paths(&sc.sequence, black_box(&opts)).unwrap()));
    }
    g.finish();
}

fn analyze(c: &mut Criterion) {
    let mut g = c.benchmark_group("evaluate");
    g.sample_size(10);
    // closed-form statistics vs Monte-Carlo ones
    for name in ["gaussian-harmonic", "uniform-ball"] {
        let sc = scenario(name, 2_000, 1);
        let policy = sc.policy.analysis();
        g.bench_function(name, |b| b.iter(|| evaluate(&sc.sequence, &sc.chart, black_box(&policy)).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, exp_log, simulate, analyze);
criterion_main!(benches);
