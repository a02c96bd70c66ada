use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use floquet_holonomy::invariants::{invariant_from_floquet, transport_eigenframes, Gauge};
use floquet_holonomy::propagator::{floquet_decompose, propagate, Method, TimeGrid};
use floquet_holonomy::scenario::{builtin, run_scenario};
use floquet_holonomy::spin::{precessing_model, PrecessingFieldParams};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let mut out = vec![("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap())];
    if cfg!(feature = "parallel") {
        out.push(("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()));
    }
    out
}

fn propagation(c: &mut Criterion) {
    let mut group = c.benchmark_group("propagate");
    group.sample_size(10);
    for j in [1.0, 8.0] {
        let model = precessing_model(PrecessingFieldParams { j, larmor: 0.4, precession: 1.0 }).unwrap();
        let grid = TimeGrid::new(model.period(), 2048).unwrap();
        for (label, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(label, format!("j={j}")), &grid, |b, grid| {
                b.iter(|| pool.install(|| propagate(black_box(&model.hamiltonian), grid, Method::Magnus4).unwrap()))
            });
        }
    }
    group.finish();
}

fn eigenframes(c: &mut Criterion) {
    let mut group = c.benchmark_group("aligned_frames");
    group.sample_size(10);
    let model = precessing_model(PrecessingFieldParams { j: 6.0, larmor: 0.4, precession: 1.0 }).unwrap();
    let grid = TimeGrid::new(model.period(), 1024).unwrap();
    let trace = propagate(&model.hamiltonian, &grid, Method::Magnus4).unwrap();
    let fd = floquet_decompose(&trace).unwrap();
    let inv = invariant_from_floquet(&fd).unwrap();
    let lambda = inv.spectrum.clusters[0].value;
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new(label, "j=6"), |b| {
            b.iter(|| pool.install(|| transport_eigenframes(black_box(&inv), lambda, Gauge::Aligned, None, None).unwrap()))
        });
    }
    group.finish();
}

fn scenario(c: &mut Criterion) {
    let mut group = c.benchmark_group("spin1_precessing");
    group.sample_size(10);
    let cfg = builtin("spin1-precessing").unwrap();
    for (label, pool) in pools() {
        group.bench_function(label, |b| b.iter(|| pool.install(|| run_scenario(black_box(&cfg)).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, propagation, eigenframes, scenario);
criterion_main!(benches);
