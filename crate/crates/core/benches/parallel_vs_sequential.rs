//! Data-parallel kernels against their sequential fallback: per-test-example
//! fitting, the λ sweep, multi-run evaluation and run collection.
//!
//! Run with `cargo bench -p trajsim`. With `--no-default-features` the
//! parallel rows fall back to sequential execution.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use trajsim::analysis::{compare_methods, Method, SimulatorPredictor};
use trajsim::fitting::{default_lambda_grid, fit_all, select_lambda};
use trajsim::toy_lab::{make_run_collection, CollectionConfig, RunCollection};
use trajsim::{ExecMode, SimulatorVariant};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn collection() -> RunCollection {
    make_run_collection(&CollectionConfig::default(), ExecMode::Parallel).expect("default collection")
}

fn bench_fit_all(c: &mut Criterion) {
    let collection = collection();
    let fit = collection.fit_runs();
    let tests = collection.run_set.test_ids();
    let mut group = c.benchmark_group("fit_all");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| fit_all(black_box(&fit), &tests, SimulatorVariant::Linear, 1e-3, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_select_lambda(c: &mut Criterion) {
    let collection = collection();
    let (fit, validation) = (collection.fit_runs(), collection.validation_runs());
    let tests = collection.run_set.test_ids();
    let grid = default_lambda_grid();
    let mut group = c.benchmark_group("select_lambda");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                select_lambda(black_box(&fit), &validation, &tests, SimulatorVariant::Linear, &grid, mode).unwrap()
            })
        });
    }
    group.finish();
}

fn bench_compare_methods(c: &mut Criterion) {
    let collection = collection();
    let tests = collection.run_set.test_ids();
    let methods: Vec<Method> = SimulatorVariant::ALL
        .iter()
        .map(|&v| {
            let params = fit_all(&collection.fit_runs(), &tests, v, 1e-3, ExecMode::Parallel).unwrap();
            Method::new(v.as_str(), SimulatorPredictor::new(params))
        })
        .collect();
    let future = collection.test_runs();
    let mut group = c.benchmark_group("compare_methods");
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| compare_methods(black_box(&methods), &future, mode).unwrap())
        });
    }
    group.finish();
}

fn bench_make_run_collection(c: &mut Criterion) {
    let config = CollectionConfig::default();
    let mut group = c.benchmark_group("make_run_collection");
    group.sample_size(10);
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| make_run_collection(black_box(&config), mode).unwrap())
        });
    }
    group.finish();
}

fn config() -> Criterion {
    Criterion::default().warm_up_time(Duration::from_secs(1)).measurement_time(Duration::from_secs(5))
}

criterion_group! {
    name = benches;
    config = config();
    targets = bench_fit_all, bench_select_lambda, bench_compare_methods, bench_make_run_collection
}
criterion_main!(benches);
