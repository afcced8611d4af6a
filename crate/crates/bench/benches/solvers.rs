use criterion::{black_box, criterion_group, criterion_main, Criterion};

use voltvar::control::apply_control;
use voltvar::experiment::{run_case, sweep_k, CaseOptions, KGrid};
use voltvar::model::{case_spec, generate};
use voltvar::powerflow::{solve_distflow, solve_lindistflow, FlowModel, Injection};
use voltvar::{CoeffMode, ControlConfig, Scheme};

fn solvers(c: &mut Criterion) {
    let feeder = generate(&case_spec(1).unwrap()).unwrap();
    let cfg = ControlConfig::for_feeder(&feeder, Scheme::Hybrid, 0.5, CoeffMode::PaperLiteral);
    let inj = apply_control(&feeder, &cfg);
    let zero = Injection::zeros(feeder.len());

    c.bench_function("lindistflow_250", |b| {
        b.iter(|| solve_lindistflow(black_box(&feeder), black_box(&inj)).unwrap())
    });
    c.bench_function("distflow_250", |b| {
        b.iter(|| solve_distflow(black_box(&feeder), black_box(&zero), 1e-10, 100).unwrap())
    });
    c.bench_function("apply_control_250", |b| b.iter(|| apply_control(black_box(&feeder), &cfg)));
}

fn sweeps(c: &mut Criterion) {
    let feeder = generate(&case_spec(4).unwrap()).unwrap();
    let cfg = ControlConfig::for_feeder(&feeder, Scheme::Hybrid, 0.0, CoeffMode::PaperLiteral);
    let grid = KGrid::default();
    c.bench_function("sweep_301_linear", |b| {
        b.iter(|| sweep_k(black_box(&feeder), &grid, &cfg, FlowModel::Linear).unwrap())
    });

    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    group.bench_function("case4_20_seeds", |b| {
        b.iter(|| run_case(4, &CaseOptions::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, solvers, sweeps);
criterion_main!(benches);
