use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use drmpc_bench::{bench_spec, bench_states};
use drmpc_core::drmpc::{build_online, DrmpcController, TerminalKind};
use drmpc_core::qpsolve::{solve_qp, QpSettings};
use drmpc_core::roa::{scan_controller, GridSpec, ScanMode};
use drmpc_core::Controller;

fn online_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("online_build");
    for big_n in [5, 10, 20] {
        let spec = bench_spec(big_n, 3);
        let x = bench_states()[1].clone();
        group.bench_with_input(BenchmarkId::from_parameter(big_n), &big_n, |b, _| {
            b.iter(|| build_online(&spec, &x).unwrap())
        });
    }
    group.finish();
}

fn qp_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("qp_solve");
    let spec = bench_spec(10, 3);
    let x = bench_states()[2].clone();
    let online = build_online(&spec, &x).unwrap();
    let offline = DrmpcController::offline(&spec, TerminalKind::Origin).unwrap().build_qp(&x).unwrap();
    let settings = QpSettings::default();
    group.bench_function("online_n10", |b| b.iter(|| solve_qp(&online, &settings).unwrap()));
    group.bench_function("offline_n10", |b| b.iter(|| solve_qp(&offline, &settings).unwrap()));
    group.finish();
}

fn decide(c: &mut Criterion) {
    let spec = bench_spec(10, 3);
    let ctrl = DrmpcController::offline(&spec, TerminalKind::PiSet).unwrap();
    let states = bench_states();
    c.bench_function("offline_pi_decide", |b| {
        b.iter(|| states.iter().map(|x| ctrl.decide(x).unwrap().value).sum::<f64>())
    });
}

fn roa_scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("roa_scan_21x9");
    group.sample_size(10);
    let spec = bench_spec(10, 3);
    let grid = GridSpec::covering(&spec.x_set, vec![21, 9]).unwrap();
    let ctrl = DrmpcController::offline(&spec, TerminalKind::Origin).unwrap();
    for mode in [ScanMode::Points, ScanMode::Rows] {
        group.bench_function(format!("{mode:?}").to_lowercase(), |b| {
            b.iter(|| scan_controller(&ctrl, &grid, mode).unwrap().volume)
        });
    }
    group.finish();
}

criterion_group!(benches, online_build, qp_solve, decide, roa_scan);
criterion_main!(benches);
