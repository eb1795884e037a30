use criterion::{criterion_group, criterion_main, Criterion};
use drmpc_bench::bench_spec;
use drmpc_core::deadbeat::compute_plan;
use drmpc_core::geometry::{max_pi_set, minkowski_sum, mrpi_approx, pontryagin_diff};
use drmpc_core::plant::lqr;

fn sets(c: &mut Criterion) {
    let spec = bench_spec(10, 3);
    let ak = lqr(&spec.system, &spec.cost).unwrap().closed_loop(&spec.system);
    c.bench_function("pontryagin_x_minus_d", |b| b.iter(|| pontryagin_diff(&spec.x_set, &spec.d_set).unwrap()));
    c.bench_function("minkowski_d_plus_akd", |b| {
        let mapped = spec.d_set.linear_map(&ak).unwrap();
        b.iter(|| minkowski_sum(&spec.d_set, &mapped).unwrap())
    });
    c.bench_function("mrpi_eps_1e-3", |b| b.iter(|| mrpi_approx(&ak, &spec.d_set, 1e-3).unwrap()));
    c.bench_function("max_pi_set_x", |b| b.iter(|| max_pi_set(&ak, &spec.x_set, 1000).unwrap()));
}

fn deadbeat(c: &mut Criterion) {
    let spec = bench_spec(10, 3);
    c.bench_function("deadbeat_plan_m3", |b| b.iter(|| compute_plan(&spec).unwrap()));
}

criterion_group!(benches, sets, deadbeat);
criterion_main!(benches);
