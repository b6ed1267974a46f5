use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use krflow_core::estimates::{scalar_curvature_identities, MonitorConfig, MonitorSuite};
use krflow_core::flow::rhs;
use krflow_core::{Background, FlowState, Grid, GridSpec, Integrator, IntegratorConfig, ScalarField, Scenario, Snapshot};
use std::hint::black_box;

fn smooth(spec: GridSpec) -> ScalarField {
    ScalarField::from_fn(spec, |x| 0.1 * (x[0] + x[1]).sin() + 0.05 * (x[2] - 2.0 * x[3]).cos())
}

fn complex_hessian(c: &mut Criterion) {
    let mut group = c.benchmark_group("complex_hessian");
    for points in [8usize, 16] {
        let spec = GridSpec::new(2, points).unwrap();
        let grid = Grid::new(spec);
        let f = smooth(spec);
        group.bench_with_input(BenchmarkId::from_parameter(points), &points, |b, _| {
            b.iter(|| grid.complex_hessian(black_box(&f)).unwrap())
        });
    }
    group.finish();
}

fn flow_rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs");
    for points in [8usize, 16] {
        let bg = Background::new(Scenario::generic_ample(2, 7), points).unwrap();
        let u = smooth(bg.spec()).map(|v| 0.1 * v);
        group.bench_with_input(BenchmarkId::from_parameter(points), &points, |b, _| {
            b.iter(|| rhs(&bg, black_box(&u), 0.5).unwrap())
        });
    }
    group.finish();
}

fn rk4_step(c: &mut Criterion) {
    let bg = Background::new(Scenario::generic_ample(2, 7), 8).unwrap();
    let it = Integrator::new(&bg, IntegratorConfig::default()).unwrap();
    let s = it.initial_state().unwrap();
    c.bench_function("rk4_step/8", |b| b.iter(|| it.step(black_box(&s)).unwrap()));
}

fn monitors(c: &mut Criterion) {
    let bg = Background::new(Scenario::generic_ample(2, 7), 8).unwrap();
    let state = FlowState::from_potential(&bg, 0.5, smooth(bg.spec()).map(|v| 0.1 * v)).unwrap();
    let snap = Snapshot { state, stencil: None };
    c.bench_function("curvature_identities/8", |b| {
        b.iter(|| scalar_curvature_identities(&bg, black_box(&snap)).unwrap())
    });
    c.bench_function("monitor_suite_observe/8", |b| {
        b.iter(|| {
            let mut suite = MonitorSuite::new(&bg, MonitorConfig::default()).unwrap();
            suite.observe(black_box(&snap)).unwrap();
            suite.finish()
        })
    });
}

criterion_group!(benches, complex_hessian, flow_rhs, rk4_step, monitors);
criterion_main!(benches);
