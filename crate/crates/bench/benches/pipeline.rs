//! Hot-path benchmarks: cycle enumeration, the multi-point Newton solve,
//! the cone grid check, and one continuation segment.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use cascade_core::{
    census_at, check_cones, enumerate_cycles, geometry_for, newton_solve, seed_points,
    ContinuationOptions, Continuer, Direction, FamilySpec, SampleGrid, SolveOptions,
};

fn bench_enumeration(c: &mut Criterion) {
    c.bench_function("enumerate_cycles_k14", |b| {
        b.iter(|| enumerate_cycles(black_box(14)).unwrap())
    });
}

fn bench_newton(c: &mut Criterion) {
    let spec = FamilySpec::unperturbed(0.3).unwrap();
    let geo = geometry_for(&spec, 20.0).unwrap();
    let cycle = enumerate_cycles(8).unwrap().into_iter().next().unwrap();
    let seeds = seed_points(&cycle, &geo);
    let opts = SolveOptions::for_square(geo.q);
    c.bench_function("newton_solve_period8", |b| {
        b.iter(|| newton_solve(&spec, black_box(20.0), &seeds, &opts).unwrap())
    });
}

fn bench_cones(c: &mut Criterion) {
    let spec = FamilySpec::unperturbed(0.3).unwrap();
    let geo = geometry_for(&spec, 20.0).unwrap();
    let grid = SampleGrid {
        per_axis: 100,
        directions: 32,
    };
    c.bench_function("check_cones_100x100", |b| {
        b.iter(|| check_cones(&spec, black_box(&geo), &grid))
    });
}

fn bench_census(c: &mut Criterion) {
    let spec = FamilySpec::unperturbed(0.3).unwrap();
    let geo = geometry_for(&spec, 20.0).unwrap();
    c.bench_function("census_k6", |b| {
        b.iter(|| census_at(&spec, black_box(&geo), 6).unwrap())
    });
}

fn bench_continuation(c: &mut Criterion) {
    let spec = FamilySpec::unperturbed(0.3).unwrap();
    let start = newton_solve(
        &spec,
        2.0,
        &[fixed_point_seed()],
        &SolveOptions::default(),
    )
    .unwrap();
    let opts = ContinuationOptions::for_window(1.0, 2.0);
    let tracer = Continuer::new(&spec, opts);
    c.bench_function("trace_fixed_point_segment", |b| {
        b.iter(|| tracer.trace(black_box(&start), Direction::DecreasingA).unwrap())
    });
}

/// Seed near the attracting fixed point of the unperturbed family at A=2.
fn fixed_point_seed() -> cascade_core::Vec2 {
    cascade_core::Vec2::new(1.1, 1.1)
}

criterion_group!(
    benches,
    bench_enumeration,
    bench_newton,
    bench_cones,
    bench_census,
    bench_continuation
);
criterion_main!(benches);
