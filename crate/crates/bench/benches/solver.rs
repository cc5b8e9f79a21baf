use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fnls_core::spectral::{forward_transform, fractional_laplacian, inverse_transform};
use fnls_core::{
    nls_soliton, petviashvili_profile, CompositionScheme, ModelParams, SolitonParams,
    SolverParams, SpectralGrid, StageSolver,
};

fn soliton_on(n: usize) -> fnls_core::Field {
    let grid = SpectralGrid::new(n, 16.0 * PI).unwrap();
    nls_soliton(&grid, 0.0, &SolitonParams::new(1.0, 0.25, 0.0, 0.0).unwrap()).unwrap()
}

fn transforms(c: &mut Criterion) {
    let mut group = c.benchmark_group("transform");
    for n in [512, 4096] {
        let u = soliton_on(n);
        group.bench_with_input(BenchmarkId::new("round_trip", n), &u, |b, u| {
            b.iter(|| inverse_transform(&forward_transform(black_box(u))))
        });
        group.bench_with_input(BenchmarkId::new("fractional_laplacian", n), &u, |b, u| {
            b.iter(|| fractional_laplacian(black_box(u), 0.75).unwrap())
        });
    }
    group.finish();
}

fn stepping(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    for n in [512, 4096] {
        let u = soliton_on(n);
        let model = ModelParams::new(1.0, false).unwrap();
        let solver = StageSolver::new(u.grid(), model);
        let sp = SolverParams::new(2.5e-2).unwrap();
        group.bench_with_input(BenchmarkId::new("stage_solve", n), &u, |b, u| {
            b.iter(|| solver.solve(black_box(u), 1.0, &sp).unwrap())
        });
        for p in [1, 2] {
            let scheme = CompositionScheme::yoshida(p).unwrap();
            let id = BenchmarkId::new(format!("q{}", scheme.stages()), n);
            group.bench_with_input(id, &u, |b, u| {
                b.iter(|| solver.step(black_box(u), &scheme, &sp).unwrap())
            });
        }
    }
    group.finish();
}

fn profiles(c: &mut Criterion) {
    let grid = SpectralGrid::new(512, 16.0 * PI).unwrap();
    c.bench_function("petviashvili_s075_n512", |b| {
        b.iter(|| petviashvili_profile(&grid, 0.75, 1.0, 0.25, 1e-12, 5000).unwrap())
    });
}

criterion_group!(benches, transforms, stepping, profiles);
criterion_main!(benches);
