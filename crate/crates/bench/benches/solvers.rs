use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use netmorph_bench::{gilbert_problem, grid_source, mms_start, network};
use netmorph_core::meso::solve_poisson;
use netmorph_core::mms::{mms_step, MmsParams};
use netmorph_core::{minimize_f, solve_kirchhoff, Method};
use std::hint::black_box;

fn kirchhoff(c: &mut Criterion) {
    let mut g = c.benchmark_group("kirchhoff");
    for n in [50, 200, 800] {
        let (net, cond) = network(n, 4.0 / n as f64, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_kirchhoff(black_box(&net), black_box(&cond), 1e-10).unwrap())
        });
    }
    g.finish();
}

fn tree_enumeration(c: &mut Criterion) {
    let mut g = c.benchmark_group("tree_enum");
    for n in [5, 7] {
        let problem = gilbert_problem(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| minimize_f(black_box(&problem), Method::TreeEnum).unwrap())
        });
    }
    g.finish();
}

fn poisson(c: &mut Criterion) {
    let mut g = c.benchmark_group("poisson");
    for n in [32, 64] {
        let (grid, s) = grid_source(n, 4);
        let perm = vec![[1.0, 0.2, 0.8]; grid.n_cells()];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_poisson(black_box(&grid), black_box(&perm), black_box(&s), 1e-10).unwrap())
        });
    }
    g.finish();
}

fn mms(c: &mut Criterion) {
    let mut g = c.benchmark_group("mms_step");
    g.sample_size(10);
    let (grid, s) = grid_source(16, 8);
    let params = MmsParams::new(0.1, 1.0, 1.0);
    let start = mms_start(&grid, &s, 1.0);
    g.bench_function("16x16_m8", |b| b.iter(|| mms_step(black_box(&grid), black_box(&start), &s, &params).unwrap()));
    g.finish();
}

criterion_group!(benches, kirchhoff, tree_enumeration, poisson, mms);
criterion_main!(benches);
