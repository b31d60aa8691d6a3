use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mconvex_core::convexity::{build_x1_function, check_convex_exact, farey_grid, Convexity, RationalInterval};
use mconvex_core::descend::{closed_form_quasiarithmetic, solve_fixed_point};
use mconvex_core::means::quasi_arithmetic;
use mconvex_core::rational::rat;
use mconvex_core::{DescendantProblem, ExactRational, MonotoneFn, SolveOptions, TwoDiagonalMatrix};

fn solver(c: &mut Criterion) {
    let ln = MonotoneFn::ln();
    let s = [0.2, 0.5, 0.7, 0.4];
    let means = s.iter().map(|&v| quasi_arithmetic(&ln, v).unwrap()).collect();
    let problem = DescendantProblem::new(means, 1.0, 8.0).unwrap();
    let opts = SolveOptions { certify: false, ..Default::default() };
    c.bench_function("solve_fixed_point qa(ln) n=4", |b| {
        b.iter(|| solve_fixed_point(black_box(&problem), &opts).unwrap())
    });
    c.bench_function("closed_form qa(ln) n=4", |b| {
        b.iter(|| closed_form_quasiarithmetic(&ln, black_box(&s), 1.0, 8.0).unwrap())
    });
}

fn spectral(c: &mut Criterion) {
    let u: Vec<f64> = (0..10).map(|k| 0.3 + 0.05 * k as f64).collect();
    let v: Vec<f64> = (0..10).map(|k| 0.7 - 0.04 * k as f64).collect();
    let m = TwoDiagonalMatrix::new(u, v).unwrap();
    c.bench_function("eigenvalues n=10", |b| b.iter(|| black_box(&m).eigenvalues(1e-13).unwrap()));
    c.bench_function("positive_eigenvector n=10", |b| b.iter(|| black_box(&m).positive_eigenvector(1e-13).unwrap()));
}

fn exact_grid(c: &mut Criterion) {
    let unit = RationalInterval::closed(rat(0, 1), rat(1, 1)).unwrap();
    let f = build_x1_function("x1", |q: &ExactRational| q * q, unit.clone()).unwrap();
    let grid = farey_grid(&unit, 21);
    let mut g = c.benchmark_group("exact");
    g.sample_size(10);
    g.bench_function("x1 upper check den<=21", |b| {
        b.iter(|| check_convex_exact(&f, &rat(1, 3), black_box(&grid), Convexity::Upper).unwrap())
    });
    g.finish();
}

criterion_group!(benches, solver, spectral, exact_grid);
criterion_main!(benches);
