use std::hint::black_box;
use std::sync::Arc;

use bbm_core::approx::{solve_lattice, ApproxSolution, Variant};
use bbm_core::collision::{fit_solitons, FitGuess};
use bbm_core::integrator::Bbm;
use bbm_core::operator::OperatorL;
use bbm_core::solitons::{phi_c_at, q};
use bbm_core::{Grid, GridFunction, SpeedParams};
use criterion::{criterion_group, criterion_main, Criterion};

fn operator_solve(c: &mut Criterion) {
    let op = OperatorL::new(Grid::profile_default()).unwrap();
    let rhs = GridFunction::from_fn(op.grid(), |x| -q(x) * q(x));
    c.bench_function("operator_invert_4096", |b| b.iter(|| op.invert(black_box(&rhs)).unwrap()));
}

fn bbm_rhs(c: &mut Criterion) {
    let grid = Grid::periodic(200.0, 8192).unwrap();
    let bbm = Bbm::new(grid, false).unwrap();
    let u = GridFunction::from_fn(grid, |x| phi_c_at(2.0, x) + phi_c_at(1.2, x - 40.0));
    c.bench_function("bbm_rhs_8192", |b| b.iter(|| bbm.rhs(black_box(&u)).unwrap()));
}

fn residual(c: &mut Criterion) {
    let lattice = Arc::new(solve_lattice(0.5).unwrap());
    let params = SpeedParams::from_lambda_sigma(0.5, 0.1).unwrap();
    let a = ApproxSolution::new(params, lattice, Variant::SymmetricZ).unwrap();
    let grid = a.residual_grid().unwrap();
    c.bench_function("approx_residual_sigma_0.1", |b| {
        b.iter(|| a.residual(black_box(1.0), grid).unwrap())
    });
}

fn fit(c: &mut Criterion) {
    let grid = Grid::periodic(200.0, 8192).unwrap();
    let u = GridFunction::from_fn(grid, |x| phi_c_at(2.0, x + 30.0) + phi_c_at(1.2, x - 60.0));
    let guesses = [
        FitGuess { center: -29.5, reach: 5.0 },
        FitGuess { center: 60.5, reach: 10.0 },
    ];
    c.bench_function("fit_two_solitons", |b| {
        b.iter(|| fit_solitons(black_box(&u), &guesses, 10.0).unwrap())
    });
}

criterion_group!(benches, operator_solve, bbm_rhs, residual, fit);
criterion_main!(benches);
