//! Profile systems of the two-soliton expansion.
//!
//! For each slot `(k, l)` with `k ≥ 1`, `k + l ≤ 3` we need a scalar `a` and
//! profiles `A` (even, constant tail `γ`) and `B` (odd, kink tail `b φ`) with
//!
//! ```text
//! (L A)' = a((λ-3)Q'' - Q²)' + F
//! (L B)' = (3-λ)A'' + 2QA + a(2λ-3)Q'' + G
//! ```
//!
//! where the sources `F`, `G` come from lower slots.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expansion::{ansatz, slot, Algebra};
use crate::grid::{antiderivative_from_zero, integrate, inner, Grid, GridFunction};
use crate::operator::{l_kink_at, p_lambda_at, v_lambda_at, OperatorL};
use crate::profile::Profile;
use crate::solitons::{kink, q, q1, q2, q3};

/// Slots `(k, l)` in solve order.
pub const SLOTS: [(u32, u32); 6] = [(1, 0), (2, 0), (1, 1), (3, 0), (2, 1), (1, 2)];

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_pole(lambda: f64) -> Result<()> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in [0, 1)")));
    }
    Ok(())
}

fn quad(lambda: f64) -> f64 {
    15.0 + 10.0 * lambda - lambda * lambda
}

pub fn a10(lambda: f64) -> f64 {
    10.0 * (1.0 + lambda) / quad(lambda)
}

pub fn b10(lambda: f64) -> f64 {
    (-30.0 + 18.0 * lambda * lambda) / quad(lambda)
}

/// Coefficient of `Q'` in `B_{1,0}` making it orthogonal to `Q'`.
pub fn kappa_b(lambda: f64) -> f64 {
    let a = a10(lambda);
    5.0 / 3.0 * b10(lambda)
        + 5.0 * ((lambda - 3.0) * a / 4.0 + 0.5)
        + PI * PI / 24.0 * ((lambda - 3.0).powi(2) * a + 2.0 * (lambda - 3.0))
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

pub fn q_poly(lambda: f64) -> f64 {
    let p2 = PI * PI;
    horner(
        &[
            5625.0,
            0.0,
            -13500.0,
            -3375.0,
            75.0 * (125.0 - 3.0 * p2),
            300.0 * (16.0 - p2),
            -10.0 * (18.0 + 7.0 * p2),
            -5.0 * (45.0 - 4.0 * p2),
            -p2,
        ],
        lambda,
    )
}

pub fn g_poly(lambda: f64) -> f64 {
    let p2 = PI * PI;
    horner(
        &[
            3375.0,
            3375.0,
            -75.0 * (44.0 - 3.0 * p2),
            -300.0 * (16.0 - p2),
            -5.0 * (207.0 - 14.0 * p2),
            5.0 * (45.0 - 4.0 * p2),
            p2,
        ],
        lambda,
    )
}

pub fn b20_closed_form(lambda: f64) -> Result<f64> {
    check_pole(lambda)?;
    Ok(4.0 * q_poly(lambda) / (5.0 * (1.0 - lambda) * quad(lambda).powi(3)))
}

/// `d(λ) = b₂₀ + b₁₀³/(6(1-λ))`, the inelasticity coefficient.
pub fn d_lambda(lambda: f64) -> Result<f64> {
    Ok(b20_closed_form(lambda)? + b10(lambda).powi(3) / (6.0 * (1.0 - lambda)))
}

/// The factored form `-4λ² g(λ) / (5(1-λ)(15+10λ-λ²)³)`.
pub fn d_factored(lambda: f64) -> Result<f64> {
    check_pole(lambda)?;
    Ok(-4.0 * lambda * lambda * g_poly(lambda) / (5.0 * (1.0 - lambda) * quad(lambda).powi(3)))
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct GammaConstants {
    pub g20: f64,
    pub g11: f64,
    pub g30: f64,
    pub g21: f64,
    pub g12: f64,
}

impl GammaConstants {
    pub fn get(&self, k: u32, l: u32) -> f64 {
        match (k, l) {
            (2, 0) => self.g20,
            (1, 1) => self.g11,
            (3, 0) => self.g30,
            (2, 1) => self.g21,
            (1, 2) => self.g12,
            _ => 0.0,
        }
    }
}

/// Tail constants for `b₁₁` given; `d` from the closed form.
///
/// The order-3 constants match the Taylor expansion of
/// `Q̃(s - b₁₀ - σb̃₁₁) - d (Q̃²)'(s - b₁₀ - σb̃₁₁)`, where the `d b₁₀` cross
/// terms enter as `+d b₁₀ (Q̃²)''`.
pub fn gamma_constants(lambda: f64, b11: f64) -> Result<GammaConstants> {
    check_pole(lambda)?;
    let b = b10(lambda);
    let d = d_lambda(lambda)?;
    let om = 1.0 - lambda;
    Ok(GammaConstants {
        g20: -b * b / (2.0 * om),
        g11: b * b / 2.0,
        g30: 5.0 * b.powi(4) / (36.0 * om * om) - 10.0 * d * b / (3.0 * om),
        g21: -b.powi(4) / (24.0 * om) + lambda * b * b / (2.0 * om) - b * b11 / om + 4.0 * d * b,
        g12: -3.0 / 24.0 * b.powi(4) + b * b11,
    })
}

/// `a` from the solvability relation, given sources and tail constant.
pub fn akl_coefficient(f: &GridFunction, g: &GridFunction, gamma: f64, lambda: f64) -> f64 {
    let grid = f.grid;
    let p = GridFunction::from_fn(grid, |x| p_lambda_at(lambda, x));
    let cum_p = antiderivative_from_zero(&p);
    let qq = GridFunction::from_fn(grid, q);
    let bracket = -gamma * integrate(&p) + inner(g, &qq) + inner(f, &cum_p);
    -20.0 / quad(lambda) / 6.0 * bracket
}

/// One solved slot: `A = Ã + γ`, `B = B̃ + bφ`.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub k: u32,
    pub l: u32,
    pub a: f64,
    pub a_profile: Profile,
    pub b_profile: Profile,
    pub gamma: f64,
    pub b: f64,
}

impl ProfileSet {
    /// `max |Ã| ` and `max |B̃|` over `|x| ≥ L/2`, relative to the profile size.
    pub fn tail_decay(&self) -> (f64, f64) {
        let rel = |f: &GridFunction| {
            let g = f.grid;
            let half = 0.5 * g.half_length;
            let far = (0..g.n_points)
                .filter(|&j| g.x(j).abs() >= half)
                .fold(0.0f64, |m, j| m.max(f.values[j].abs()));
            far / f.max_abs().max(f64::MIN_POSITIVE)
        };
        (rel(&self.a_profile.decay), rel(&self.b_profile.decay))
    }

    pub fn parity_defects(&self) -> (f64, f64) {
        (self.a_profile.parity_defect(false), self.b_profile.parity_defect(true))
    }
}

/// Closed-form solution of the first slot, with `B` orthogonal to `Q'`.
pub fn solve_omega10(lambda: f64, grid: Grid) -> Result<ProfileSet> {
    check_lambda(lambda)?;
    let a = a10(lambda);
    let b = b10(lambda);
    let kappa = kappa_b(lambda);
    let lm3 = lambda - 3.0;
    let a_profile = Profile::from_fn(grid, |y| -(y * q1(y) + 2.0 * q(y)) - a * v_lambda_at(lambda, y));
    let decay = GridFunction::from_fn(grid, |y| {
        -lm3 / 4.0 * y * y * q1(y) + y * q(y)
            - a * (lm3 * lm3 / 8.0 * y * y * q1(y) - lm3 / 2.0 * y * q(y))
            + kappa * q1(y)
    });
    Ok(ProfileSet {
        k: 1,
        l: 0,
        a,
        a_profile,
        b_profile: Profile::with_tails(decay, 0.0, b),
        gamma: 0.0,
        b,
    })
}

/// Constructive solution of one profile system with decaying odd `F`, even `G`.
pub fn solve_model_problem(
    op: &OperatorL,
    f: &GridFunction,
    g: &GridFunction,
    gamma: f64,
    lambda: f64,
) -> Result<ProfileSet> {
    check_lambda(lambda)?;
    let grid = op.grid();
    grid.check_same(&f.grid)?;
    grid.check_same(&g.grid)?;
    let qq = op.q();
    let cum_f = antiderivative_from_zero(f);
    let far = cum_f.values[0];
    let drive = cum_f.map(|v| v - far).axpy(2.0 * gamma, qq);
    let hbar = op.invert(&drive)?;
    let v = GridFunction::from_fn(grid, |x| v_lambda_at(lambda, x));
    let d = {
        let h2 = crate::grid::derivative(&hbar, 2)?;
        h2.scale(3.0 - lambda)
            .add(&qq.mul(&hbar).scale(2.0))
            .add(g)
            .axpy(2.0 * gamma, qq)
    };
    let z0 = {
        let v2 = crate::grid::derivative(&v, 2)?;
        GridFunction::from_fn(grid, |x| (3.0 - 2.0 * lambda) * q2(x))
            .axpy(3.0 - lambda, &v2)
            .add(&qq.mul(&v).scale(2.0))
    };
    let denom = inner(&z0, qq);
    if denom.abs() < 1e-10 {
        return Err(Error::DegenerateDenominator(denom));
    }
    let a = inner(&d, qq) / denom;
    let r = d.axpy(-a, &z0);
    let cum_r = antiderivative_from_zero(&r);
    let b = cum_r.values[grid.n_points - 1];
    let e = GridFunction::from_fn(grid, l_kink_at);
    let e = cum_r.axpy(-b, &e);
    let btilde = op.invert(&e)?;
    let atilde = hbar.axpy(-a, &v);
    Ok(ProfileSet {
        k: 0,
        l: 0,
        a,
        a_profile: Profile::with_tails(atilde, gamma, 0.0),
        b_profile: Profile::with_tails(btilde, 0.0, b),
        gamma,
        b,
    })
}

/// `F` and `G` of one slot.
#[derive(Debug, Clone)]
pub struct SourceTerms {
    pub f: Profile,
    pub g: Profile,
}

impl SourceTerms {
    /// Largest non-decaying coefficient in either source.
    pub fn tail_size(&self) -> f64 {
        [self.f.constant, self.f.kink, self.g.constant, self.g.kink]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn parity_defects(&self) -> (f64, f64) {
        (self.f.parity_defect(true), self.g.parity_defect(false))
    }
}

fn qd(grid: Grid, f: fn(f64) -> f64) -> Profile {
    Profile::from_fn(grid, f)
}

/// The closed-form source tables for `(1,0)`, `(1,1)` and `(2,0)`.
pub fn explicit_sources(k: u32, l: u32, first: Option<&ProfileSet>, lambda: f64, grid: Grid) -> Result<SourceTerms> {
    if (k, l) == (1, 0) {
        return Ok(SourceTerms {
            f: qd(grid, q1).scale(2.0),
            g: qd(grid, q).scale(2.0),
        });
    }
    let s = first.ok_or(Error::MissingProfile(1, 0))?;
    let (a, am, bm) = (s.a, &s.a_profile, &s.b_profile);
    let qp = qd(grid, q);
    let om = 1.0 - lambda;
    let a1 = am.derivative()?;
    let a2 = a1.derivative()?;
    let b1 = bm.derivative()?;
    let b2 = b1.derivative()?;
    let qb = qp.mul(bm);
    match (k, l) {
        (1, 1) => Ok(SourceTerms {
            f: a1
                .scale(3.0 - 2.0 * lambda)
                .axpy(3.0 - lambda, &b2)
                .axpy(2.0, &qb)
                .axpy(lambda * (lambda - 1.0) * a, &qd(grid, q3)),
            g: a2
                .scale(lambda * om)
                .axpy(3.0 - 2.0 * lambda, &b1)
                .axpy(-2.0 * a * lambda * om, &qd(grid, q2)),
        }),
        (2, 0) => {
            let brace = a2
                .scale(lambda - 3.0)
                .axpy(-2.0, &qp.mul(am))
                .sub(&qp)
                .derivative()?;
            let f = brace
                .scale(a)
                .axpy((3.0 - 2.0 * lambda) * a * a, &qd(grid, q3))
                .add(&am.mul(am).derivative()?)
                .axpy(-2.0 / om, &qb)
                .axpy(-1.0 / om, &a1)
                .axpy((lambda - 3.0) / om, &b2);
            let brace = a1
                .scale(6.0 * lambda - 9.0)
                .axpy(lambda - 3.0, &b2)
                .axpy(-2.0, &qb)
                .derivative()?;
            let g = brace
                .scale(a / 2.0)
                .add(&am.mul(am))
                .add(&am.mul(bm).derivative()?)
                .add(am)
                .axpy((lambda - 2.0) / om, &b1)
                .axpy(1.5 * om * a * a, &qd(grid, q2));
            Ok(SourceTerms { f, g })
        }
        _ => Err(Error::InvalidParameter(format!("no closed-form sources for slot ({k}, {l})"))),
    }
}

/// Sources of every slot of order `order` from the formal expansion of the residual.
pub fn expanded_sources(
    order: u32,
    lower: &BTreeMap<(u32, u32), ProfileSet>,
    lambda: f64,
    grid: Grid,
) -> Result<BTreeMap<(u32, u32), SourceTerms>> {
    let mut rates = BTreeMap::new();
    let mut profiles = BTreeMap::new();
    for &(k, l) in SLOTS.iter().filter(|(k, l)| k + l < order) {
        let s = lower.get(&(k, l)).ok_or(Error::MissingProfile(k as usize, l as usize))?;
        rates.insert((k, l), s.a);
        profiles.insert((k, l), (s.a_profile.clone(), s.b_profile.clone()));
    }
    let alg = Algebra::new(lambda, order, grid, &rates);
    let res = alg.residual(&ansatz(grid, &profiles, true, true))?;
    Ok(SLOTS
        .iter()
        .filter(|(k, l)| k + l == order)
        .map(|&(k, l)| {
            let c = slot(&res, k, l, grid);
            ((k, l), SourceTerms { f: c.plain, g: c.derived })
        })
        .collect())
}

/// Sources for slot `(k, l)`: closed-form tables where available, else the expansion.
pub fn build_sources(
    k: u32,
    l: u32,
    lower: &BTreeMap<(u32, u32), ProfileSet>,
    lambda: f64,
    grid: Grid,
) -> Result<SourceTerms> {
    if k + l <= 2 {
        return explicit_sources(k, l, lower.get(&(1, 0)), lambda, grid);
    }
    expanded_sources(k + l, lower, lambda, grid)?
        .remove(&(k, l))
        .ok_or_else(|| Error::InvalidParameter(format!("slot ({k}, {l}) is outside the lattice")))
}

fn apply_l(op: &OperatorL, p: &Profile) -> Result<Profile> {
    let qp = Profile::decaying(op.q().clone());
    Ok(p.derivative_n(2)?.scale(-1.0).add(p).axpy(-2.0, &qp.mul(p)))
}

/// Max-norm residuals of both equations of a slot.
pub fn system_residuals(op: &OperatorL, set: &ProfileSet, src: &SourceTerms, lambda: f64) -> Result<(f64, f64)> {
    let grid = op.grid();
    let qp = Profile::decaying(op.q().clone());
    let first = apply_l(op, &set.a_profile)?
        .derivative()?
        .axpy(-set.a, &Profile::from_fn(grid, |x| (lambda - 3.0) * q2(x) - q(x).powi(2)).derivative()?)
        .sub(&src.f);
    let second = apply_l(op, &set.b_profile)?
        .derivative()?
        .axpy(-(3.0 - lambda), &set.a_profile.derivative_n(2)?)
        .axpy(-2.0, &qp.mul(&set.a_profile))
        .axpy(-set.a * (2.0 * lambda - 3.0), &Profile::from_fn(grid, q2))
        .sub(&src.g);
    Ok((first.max_abs(), second.max_abs()))
}

/// `b₂₀` from integrating the second equation of slot `(2,0)` over the line.
pub fn b20_from_limit_relation(first: &ProfileSet, second: &ProfileSet, lambda: f64) -> f64 {
    let grid = first.a_profile.grid();
    let qq = GridFunction::from_fn(grid, q);
    let a10s = first.a_profile.sampled();
    let integrand = second
        .a_profile
        .decay
        .mul(&qq)
        .scale(2.0)
        .add(&a10s.mul(&a10s))
        .add(&a10s);
    let total = integrate(&integrand) + 2.0 * second.gamma * 6.0;
    0.5 * (total + (lambda - 2.0) / (1.0 - lambda) * 2.0 * first.b)
}

/// Every slot solved for one `λ`.
#[derive(Debug, Clone)]
pub struct ProfileLattice {
    pub lambda: f64,
    pub sets: BTreeMap<(u32, u32), ProfileSet>,
    pub sources: BTreeMap<(u32, u32), SourceTerms>,
    pub gammas: GammaConstants,
}

impl ProfileLattice {
    pub fn solve(op: &OperatorL, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let grid = op.grid();
        let mut sets = BTreeMap::new();
        let mut sources = BTreeMap::new();
        sets.insert((1, 0), solve_omega10(lambda, grid)?);
        sources.insert((1, 0), explicit_sources(1, 0, None, lambda, grid)?);
        let provisional = gamma_constants(lambda, 0.0)?;
        for (k, l) in [(2, 0), (1, 1)] {
            let src = build_sources(k, l, &sets, lambda, grid)?;
            let mut set = solve_model_problem(op, &src.f.decay, &src.g.decay, provisional.get(k, l), lambda)?;
            set.k = k;
            set.l = l;
            sources.insert((k, l), src);
            sets.insert((k, l), set);
        }
        let gammas = gamma_constants(lambda, sets[&(1, 1)].b)?;
        for ((k, l), src) in expanded_sources(3, &sets, lambda, grid)? {
            let mut set = solve_model_problem(op, &src.f.decay, &src.g.decay, gammas.get(k, l), lambda)?;
            set.k = k;
            set.l = l;
            sources.insert((k, l), src);
            sets.insert((k, l), set);
        }
        Ok(Self {
            lambda,
            sets,
            sources,
            gammas,
        })
    }

    pub fn set(&self, k: u32, l: u32) -> &ProfileSet {
        &self.sets[&(k, l)]
    }

    pub fn row(&self) -> CoefficientRow {
        let lam = self.lambda;
        CoefficientRow {
            lambda: lam,
            a10: self.set(1, 0).a,
            b10: self.set(1, 0).b,
            kappa: kappa_b(lam),
            b20: self.set(2, 0).b,
            b20_closed: b20_closed_form(lam).unwrap_or(f64::NAN),
            d: d_lambda(lam).unwrap_or(f64::NAN),
            gamma20: self.gammas.g20,
            gamma11: self.gammas.g11,
            b11: self.set(1, 1).b,
            gamma30: self.gammas.g30,
            gamma21: self.gammas.g21,
            gamma12: self.gammas.g12,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoefficientRow {
    pub lambda: f64,
    pub a10: f64,
    pub b10: f64,
    pub kappa: f64,
    pub b20: f64,
    pub b20_closed: f64,
    pub d: f64,
    pub gamma20: f64,
    pub gamma11: f64,
    pub b11: f64,
    pub gamma30: f64,
    pub gamma21: f64,
    pub gamma12: f64,
}

pub const COEFFICIENT_HEADER: &str = "lambda,a10,b10,kappa,b20,d,gamma20,gamma11,b11,gamma30,gamma21,gamma12";

impl CoefficientRow {
    pub fn csv_line(&self) -> String {
        [
            self.lambda, self.a10, self.b10, self.kappa, self.b20, self.d, self.gamma20, self.gamma11, self.b11,
            self.gamma30, self.gamma21, self.gamma12,
        ]
        .iter()
        .map(|v| format!("{v:.12e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub fn coefficient_sweep(op: &OperatorL, lambdas: &[f64]) -> Result<Vec<CoefficientRow>> {
    lambdas
        .par_iter()
        .map(|&lam| ProfileLattice::solve(op, lam).map(|p| p.row()))
        .collect()
}

pub fn write_coefficient_csv<W: Write>(rows: &[CoefficientRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{COEFFICIENT_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// `max |φ(x) - sign(x)|` beyond `|x| > 50`, the tail model's own accuracy.
pub fn kink_tail_gap(grid: Grid) -> f64 {
    (0..grid.n_points)
        .map(|j| grid.x(j))
        .filter(|x| x.abs() > 50.0)
        .map(|x| (kink(x) - x.signum()).abs())
        .fold(0.0, f64::max)
}
