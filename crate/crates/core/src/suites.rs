//! Named numerical checks on the closed-form profiles, the operator `L` and
//! the first coefficient systems, each with its own tolerance.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::grid::{derivative, integrate, inner, norm_l2, Grid, GridFunction};
use crate::omega::{
    a10, akl_coefficient, b10, b20_closed_form, build_sources, d_lambda, explicit_sources, g_poly, gamma_constants,
    solve_model_problem, solve_omega10, system_residuals,
};
use crate::operator::{check_lphi, AuxProfiles, OperatorL};
use crate::solitons::{energy_mass, phi_c, q, q1, q2, q_profile, qtilde_sigma, SpeedParams};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    /// Relative error when `relative`, absolute otherwise.
    pub error: f64,
    pub tolerance: f64,
    pub relative: bool,
    pub passed: bool,
}

impl Check {
    pub fn relative(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        let error = if expected == 0.0 {
            value.abs()
        } else {
            ((value - expected) / expected).abs()
        };
        Self {
            name: name.into(),
            value,
            expected,
            error,
            tolerance,
            relative: true,
            passed: error <= tolerance,
        }
    }

    pub fn absolute(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        let error = (value - expected).abs();
        Self {
            name: name.into(),
            value,
            expected,
            error,
            tolerance,
            relative: false,
            passed: error <= tolerance,
        }
    }

    /// `value` itself must stay below `tolerance`.
    pub fn bound(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::absolute(name, value, 0.0, tolerance)
    }

    pub fn holds(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: f64::from(u8::from(ok)),
            expected: 1.0,
            error: f64::from(u8::from(!ok)),
            tolerance: 0.0,
            relative: false,
            passed: ok,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Integrals of `Q` and of the solitary waves `φ_c`, plus the scaling of `Q̃_σ`.
pub fn identity_suite(grid: Grid) -> Vec<Check> {
    const TOL_Q: f64 = 1e-8;
    const TOL_PHI: f64 = 1e-7;
    let mut out = Vec::new();
    let qq = q_profile(grid);
    let dq = derivative(&qq, 1).expect("order 1 is valid");
    let d2q = derivative(&qq, 2).expect("order 2 is valid");
    let int = |f: &GridFunction| integrate(f);
    out.push(Check::absolute("Q(0) = 3/2", qq.values[grid.origin_index()], 1.5, 1e-14));
    let ode = d2q.sub(&qq).add(&qq.mul(&qq)).max_abs();
    out.push(Check::bound("max |Q'' - Q + Q²|", ode, TOL_Q));
    let i1 = int(&qq);
    let i2 = int(&qq.mul(&qq));
    let i3 = int(&qq.mul(&qq).mul(&qq));
    let id = int(&dq.mul(&dq));
    out.push(Check::relative("∫Q = 6", i1, 6.0, TOL_Q));
    out.push(Check::relative("∫Q² = 6", i2, 6.0, TOL_Q));
    out.push(Check::relative("∫Q³ = (6/5)∫Q²", i3, 1.2 * i2, TOL_Q));
    out.push(Check::relative("∫(Q')² = (1/5)∫Q²", id, 0.2 * i2, TOL_Q));
    let x2 = GridFunction::from_fn(grid, |x| x * x);
    let x2q2 = int(&x2.mul(&qq).mul(&qq));
    let x2q3 = int(&x2.mul(&qq).mul(&qq).mul(&qq));
    let x2d2 = int(&x2.mul(&dq).mul(&dq));
    out.push(Check::relative("∫x²Q³ = (6/5)∫x²Q² - (3/5)∫Q²", x2q3, 1.2 * x2q2 - 0.6 * i2, TOL_Q));
    out.push(Check::relative("∫x²(Q')² = (1/5)∫x²Q² + (2/5)∫Q²", x2d2, 0.2 * x2q2 + 0.4 * i2, TOL_Q));
    for c in [1.1, 1.5, 2.0, 4.0] {
        let phi = phi_c(c, grid).expect("c > 1");
        let dphi = derivative(&phi, 1).expect("order 1 is valid");
        let a: f64 = c - 1.0;
        let base = a.powf(1.5) * c.sqrt() * 6.0;
        let p2 = int(&phi.mul(&phi));
        let p3 = int(&phi.mul(&phi).mul(&phi));
        let pd = int(&dphi.mul(&dphi));
        let (e, n) = energy_mass(&phi);
        out.push(Check::relative(format!("c={c}: ∫φ²"), p2, base, TOL_PHI));
        out.push(Check::relative(format!("c={c}: ∫φ³"), p3, 1.2 * a * base, TOL_PHI));
        out.push(Check::relative(format!("c={c}: ∫(φ')²"), pd, 0.2 * a / c * base, TOL_PHI));
        out.push(Check::relative(format!("c={c}: E(φ)"), e, 0.5 * base * (1.0 + 0.8 * a), TOL_PHI));
        out.push(Check::relative(format!("c={c}: N(φ)"), n, 0.5 * base * (1.0 + 0.2 * a / c), TOL_PHI));
        out.push(Check::relative(format!("c={c}: E(φ) - cN(φ)"), e - c * n, -0.2 * a * base, TOL_PHI));
    }
    let p = SpeedParams::from_lambda_sigma(0.5, 0.3).expect("valid speeds");
    let qt = qtilde_sigma(&p, grid);
    let scale = p.sigma * p.theta_sigma;
    out.push(Check::relative("‖Q̃‖∞/(σθ) = ‖Q‖∞", qt.max_abs() / scale, qq.max_abs(), TOL_Q));
    out.push(Check::relative(
        "‖Q̃‖₂/(θσ^{3/4}) = ‖Q‖₂",
        norm_l2(&qt) / (p.theta_sigma * p.sigma.powf(0.75)),
        norm_l2(&qq),
        TOL_Q,
    ));
    out
}

/// Images of named functions under `L` and round trips through its inverse.
pub fn operator_suite(op: &OperatorL) -> Result<Vec<Check>> {
    const TOL: f64 = 1e-7;
    const TOL_INV: f64 = 1e-6;
    let g = op.grid();
    let mut out = Vec::new();
    let qq = q_profile(g);
    out.push(Check::bound("max |LQ'|", op.apply(op.dq())?.max_abs(), TOL));
    let q32 = GridFunction::from_fn(g, |x| q(x).powf(1.5));
    out.push(Check::bound("max |LQ^{3/2} + (5/4)Q^{3/2}|", op.apply(&q32)?.axpy(1.25, &q32).max_abs(), TOL));
    out.push(Check::bound("max |LQ + Q²|", op.apply(&qq)?.add(&qq.mul(&qq)).max_abs(), TOL));
    let xq = GridFunction::from_fn(g, |x| x * q1(x));
    let two_q2 = GridFunction::from_fn(g, |x| 2.0 * q2(x));
    out.push(Check::bound("max |L(yQ') + 2Q''|", op.apply(&xq)?.add(&two_q2).max_abs(), TOL));
    for lam in [0.1, 0.5, 0.9] {
        let aux = AuxProfiles::new(lam, g);
        out.push(Check::bound(
            format!("λ={lam}: max |LP + 2Q|"),
            op.apply(&aux.p)?.add(&qq.scale(2.0)).max_abs(),
            TOL,
        ));
        let expect = GridFunction::from_fn(g, |x| -((3.0 - lam) * q2(x) + 2.0 * q(x).powi(2)));
        out.push(Check::bound(
            format!("λ={lam}: max |LP_λ + (3-λ)Q'' + 2Q²|"),
            op.apply(&aux.p_lambda)?.sub(&expect).max_abs(),
            TOL,
        ));
        let expect = GridFunction::from_fn(g, |x| (3.0 - lam) * q2(x) + q(x).powi(2));
        out.push(Check::bound(
            format!("λ={lam}: max |LV_λ - (3-λ)Q'' - Q²|"),
            op.apply(&aux.v_lambda)?.sub(&expect).max_abs(),
            TOL,
        ));
    }
    let k = check_lphi(op)?;
    out.push(Check::bound("max |(Lφ)' - (2Q - (5/3)Q²)|", k.residual, TOL));
    let s = op.solve(&two_q2.scale(-1.0))?;
    out.push(Check::bound("max |L⁻¹(-2Q'') - yQ'|", s.solution.sub(&xq).max_abs(), TOL_INV));
    let f = op.invert(&qq.mul(&qq).scale(-1.0))?;
    out.push(Check::bound("max |L⁻¹(-Q²) - Q|", f.sub(&qq).max_abs(), TOL_INV));
    let odd = GridFunction::from_fn(g, |x| q(x) * q1(x) * x * x);
    let odd = odd.axpy(-inner(&odd, op.dq()) / inner(op.dq(), op.dq()), op.dq());
    let f = op.invert(&odd)?;
    out.push(Check::bound("max |L L⁻¹h - h|", op.apply(&f)?.sub(&odd).max_abs(), TOL_INV));
    Ok(out)
}

/// The first slot at each `λ`: residuals of both equations and `∫B Q' = 0`.
pub fn omega10_suite(op: &OperatorL, lambdas: &[f64]) -> Result<Vec<Check>> {
    let g = op.grid();
    let mut out = Vec::new();
    for &lam in lambdas {
        let set = solve_omega10(lam, g)?;
        let src = explicit_sources(1, 0, None, lam, g)?;
        let (ra, rb) = system_residuals(op, &set, &src, lam)?;
        out.push(Check::bound(format!("λ={lam}: A-equation residual"), ra, 1e-6));
        out.push(Check::bound(format!("λ={lam}: B-equation residual"), rb, 1e-6));
        out.push(Check::bound(format!("λ={lam}: |∫B Q'|"), inner(&set.b_profile.sampled(), op.dq()).abs(), 1e-7));
        let f = GridFunction::from_fn(g, |x| 2.0 * q1(x));
        let h = GridFunction::from_fn(g, |x| 2.0 * q(x));
        out.push(Check::relative(format!("λ={lam}: a from solvability"), akl_coefficient(&f, &h, 0.0, lam), a10(lam), 1e-6));
        out.push(Check::relative(format!("λ={lam}: b limit"), set.b, b10(lam), 1e-9));
    }
    Ok(out)
}

/// Numeric `b₂₀` from the model problem against its closed form, `d(0) = 0`
/// and the sign of `g(λ)`.
pub fn coefficient_suite(op: &OperatorL, lambdas: &[f64]) -> Result<Vec<Check>> {
    let g = op.grid();
    let mut out = Vec::new();
    for &lam in lambdas {
        let mut lower = BTreeMap::new();
        lower.insert((1, 0), solve_omega10(lam, g)?);
        let src = build_sources(2, 0, &lower, lam, g)?;
        let gamma = gamma_constants(lam, 0.0)?.g20;
        let set = solve_model_problem(op, &src.f.decay, &src.g.decay, gamma, lam)?;
        out.push(Check::relative(format!("λ={lam}: b₂₀ numeric vs closed form"), set.b, b20_closed_form(lam)?, 1e-5));
    }
    out.push(Check::absolute("d(0) = 0", d_lambda(0.0)?, 0.0, 0.0));
    let positive = (1..100).all(|i| g_poly(i as f64 / 100.0) > 0.0);
    out.push(Check::holds("g(λ) > 0 for λ = 0.01, …, 0.99", positive));
    Ok(out)
}
