//! Solitary waves in the physical and rescaled frames.
//!
//! `Q(x) = (3/2) sech²(x/2)` solves `Q'' - Q + Q² = 0`. The BBM solitary wave of
//! speed `c > 1` is `φ_c(x) = (c - 1) Q(√((c-1)/c) x)`. After the change of
//! variables tied to the large speed `c₁`, a wave of speed `c` becomes
//! `Q̃_σ(x) = σ θ_σ Q(√σ x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative, integrate, Grid, GridFunction};

/// `sech²(u)`, written through `exp(-2|u|)` so large arguments underflow to zero.
pub fn sech2(u: f64) -> f64 {
    let e = (-2.0 * u.abs().min(700.0)).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

pub fn q(x: f64) -> f64 {
    1.5 * sech2(0.5 * x)
}

pub fn q1(x: f64) -> f64 {
    -q(x) * (0.5 * x).tanh()
}

pub fn q2(x: f64) -> f64 {
    let v = q(x);
    v - v * v
}

pub fn q3(x: f64) -> f64 {
    q1(x) * (1.0 - 2.0 * q(x))
}

pub fn q4(x: f64) -> f64 {
    let (v, d) = (q(x), q1(x));
    q2(x) * (1.0 - 2.0 * v) - 2.0 * d * d
}

/// `φ = -Q'/Q = tanh(x/2)`; tends to `±1` at `±∞`.
pub fn kink(x: f64) -> f64 {
    (0.5 * x).tanh()
}

/// Speeds `c₁ > c₂ > 1` together with the derived rescaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedParams {
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub theta_sigma: f64,
    pub mu_sigma: f64,
}

impl SpeedParams {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 > 1.0 && c1.is_finite()) {
            return Err(Error::InvalidParameter(format!("c1 = {c1} must exceed 1")));
        }
        if !(c2 > 1.0 && c2 <= c1) {
            return Err(Error::InvalidParameter(format!(
                "c2 = {c2} must satisfy 1 < c2 <= c1 = {c1}"
            )));
        }
        let lambda = (c1 - 1.0) / c1;
        let sigma = (c2 - 1.0) / (c2 * lambda);
        Ok(Self::assemble(c1, c2, lambda, sigma))
    }

    /// Parameters from the rescaled pair `(λ, σ)`, `0 < λ < 1`, `0 < σ ≤ 1`.
    pub fn from_lambda_sigma(lambda: f64, sigma: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must lie in (0, 1)")));
        }
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must lie in (0, 1]")));
        }
        let c1 = 1.0 / (1.0 - lambda);
        let c2 = 1.0 / (1.0 - lambda * sigma);
        Ok(Self::assemble(c1, c2, lambda, sigma))
    }

    fn assemble(c1: f64, c2: f64, lambda: f64, sigma: f64) -> Self {
        let one_minus = 1.0 - lambda * sigma;
        Self {
            c1,
            c2,
            lambda,
            sigma,
            theta_sigma: (1.0 - lambda) / one_minus,
            mu_sigma: (1.0 - sigma) / one_minus,
        }
    }

    /// Interaction half-window in the rescaled frame, `σ^{-1/2 - 1/100}`.
    pub fn tau_sigma(&self) -> f64 {
        self.sigma.powf(-0.5 - 0.01)
    }

    /// Interaction half-window in physical time.
    pub fn big_t(&self) -> f64 {
        let l = self.lambda;
        ((self.c2 - 1.0) / self.c2).powf(-0.5 - 0.01) * ((1.0 - l) / l) * l.powf(0.01)
    }

    pub fn frame(&self) -> FrameMap {
        FrameMap {
            lambda: self.lambda,
        }
    }

    /// `Q̃_σ(s)` and its first two derivatives.
    pub fn qtilde(&self, s: f64) -> f64 {
        self.sigma * self.theta_sigma * q(self.sigma.sqrt() * s)
    }

    pub fn qtilde_d1(&self, s: f64) -> f64 {
        let rs = self.sigma.sqrt();
        self.sigma * self.theta_sigma * rs * q1(rs * s)
    }

    pub fn qtilde_d2(&self, s: f64) -> f64 {
        let v = self.qtilde(s);
        self.sigma * v - v * v / self.theta_sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonState {
    pub speed: f64,
    pub center: f64,
}

impl SolitonState {
    pub fn new(speed: f64, center: f64) -> Result<Self> {
        if !(speed > 1.0) {
            return Err(Error::InvalidParameter(format!("soliton speed {speed} must exceed 1")));
        }
        Ok(Self { speed, center })
    }

    pub fn sample(&self, grid: Grid) -> GridFunction {
        GridFunction::from_fn(grid, |x| phi_c_at(self.speed, x - self.center))
    }
}

/// `φ_c(x)`, no validation.
pub fn phi_c_at(c: f64, x: f64) -> f64 {
    (c - 1.0) * q(((c - 1.0) / c).sqrt() * x)
}

/// `φ_c'(x)`
pub fn phi_c_d1(c: f64, x: f64) -> f64 {
    let r = ((c - 1.0) / c).sqrt();
    (c - 1.0) * r * q1(r * x)
}

/// `∂_c φ_c(x)`
pub fn phi_c_dc(c: f64, x: f64) -> f64 {
    let r = ((c - 1.0) / c).sqrt();
    // d r / dc = 1 / (2 r c²)
    q(r * x) + (c - 1.0) * q1(r * x) * x / (2.0 * r * c * c)
}

/// `∂_c φ_c'(x)`
pub fn phi_c_dc_d1(c: f64, x: f64) -> f64 {
    let r = ((c - 1.0) / c).sqrt();
    let dr = 1.0 / (2.0 * r * c * c);
    q1(r * x) * (r + (c - 1.0) * dr) + (c - 1.0) * r * q2(r * x) * x * dr
}

/// `φ_c''(x)`
pub fn phi_c_d2(c: f64, x: f64) -> f64 {
    let r = ((c - 1.0) / c).sqrt();
    (c - 1.0) * r * r * q2(r * x)
}

/// Closed-form `(E, N)` of `φ_c`, from `∫Q² = 6`, `∫Q³ = 36/5`, `∫Q'² = 6/5`.
pub fn soliton_energy_mass(c: f64) -> (f64, f64) {
    let a = c - 1.0;
    let r = (a / c).sqrt();
    let e = 0.5 * a * a * 6.0 / r + a.powi(3) * 7.2 / (3.0 * r);
    let n = 0.5 * (a * a * r * 1.2 + a * a * 6.0 / r);
    (e, n)
}

pub fn q_profile(grid: Grid) -> GridFunction {
    GridFunction::from_fn(grid, q)
}

pub fn phi_c(c: f64, grid: Grid) -> Result<GridFunction> {
    if !(c > 1.0) {
        return Err(Error::InvalidParameter(format!("speed c = {c} must exceed 1")));
    }
    Ok(GridFunction::from_fn(grid, |x| phi_c_at(c, x)))
}

pub fn qtilde_sigma(p: &SpeedParams, grid: Grid) -> GridFunction {
    GridFunction::from_fn(grid, |x| p.qtilde(x))
}

/// `E = ∫ (u²/2 + u³/3)` and `N = ½ ∫ (u_x² + u²)`.
pub fn energy_mass(f: &GridFunction) -> (f64, f64) {
    let d = derivative(f, 1).expect("order 1 is valid");
    let e = integrate(&f.map(|u| 0.5 * u * u + u * u * u / 3.0));
    let n = 0.5 * integrate(&d.zip_with(f, |ux, u| ux * ux + u * u));
    (e, n)
}

/// Change of variables between the physical frame `(t, x)` and the frame
/// `(t', x')` in which the large soliton is the stationary profile `Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMap {
    pub lambda: f64,
}

impl FrameMap {
    pub fn to_rescaled(&self, t: f64, x: f64) -> (f64, f64) {
        let l = self.lambda;
        (l.powf(1.5) / (1.0 - l) * t, l.sqrt() * (x - t / (1.0 - l)))
    }

    pub fn to_physical(&self, tp: f64, xp: f64) -> (f64, f64) {
        let l = self.lambda;
        let t = (1.0 - l) / l.powf(1.5) * tp;
        (t, xp / l.sqrt() + t / (1.0 - l))
    }

    /// Factor `λ/(1-λ)` taking `z` to `u`.
    pub fn amplitude_to_physical(&self) -> f64 {
        self.lambda / (1.0 - self.lambda)
    }

    /// A rescaled translation `δ` is the physical translation `δ/√λ`.
    pub fn shift_to_physical(&self, delta: f64) -> f64 {
        delta / self.lambda.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, norm_l2, Grid};
    use std::f64::consts::PI;

    #[test]
    fn closed_form_conserved_values() {
        let g = Grid::periodic(150.0, 4096).unwrap();
        for c in [1.05, 1.3, 2.0, 4.0] {
            let (e, n) = energy_mass(&phi_c(c, g).unwrap());
            let (ec, nc) = soliton_energy_mass(c);
            assert!((e - ec).abs() < 1e-10 * ec && (n - nc).abs() < 1e-10 * nc, "{c}");
        }
    }

    #[test]
    fn speed_derivative_of_slope() {
        for c in [1.1, 2.0] {
            for x in [-3.0, 0.4, 5.0] {
                let h = 1e-6;
                let fd = (phi_c_d1(c + h, x) - phi_c_d1(c - h, x)) / (2.0 * h);
                assert!((fd - phi_c_dc_d1(c, x)).abs() < 1e-8);
                let fd2 = (phi_c_d1(c, x + h) - phi_c_d1(c, x - h)) / (2.0 * h);
                assert!((fd2 - phi_c_d2(c, x)).abs() < 1e-8);
            }
        }
    }

    fn grid() -> Grid {
        Grid::profile_default()
    }

    fn residual_max(a: &GridFunction) -> f64 {
        a.max_abs()
    }

    #[test]
    fn q_values_and_equation() {
        assert_eq!(q(0.0), 1.5);
        assert!(q(60.0) < 1e-20 && q(-60.0) < 1e-20);
        assert_eq!(q(1e6), 0.0);
        let g = grid();
        let qq = q_profile(g);
        let d2 = derivative(&qq, 2).unwrap();
        let res = d2.sub(&qq).add(&qq.mul(&qq));
        assert!(residual_max(&res) < 1e-8);
        // closed-form derivatives
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-4;
            assert!(((q(x + h) - q(x - h)) / (2.0 * h) - q1(x)).abs() < 1e-7);
            assert!(((q1(x + h) - q1(x - h)) / (2.0 * h) - q2(x)).abs() < 1e-7);
            assert!(((q2(x + h) - q2(x - h)) / (2.0 * h) - q3(x)).abs() < 1e-7);
            assert!(((q3(x + h) - q3(x - h)) / (2.0 * h) - q4(x)).abs() < 1e-7);
            assert!((kink(x) + q1(x) / q(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_c_profile_equation() {
        let g = grid();
        let p = phi_c(2.0, g).unwrap();
        assert_eq!(p.values[g.origin_index()], 1.5);
        let d2 = derivative(&p, 2).unwrap();
        let res = d2.scale(2.0).axpy(-1.0, &p).add(&p.mul(&p));
        assert!(residual_max(&res) < 1e-8);
        assert!(phi_c(1.0, g).is_err());
        assert!(phi_c(1.0 + 1e-9, g).unwrap().max_abs() < 1e-8);
        let h = 1e-5;
        for x in [-2.0, 0.3, 4.0] {
            let fd = (phi_c_at(2.0 + h, x) - phi_c_at(2.0 - h, x)) / (2.0 * h);
            assert!((fd - phi_c_dc(2.0, x)).abs() < 1e-8);
            let fd = (phi_c_at(1.3, x + h) - phi_c_at(1.3, x - h)) / (2.0 * h);
            assert!((fd - phi_c_d1(1.3, x)).abs() < 1e-9);
        }
    }

    #[test]
    fn speed_params_identities() {
        let p = SpeedParams::new(2.0, 1.1).unwrap();
        assert_eq!(p.lambda, 0.5);
        assert!(p.sigma > 0.0 && p.sigma < 1.0);
        assert!((1.0 - p.lambda * p.sigma - 1.0 / p.c2).abs() < 1e-15);
        let same = SpeedParams::new(3.0, 3.0).unwrap();
        assert!((same.sigma - 1.0).abs() < 1e-15);
        assert!((same.theta_sigma - 1.0).abs() < 1e-15);
        assert!(same.mu_sigma.abs() < 1e-15);
        assert!(SpeedParams::new(1.5, 2.0).is_err());
        assert!(SpeedParams::new(0.5, 0.4).is_err());
        let back = SpeedParams::from_lambda_sigma(p.lambda, p.sigma).unwrap();
        assert!((back.c1 - 2.0).abs() < 1e-14 && (back.c2 - 1.1).abs() < 1e-14);
    }

    #[test]
    fn qtilde_equations() {
        let g = Grid::truncated_line(120.0, 8192).unwrap();
        let one = SpeedParams::from_lambda_sigma(0.4, 1.0).unwrap();
        assert!(qtilde_sigma(&one, g).sub(&q_profile(g)).max_abs() < 1e-15);
        let p = SpeedParams::from_lambda_sigma(0.5, 0.1).unwrap();
        let qt = qtilde_sigma(&p, g);
        let d1 = derivative(&qt, 1).unwrap();
        let d2 = derivative(&qt, 2).unwrap();
        let th = p.theta_sigma;
        let res = d2.axpy(-p.sigma, &qt).axpy(1.0 / th, &qt.mul(&qt));
        assert!(res.max_abs() < 1e-8);
        let first = d1.mul(&d1).axpy(-p.sigma, &qt.mul(&qt)).axpy(
            2.0 / (3.0 * th),
            &qt.mul(&qt).mul(&qt),
        );
        assert!(first.max_abs() < 1e-8);
        // exact scaling laws
        assert!((qt.max_abs() / (p.sigma * th) - 1.5).abs() < 1e-12);
        let l2 = norm_l2(&qt) / (th * p.sigma.powf(0.75));
        assert!((l2 - 6f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn energy_and_mass() {
        let g = Grid::truncated_line(80.0, 8192).unwrap();
        let (e, n) = energy_mass(&phi_c(2.0, g).unwrap());
        let s2 = 2f64.sqrt();
        assert!((e - 0.5 * s2 * 1.8 * 6.0).abs() < 1e-8);
        assert!((n - 0.5 / s2 * 2.2 * 6.0).abs() < 1e-8);
        let (e, n) = energy_mass(&q_profile(g));
        assert!((e - 5.4).abs() < 1e-9);
        assert!((n - 0.5 * 7.2).abs() < 1e-9);
        assert_eq!(energy_mass(&GridFunction::zeros(g)), (0.0, 0.0));
        let qq = q_profile(g);
        assert!((inner(&qq, &qq) - 6.0).abs() < 1e-10);
        let _ = PI;
    }

    #[test]
    fn frame_round_trip_and_dictionary() {
        let p = SpeedParams::new(2.0, 1.09).unwrap();
        let f = p.frame();
        for (t, x) in [(0.0, 0.0), (3.5, -12.0), (-40.0, 7.25)] {
            let (tp, xp) = f.to_rescaled(t, x);
            let (t2, x2) = f.to_physical(tp, xp);
            assert!((t2 - t).abs() < 1e-14 * t.abs().max(1.0));
            assert!((x2 - x).abs() < 1e-13 * x.abs().max(1.0));
        }
        let lam = p.lambda;
        let delta = 0.37;
        let t = 5.0;
        for x in [-20.0, -3.0, 0.0, 1.7, 9.0] {
            let (tp, xp) = f.to_rescaled(t, x);
            let ys = xp + p.mu_sigma * tp;
            let lhs = f.amplitude_to_physical() * p.qtilde(ys + delta);
            let rhs = phi_c_at(p.c2, x - p.c2 * t + f.shift_to_physical(delta));
            assert!((lhs - rhs).abs() < 1e-10);
            // (Q̃²)' versus (φ_c²)'
            let lhs = 2.0 * p.qtilde(ys + delta) * p.qtilde_d1(ys + delta);
            let xi = x - p.c2 * t + delta / lam.sqrt();
            let rhs = (1.0 - lam).powi(2) / lam.powf(2.5)
                * 2.0
                * phi_c_at(p.c2, xi)
                * phi_c_d1(p.c2, xi);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }
}
