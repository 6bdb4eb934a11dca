//! Approximate two-soliton solutions `z`, `z_#` in the rescaled frame, their
//! residuals, endpoint decompositions and the physical-frame solution `v`.
//!
//! With `y_σ = x + μt` and `y = x - α(y_σ)`,
//! `z = Q(y) + Q̃(y_σ) + Σ σ^l (A_{k,l}(y) Q̃^k(y_σ) + B_{k,l}(y) (Q̃^k)'(y_σ))`
//! and `z_# = z - d (Q̃²)'(y_σ) (1 - P(y))`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{fit_power_law, PowerFit};
use crate::grid::{norm_h1, Grid, GridFunction, GridKind};
use crate::omega::{d_lambda, ProfileLattice};
use crate::operator::OperatorL;
use crate::profile::Profile;
use crate::solitons::{q, q1, q2, SpeedParams};
use crate::spectral::SpectralPlan;

/// Half-length of residual grids in units of the small soliton's width `σ^{-1/2}`.
pub const WIDTHS: f64 = 40.0;

/// Interpolation stencil for profiles sampled on the lattice grid.
const STENCIL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    SymmetricZ,
    ModifiedZSharp,
    PhysicalV,
}

/// Which pieces of the ansatz are kept. Dropping every correction slot also
/// drops the shift, so `α = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Components {
    pub big: bool,
    pub small: bool,
    /// Largest `k + l` among the correction slots, `0..=3`.
    pub max_order: u32,
}

impl Default for Components {
    fn default() -> Self {
        Self {
            big: true,
            small: true,
            max_order: 3,
        }
    }
}

/// `a_{k,l} σ^l`, one term of the shift rate `β`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShiftRate {
    pub k: u32,
    pub l: u32,
    pub coefficient: f64,
}

/// Full samples of a [`Profile`] evaluable anywhere on the line.
#[derive(Debug, Clone)]
struct Sampled {
    decay: Vec<f64>,
    x0: f64,
    h: f64,
    constant: f64,
    kink: f64,
}

impl Sampled {
    fn new(p: &Profile) -> Self {
        let g = p.grid();
        Self {
            decay: p.decay.values.clone(),
            x0: g.x(0),
            h: g.spacing(),
            constant: p.constant,
            kink: p.kink,
        }
    }

    fn at(&self, y: f64) -> f64 {
        let mut v = self.constant;
        if self.kink != 0.0 {
            v += self.kink * (0.5 * y).tanh();
        }
        v + self.decay_at(y)
    }

    /// Barycentric Lagrange interpolation on `STENCIL` equispaced nodes;
    /// zero off the sampled interval.
    fn decay_at(&self, y: f64) -> f64 {
        let n = self.decay.len();
        let u = (y - self.x0) / self.h;
        if !(u >= 0.0 && u <= (n - 1) as f64) {
            return 0.0;
        }
        let start = (u.floor() as isize - (STENCIL as isize / 2 - 1)).clamp(0, (n - STENCIL) as isize) as usize;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut w = 1.0;
        for i in 0..STENCIL {
            let du = u - (start + i) as f64;
            if du == 0.0 {
                return self.decay[start + i];
            }
            let c = w / du;
            num += c * self.decay[start + i];
            den += c;
            w = -w * (STENCIL - 1 - i) as f64 / (i + 1) as f64;
        }
        num / den
    }
}

#[derive(Debug, Clone)]
struct SlotEval {
    k: i32,
    weight: f64,
    a: Sampled,
    da: Sampled,
    b: Sampled,
    db: Sampled,
}

/// Translations and interaction times in both frames.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShiftData {
    pub delta: f64,
    pub delta_sigma: f64,
    #[serde(rename = "Delta1")]
    pub delta1: f64,
    #[serde(rename = "Delta2")]
    pub delta2: f64,
    #[serde(rename = "T")]
    pub big_t: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub tau_sigma: f64,
    pub b11_tilde: f64,
}

/// Leading-order predictions for the shifts.
pub fn delta_leading(lambda: f64, sigma: f64) -> f64 {
    sigma.sqrt() * 10.0 * (1.0 - lambda * lambda) / quad(lambda) * 6.0
}

pub fn delta_sigma_leading(lambda: f64) -> f64 {
    (-60.0 + 36.0 * lambda * lambda) / quad(lambda)
}

/// `Δ₁` at leading order for speeds `c₁ = 1/(1-λ)`, `c₂`.
pub fn delta1_leading(lambda: f64, c2: f64) -> f64 {
    (c2 - 1.0).sqrt() * 10.0 * (1.0 - lambda * lambda) / (lambda * quad(lambda)) * 6.0
}

pub fn delta2_leading(lambda: f64) -> f64 {
    (-30.0 + 18.0 * lambda * lambda) / (lambda.sqrt() * quad(lambda))
}

fn quad(lambda: f64) -> f64 {
    15.0 + 10.0 * lambda - lambda * lambda
}

/// Sup norms of the shift and its rate, with their `σ`-scaled ratios.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaBounds {
    pub sup_alpha: f64,
    pub sup_beta: f64,
    pub alpha_ratio: f64,
    pub beta_ratio: f64,
}

/// `∫₀^s sech^{2k}(r) dr` as a polynomial in `tanh s`, `k = 1, 2, 3`.
fn sech_power_integral(k: i32, t: f64) -> f64 {
    let t2 = t * t;
    match k {
        1 => t,
        2 => t - t * t2 / 3.0,
        3 => t - 2.0 * t * t2 / 3.0 + t * t2 * t2 / 5.0,
        _ => unreachable!("slots have k <= 3"),
    }
}

#[derive(Debug, Clone)]
pub struct ApproxSolution {
    pub params: SpeedParams,
    pub variant: Variant,
    /// Coefficient of the residue correction in `z_#`.
    pub d: f64,
    pub beta_coeffs: Vec<ShiftRate>,
    pub components: Components,
    lattice: Arc<ProfileLattice>,
    slots: Vec<SlotEval>,
}

impl ApproxSolution {
    pub fn new(params: SpeedParams, lattice: Arc<ProfileLattice>, variant: Variant) -> Result<Self> {
        Self::with_components(params, lattice, variant, Components::default())
    }

    pub fn with_components(
        params: SpeedParams,
        lattice: Arc<ProfileLattice>,
        variant: Variant,
        components: Components,
    ) -> Result<Self> {
        if (lattice.lambda - params.lambda).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "profile lattice built for lambda = {} but speeds give {}",
                lattice.lambda, params.lambda
            )));
        }
        if components.max_order > 3 {
            return Err(Error::InvalidParameter(format!(
                "correction order {} exceeds 3",
                components.max_order
            )));
        }
        let sigma = params.sigma;
        let mut slots = Vec::new();
        let mut beta_coeffs = Vec::new();
        for (&(k, l), set) in &lattice.sets {
            if k + l > components.max_order {
                continue;
            }
            let weight = sigma.powi(l as i32);
            beta_coeffs.push(ShiftRate {
                k,
                l,
                coefficient: set.a * weight,
            });
            slots.push(SlotEval {
                k: k as i32,
                weight,
                a: Sampled::new(&set.a_profile),
                da: Sampled::new(&set.a_profile.derivative()?),
                b: Sampled::new(&set.b_profile),
                db: Sampled::new(&set.b_profile.derivative()?),
            });
        }
        for need in [(1, 0), (2, 0), (1, 1), (3, 0), (2, 1), (1, 2)] {
            if need.0 + need.1 <= components.max_order && !lattice.sets.contains_key(&need) {
                return Err(Error::MissingProfile(need.0 as usize, need.1 as usize));
            }
        }
        Ok(Self {
            params,
            variant,
            d: d_lambda(params.lambda)?,
            beta_coeffs,
            components,
            lattice,
            slots,
        })
    }

    /// Solves the profile lattice for `λ` on the lattice grid and builds the solution.
    pub fn build(lambda: f64, sigma: f64, variant: Variant) -> Result<Self> {
        let lattice = Arc::new(solve_lattice(lambda)?);
        Self::new(SpeedParams::from_lambda_sigma(lambda, sigma)?, lattice, variant)
    }

    /// Same profiles, another variant.
    pub fn to_variant(&self, variant: Variant) -> Self {
        Self {
            variant,
            ..self.clone()
        }
    }

    /// Replace `d` (for example by 0, which makes `z_# = z`).
    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn lattice(&self) -> &Arc<ProfileLattice> {
        &self.lattice
    }

    pub fn beta(&self, s: f64) -> f64 {
        let qt = self.params.qtilde(s);
        self.beta_coeffs
            .iter()
            .map(|r| r.coefficient * qt.powi(r.k as i32))
            .sum()
    }

    /// `α(s) = ∫₀^s β`, exact through `∫ sech^{2k} = P_k(tanh)`.
    pub fn alpha(&self, s: f64) -> f64 {
        let p = &self.params;
        let rs = p.sigma.sqrt();
        let amp = 1.5 * p.sigma * p.theta_sigma;
        let t = (0.5 * rs * s).tanh();
        self.beta_coeffs
            .iter()
            .map(|r| {
                let k = r.k as i32;
                r.coefficient * amp.powi(k) * 2.0 / rs * sech_power_integral(k, t)
            })
            .sum()
    }

    pub fn alpha_bounds(&self) -> AlphaBounds {
        let p = &self.params;
        let rs = p.sigma.sqrt();
        let samples = 4000;
        let reach = 40.0 / rs;
        let (mut sa, mut sb) = (0.0f64, 0.0f64);
        for i in 0..=samples {
            let s = reach * i as f64 / samples as f64;
            sa = sa.max(self.alpha(s).abs());
            sb = sb.max(self.beta(s).abs());
        }
        AlphaBounds {
            sup_alpha: sa,
            sup_beta: sb,
            alpha_ratio: sa / rs,
            beta_ratio: sb / p.sigma,
        }
    }

    pub fn shift_data(&self) -> ShiftData {
        let p = &self.params;
        let delta = 2.0 * self.alpha(f64::INFINITY);
        let b10 = self.lattice.set(1, 0).b;
        let b11 = self.lattice.set(1, 1).b;
        let b11_tilde = b11 - b10.powi(3) / 6.0;
        let delta_sigma = 2.0 * (b10 + p.sigma * b11_tilde);
        let frame = p.frame();
        let scale = (1.0 - p.lambda) / p.lambda.powf(1.5);
        ShiftData {
            delta,
            delta_sigma,
            delta1: frame.shift_to_physical(delta),
            delta2: frame.shift_to_physical(delta_sigma),
            big_t: p.big_t(),
            big_d: scale * self.d,
            tau_sigma: p.tau_sigma(),
            b11_tilde,
        }
    }

    /// Default periodic grid for residual evaluation in the rescaled frame.
    pub fn residual_grid(&self) -> Result<Grid> {
        let rs = self.params.sigma.sqrt();
        let half = (WIDTHS / rs).max(60.0);
        Grid::periodic_with_spacing(half, (0.2 * rs).min(0.05) * 0.999)
    }

    /// Periodic grid for `v`, co-moving with the large soliton.
    pub fn physical_grid(&self) -> Result<Grid> {
        let g = self.residual_grid()?;
        let rl = self.params.lambda.sqrt();
        Grid::periodic(g.half_length / rl, g.n_points)
    }

    /// `(z, ∂_t z)` at one point, with `∂_t` by the chain rule.
    fn point(&self, t: f64, x: f64, sharp: bool) -> (f64, f64) {
        let p = &self.params;
        let mu = p.mu_sigma;
        let s = x + mu * t;
        let beta = if self.slots.is_empty() { 0.0 } else { self.beta(s) };
        let y = if self.slots.is_empty() { x } else { x - self.alpha(s) };
        let q0 = p.qtilde(s);
        let qd = p.qtilde_d1(s);
        let qdd = p.sigma * q0 - q0 * q0 / p.theta_sigma;
        let mut z = 0.0;
        let mut zt = 0.0;
        if self.components.big {
            z += q(y);
            zt -= beta * q1(y);
        }
        if self.components.small {
            z += q0;
            zt += qd;
        }
        for sl in &self.slots {
            let k = sl.k;
            let kf = k as f64;
            let pk = q0.powi(k);
            let dpk = kf * q0.powi(k - 1) * qd;
            let ddpk = if k >= 2 {
                kf * (kf - 1.0) * q0.powi(k - 2) * qd * qd
            } else {
                0.0
            } + kf * q0.powi(k - 1) * qdd;
            let (a, da, b, db) = (sl.a.at(y), sl.da.at(y), sl.b.at(y), sl.db.at(y));
            z += sl.weight * (a * pk + b * dpk);
            zt += sl.weight * (-beta * da * pk + a * dpk - beta * db * dpk + b * ddpk);
        }
        zt *= mu;
        if sharp && self.d != 0.0 {
            let sq_d1 = 2.0 * q0 * qd;
            let sq_d2 = 2.0 * (qd * qd + q0 * qdd);
            let pp = 2.0 * q(y) + y * q1(y);
            let dpp = 3.0 * q1(y) + y * q2(y);
            z -= self.d * sq_d1 * (1.0 - pp);
            zt -= self.d * mu * (sq_d2 * (1.0 - pp) + sq_d1 * beta * dpp);
        }
        (z, zt)
    }

    fn check_window(&self, t: f64) -> Result<()> {
        let tau = match self.variant {
            Variant::PhysicalV => self.params.big_t(),
            _ => self.params.tau_sigma(),
        };
        if t.abs() > 2.0 * tau * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "time {t} lies outside the window |t| <= {}",
                2.0 * tau
            )));
        }
        Ok(())
    }

    fn is_sharp(&self) -> bool {
        self.variant != Variant::SymmetricZ
    }

    /// Samples the solution at time `t`, `|t|` at most twice the interaction window.
    ///
    /// For [`Variant::PhysicalV`] the time is physical and node `x_j` stands
    /// for the physical point `x_j + c₁t`.
    pub fn evaluate(&self, t: f64, grid: Grid) -> Result<GridFunction> {
        self.check_window(t)?;
        Ok(self.evaluate_unchecked(t, grid))
    }

    /// As [`Self::evaluate`] without the time-window check.
    pub fn evaluate_unchecked(&self, t: f64, grid: Grid) -> GridFunction {
        self.sample_pair(t, grid).0
    }

    /// Values at arbitrary nodes, with the node convention of [`Self::evaluate`].
    pub fn sample_at(&self, t: f64, nodes: &[f64]) -> Vec<f64> {
        let sharp = self.is_sharp();
        match self.variant {
            Variant::PhysicalV => {
                let lam = self.params.lambda;
                let rl = lam.sqrt();
                let tp = lam.powf(1.5) / (1.0 - lam) * t;
                let scale = lam / (1.0 - lam);
                nodes.iter().map(|x| scale * self.point(tp, rl * x, sharp).0).collect()
            }
            _ => nodes.iter().map(|&x| self.point(t, x, sharp).0).collect(),
        }
    }

    fn sample_pair(&self, t: f64, grid: Grid) -> (GridFunction, GridFunction) {
        let sharp = self.is_sharp();
        let (pts, scale, rate, tp) = match self.variant {
            Variant::PhysicalV => {
                let lam = self.params.lambda;
                let rl = lam.sqrt();
                let tp = lam.powf(1.5) / (1.0 - lam) * t;
                let pts: Vec<f64> = grid.points().iter().map(|x| rl * x).collect();
                (pts, lam / (1.0 - lam), lam.powf(1.5) / (1.0 - lam), tp)
            }
            _ => (grid.points(), 1.0, 1.0, t),
        };
        let (z, zt): (Vec<f64>, Vec<f64>) = pts
            .iter()
            .map(|&x| {
                let (a, b) = self.point(tp, x, sharp);
                (scale * a, scale * rate * b)
            })
            .unzip();
        (GridFunction { grid, values: z }, GridFunction { grid, values: zt })
    }

    /// Residual of the equation the variant approximates, spectrally in `x`.
    ///
    /// Rescaled variants: `(1 - λ∂²)∂_t z + ∂(∂²z - z + z²)`.
    /// Physical variant: `(1 - ∂²)∂_t v + ∂(v + v²)` in the co-moving grid.
    pub fn residual(&self, t: f64, grid: Grid) -> Result<GridFunction> {
        self.check_window(t)?;
        self.residual_unchecked(t, grid)
    }

    pub fn residual_unchecked(&self, t: f64, grid: Grid) -> Result<GridFunction> {
        if grid.kind != GridKind::Periodic {
            return Err(Error::InvalidGrid("residuals need a periodic grid".into()));
        }
        let plan = grid.spectral_plan();
        let (z, mut zt) = self.sample_pair(t, grid);
        let values = match self.variant {
            Variant::PhysicalV => {
                let c1 = self.params.c1;
                let vx = truncated_derivative(&plan, &z.values, 1);
                // the grid moves with speed c₁
                for (a, b) in zt.values.iter_mut().zip(&vx) {
                    *a -= c1 * b;
                }
                let flux: Vec<f64> = z.values.iter().map(|v| v + v * v).collect();
                assemble(&plan, &zt.values, 1.0, &flux)
            }
            _ => {
                let lam = self.params.lambda;
                let zxx = truncated_derivative(&plan, &z.values, 2);
                let inner: Vec<f64> = z
                    .values
                    .iter()
                    .zip(&zxx)
                    .map(|(v, vxx)| vxx - v + v * v)
                    .collect();
                assemble(&plan, &zt.values, lam, &inner)
            }
        };
        Ok(GridFunction { grid, values })
    }

    /// The term `(Q̃²)''(y_σ) (-(3-λ)P'' + 2Q - 2PQ)(y)` carried by `S(z_#) - S(z)`.
    pub fn residue_leading_term(&self, t: f64, grid: Grid) -> GridFunction {
        let p = &self.params;
        let lam = p.lambda;
        GridFunction::from_fn(grid, |x| {
            let s = x + p.mu_sigma * t;
            let y = if self.slots.is_empty() { x } else { x - self.alpha(s) };
            let q0 = p.qtilde(s);
            let qd = p.qtilde_d1(s);
            let qdd = p.sigma * q0 - q0 * q0 / p.theta_sigma;
            let sq_d2 = 2.0 * (qd * qd + q0 * qdd);
            let pp = 2.0 * q(y) + y * q1(y);
            let ppp = 4.0 * q2(y) + y * crate::solitons::q3(y);
            sq_d2 * (-(3.0 - lam) * ppp + 2.0 * q(y) - 2.0 * pp * q(y))
        })
    }
}

/// Residual wavenumber cutoff. Every term is analytic in `|Im x| < π` at unit
/// scale, so modes above it hold nothing but rounding noise amplified by `k³`.
pub const SPECTRAL_CUTOFF: f64 = 25.0;

/// `(1 - c∂²) a + ∂ b` in one spectral pass, truncated at [`SPECTRAL_CUTOFF`].
fn assemble(plan: &SpectralPlan, a: &[f64], c: f64, b: &[f64]) -> Vec<f64> {
    use rustfft::num_complex::Complex64;
    let mut fa = Vec::with_capacity(a.len());
    let mut fb = Vec::with_capacity(b.len());
    plan.forward_real(a, &mut fa);
    plan.forward_real(b, &mut fb);
    for (j, (x, y)) in fa.iter_mut().zip(&fb).enumerate() {
        let k = plan.wavenumbers()[j];
        *x = if k.abs() > SPECTRAL_CUTOFF || plan.is_nyquist(j) {
            Complex64::new(0.0, 0.0)
        } else {
            *x * (1.0 + c * k * k) + y * Complex64::new(0.0, k)
        };
    }
    let mut out = vec![0.0; a.len()];
    plan.inverse_real(&mut fa, &mut out);
    out
}

fn truncated_derivative(plan: &SpectralPlan, v: &[f64], order: u32) -> Vec<f64> {
    use rustfft::num_complex::Complex64;
    plan.apply(v, |k, j| {
        if k.abs() > SPECTRAL_CUTOFF || plan.is_nyquist(j) {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k).powu(order)
        }
    })
}

/// Profile lattice for `λ` on [`Grid::lattice_default`].
pub fn solve_lattice(lambda: f64) -> Result<ProfileLattice> {
    let op = OperatorL::new(Grid::lattice_default())?;
    ProfileLattice::solve(&op, lambda)
}

/// H¹ distances of the solution at `±t` from the endpoint soliton sums.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EndpointErrors {
    pub t: f64,
    /// `z(t)` against the three-term sum with `-d(Q̃²)'`.
    pub z_plus: f64,
    /// `z(t)` against the two-soliton sum alone.
    pub z_plus_without_residue: f64,
    /// `z(-t)` against the three-term sum with `+d(Q̃²)'`.
    pub z_minus: f64,
    /// `z_#(t)` against the three-term sum with `-2d(Q̃²)'`.
    pub sharp_plus: f64,
    /// `z_#(-t)` against the two-soliton sum.
    pub sharp_minus: f64,
}

/// `Q(x ∓ δ/2) + Q̃(x ± μt ∓ δ_σ/2) + c (Q̃²)'(x ± μt ∓ δ_σ/2)` with sign `side`.
fn endpoint_sum(a: &ApproxSolution, t: f64, side: f64, residue: f64, grid: Grid) -> GridFunction {
    let p = &a.params;
    let sh = a.shift_data();
    GridFunction::from_fn(grid, |x| {
        let s = x + side * (p.mu_sigma * t - 0.5 * sh.delta_sigma);
        q(x - side * 0.5 * sh.delta) + p.qtilde(s) + residue * 2.0 * p.qtilde(s) * p.qtilde_d1(s)
    })
}

/// Endpoint decompositions at `±t`, usually `t = τ_σ`.
pub fn endpoint_decompositions(a: &ApproxSolution, t: f64, grid: Grid) -> EndpointErrors {
    let sym = a.to_variant(Variant::SymmetricZ);
    let sharp = a.to_variant(Variant::ModifiedZSharp);
    let d = a.d;
    let zp = sym.evaluate_unchecked(t, grid);
    let zm = sym.evaluate_unchecked(-t, grid);
    let sp = sharp.evaluate_unchecked(t, grid);
    let sm = sharp.evaluate_unchecked(-t, grid);
    let dist = |f: &GridFunction, g: &GridFunction| norm_h1(&f.sub(g));
    EndpointErrors {
        t,
        z_plus: dist(&zp, &endpoint_sum(a, t, 1.0, -d, grid)),
        z_plus_without_residue: dist(&zp, &endpoint_sum(a, t, 1.0, 0.0, grid)),
        z_minus: dist(&zm, &endpoint_sum(a, t, -1.0, d, grid)),
        sharp_plus: dist(&sp, &endpoint_sum(a, t, 1.0, -2.0 * d, grid)),
        sharp_minus: dist(&sm, &endpoint_sum(a, t, -1.0, 0.0, grid)),
    }
}

/// Time at which the small soliton sits `reach` of its own widths from the
/// large one, `√σ μ t = reach`.
pub fn separated_time(p: &SpeedParams, reach: f64) -> f64 {
    reach / (p.sigma.sqrt() * p.mu_sigma)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub sigma: f64,
    pub t: f64,
    #[serde(rename = "norm_S")]
    pub norm_s: f64,
    #[serde(rename = "norm_S_sharp")]
    pub norm_s_sharp: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointRow {
    pub lambda: f64,
    pub sigma: f64,
    pub shifts: ShiftData,
    pub alpha: AlphaBounds,
    /// At the literal window end `τ_σ`.
    pub at_window: EndpointErrors,
    /// At a time where the solitons are well separated.
    pub separated: EndpointErrors,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanFits {
    pub residual: PowerFit,
    pub residual_sharp: PowerFit,
    pub endpoint_z: PowerFit,
    pub endpoint_sharp: PowerFit,
    pub endpoint_z_separated: PowerFit,
    pub endpoint_sharp_separated: PowerFit,
    pub delta_error: PowerFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualScan {
    pub lambda: f64,
    pub sigmas: Vec<f64>,
    pub rows: Vec<ScanRow>,
    pub endpoints: Vec<EndpointRow>,
    pub fits: ScanFits,
}

/// Separation used for the `separated` endpoint column.
pub const SEPARATED_REACH: f64 = 30.0;

/// Residual norms at `t ∈ {0, ±τ_σ/2, ±τ_σ}` and endpoint errors for each `σ`.
pub fn residual_scan(lattice: Arc<ProfileLattice>, sigmas: &[f64]) -> Result<ResidualScan> {
    let lambda = lattice.lambda;
    let per_sigma: Vec<Result<(Vec<ScanRow>, EndpointRow)>> = sigmas
        .par_iter()
        .map(|&sigma| {
            let params = SpeedParams::from_lambda_sigma(lambda, sigma)?;
            let sym = ApproxSolution::new(params, lattice.clone(), Variant::SymmetricZ)?;
            let sharp = sym.to_variant(Variant::ModifiedZSharp);
            let grid = sym.residual_grid()?;
            let tau = params.tau_sigma();
            let mut rows = Vec::new();
            for t in [-tau, -0.5 * tau, 0.0, 0.5 * tau, tau] {
                rows.push(ScanRow {
                    lambda,
                    sigma,
                    t,
                    norm_s: norm_h1(&sym.residual(t, grid)?),
                    norm_s_sharp: norm_h1(&sharp.residual(t, grid)?),
                });
            }
            let t_sep = separated_time(&params, SEPARATED_REACH);
            let wide = Grid::periodic_with_spacing(
                grid.half_length + params.mu_sigma * t_sep,
                grid.spacing(),
            )?;
            let end = EndpointRow {
                lambda,
                sigma,
                shifts: sym.shift_data(),
                alpha: sym.alpha_bounds(),
                at_window: endpoint_decompositions(&sym, tau, grid),
                separated: endpoint_decompositions(&sym, t_sep, wide),
            };
            Ok((rows, end))
        })
        .collect();
    let mut rows = Vec::new();
    let mut endpoints = Vec::new();
    for r in per_sigma {
        let (a, b) = r?;
        rows.extend(a);
        endpoints.push(b);
    }
    let max_over = |f: &dyn Fn(&ScanRow) -> f64| -> Vec<f64> {
        sigmas
            .iter()
            .map(|s| {
                rows.iter()
                    .filter(|r| r.sigma == *s)
                    .map(f)
                    .fold(0.0, f64::max)
            })
            .collect()
    };
    let col = |f: &dyn Fn(&EndpointRow) -> f64| -> Vec<f64> { endpoints.iter().map(f).collect() };
    let fits = ScanFits {
        residual: fit_power_law(sigmas, &max_over(&|r| r.norm_s))?,
        residual_sharp: fit_power_law(sigmas, &max_over(&|r| r.norm_s_sharp))?,
        endpoint_z: fit_power_law(sigmas, &col(&|e| e.at_window.z_plus.max(e.at_window.z_minus)))?,
        endpoint_sharp: fit_power_law(sigmas, &col(&|e| e.at_window.sharp_minus))?,
        endpoint_z_separated: fit_power_law(sigmas, &col(&|e| e.separated.z_plus.max(e.separated.z_minus)))?,
        endpoint_sharp_separated: fit_power_law(sigmas, &col(&|e| e.separated.sharp_minus))?,
        delta_error: fit_power_law(
            sigmas,
            &col(&|e| (e.shifts.delta - delta_leading(lambda, e.sigma)).abs()),
        )?,
    };
    Ok(ResidualScan {
        lambda,
        sigmas: sigmas.to_vec(),
        rows,
        endpoints,
        fits,
    })
}

impl ResidualScan {
    pub const CSV_HEADER: &'static str = "lambda,sigma,t,norm_S,norm_S_sharp";

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{:e},{:e}", r.lambda, r.sigma, r.t, r.norm_s, r.norm_s_sharp)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn lattice() -> Arc<ProfileLattice> {
        static L: OnceLock<Arc<ProfileLattice>> = OnceLock::new();
        L.get_or_init(|| Arc::new(solve_lattice(0.5).unwrap())).clone()
    }

    fn solution(sigma: f64, variant: Variant) -> ApproxSolution {
        let p = SpeedParams::from_lambda_sigma(0.5, sigma).unwrap();
        ApproxSolution::new(p, lattice(), variant).unwrap()
    }

    #[test]
    fn interpolation_is_accurate() {
        let g = Grid::lattice_default();
        let s = Sampled::new(&Profile::with_tails(GridFunction::from_fn(g, q1), 0.3, -0.7));
        for y in [-3.21, -0.0137, 0.5, 7.777, 79.99, -80.0, 120.0] {
            let exact = q1(y) + 0.3 - 0.7 * (0.5 * y).tanh();
            assert!((s.at(y) - exact).abs() < 1e-12, "{y}: {}", s.at(y) - exact);
        }
    }

    #[test]
    fn alpha_matches_quadrature_and_is_odd() {
        let a = solution(0.1, Variant::SymmetricZ);
        let n = 20000;
        let s_end = 17.3;
        let h = s_end / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let r = (i as f64 + 0.5) * h;
            acc += a.beta(r) * h;
        }
        assert!((a.alpha(s_end) - acc).abs() < 1e-8);
        assert!((a.alpha(-s_end) + a.alpha(s_end)).abs() < 1e-15);
        assert_eq!(a.alpha(0.0), 0.0);
        let b = a.alpha_bounds();
        assert!(b.alpha_ratio < 10.0 && b.beta_ratio < 10.0);
    }

    #[test]
    fn symmetric_in_space_time() {
        let a = solution(0.1, Variant::SymmetricZ);
        let g = a.residual_grid().unwrap();
        let tau = a.params.tau_sigma();
        for t in [0.0, 0.5 * tau, tau] {
            let f = a.evaluate(t, g).unwrap();
            let r = a.evaluate(-t, g).unwrap();
            // x_j ↦ -x_j is j ↦ n - j on [-L, L)
            let n = g.n_points;
            let gap = (1..n).map(|j| (f.values[j] - r.values[n - j]).abs()).fold(0.0, f64::max);
            assert!(gap < 1e-10, "t={t}: {gap}");
        }
    }

    #[test]
    fn single_solitons_are_exact() {
        let p = SpeedParams::from_lambda_sigma(0.5, 0.1).unwrap();
        for (big, small) in [(false, true), (true, false)] {
            let c = Components {
                big,
                small,
                max_order: 0,
            };
            let a = ApproxSolution::with_components(p, lattice(), Variant::SymmetricZ, c).unwrap();
            let g = a.residual_grid().unwrap();
            let s = a.residual(3.0, g).unwrap();
            assert!(s.max_abs() < 1e-9, "{big} {small}: {}", s.max_abs());
            if big {
                let z = a.evaluate(3.0, g).unwrap();
                assert!(z.sub(&GridFunction::from_fn(g, q)).max_abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_residue_coefficient_removes_the_correction() {
        let a = solution(0.1, Variant::ModifiedZSharp).with_d(0.0);
        let z = a.to_variant(Variant::SymmetricZ);
        let g = a.residual_grid().unwrap();
        let t = 0.7 * a.params.tau_sigma();
        let gap = a.residual(t, g).unwrap().sub(&z.residual(t, g).unwrap()).max_abs();
        assert!(gap < 1e-12, "{gap}");
        assert!(a.evaluate(t, g).unwrap().sub(&z.evaluate(t, g).unwrap()).max_abs() < 1e-14);
    }

    #[test]
    fn time_derivative_matches_difference_quotient() {
        let a = solution(0.15, Variant::ModifiedZSharp);
        let g = a.residual_grid().unwrap();
        let (t, h) = (2.0, 1e-4);
        let (_, zt) = a.sample_pair(t, g);
        let fwd = a.evaluate(t + h, g).unwrap();
        let bwd = a.evaluate(t - h, g).unwrap();
        let fd = fwd.sub(&bwd).scale(0.5 / h);
        assert!(zt.sub(&fd).max_abs() < 1e-7, "{}", zt.sub(&fd).max_abs());
    }

    #[test]
    fn window_is_enforced() {
        let a = solution(0.1, Variant::SymmetricZ);
        let g = a.residual_grid().unwrap();
        assert!(a.evaluate(2.5 * a.params.tau_sigma(), g).is_err());
        let p = SpeedParams::from_lambda_sigma(0.4, 0.1).unwrap();
        assert!(ApproxSolution::new(p, lattice(), Variant::SymmetricZ).is_err());
    }

    #[test]
    fn shift_predictions() {
        assert!((delta2_leading(0.5) - (-1.8259)).abs() < 1e-4);
        assert!((delta1_leading(0.5, 1.09) - 1.3671).abs() < 1e-4);
        for i in 1..=9 {
            let lam = i as f64 / 10.0;
            let d = d_lambda(lam).unwrap();
            assert!(d != 0.0 && ((1.0 - lam) / lam.powf(1.5) * d).abs() > 0.0);
        }
        let a = solution(0.02, Variant::SymmetricZ);
        let sh = a.shift_data();
        assert!((sh.delta_sigma - delta_sigma_leading(0.5)).abs() < 0.1);
        assert!((sh.delta - delta_leading(0.5, 0.02)).abs() < 0.1);
        assert!((sh.delta2 - sh.delta_sigma / 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn physical_frame_is_bookkeeping() {
        let a = solution(0.1, Variant::ModifiedZSharp);
        let v = a.to_variant(Variant::PhysicalV);
        let g = v.physical_grid().unwrap();
        let t = 0.3 * a.params.big_t();
        let vs = v.evaluate(t, g).unwrap();
        let lam = 0.5f64;
        let tp = lam.powf(1.5) / (1.0 - lam) * t;
        let gap = (0..g.n_points)
            .map(|j| {
                let xp = lam.sqrt() * g.x(j);
                (vs.values[j] - lam / (1.0 - lam) * a.point(tp, xp, true).0).abs()
            })
            .fold(0.0, f64::max);
        assert!(gap < 1e-10);
    }
}
