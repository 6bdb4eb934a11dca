//! Collision experiments: initial data, evolution through the interaction,
//! modulation fits of the outgoing solitons, residue extraction and the
//! localized energy functionals.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approx::{solve_lattice, ApproxSolution, Variant};
use crate::error::{Error, Result};
use crate::fit::{fit_power_law, PowerFit};
use crate::grid::{derivative, integrate, norm_l2_halfline, Grid, GridFunction, Side};
use crate::integrator::{Bbm, EvolutionState, IntegratorConfig};
use crate::omega::ProfileLattice;
use crate::solitons::{
    energy_mass, phi_c_at, phi_c_d1, phi_c_d2, phi_c_dc, phi_c_dc_d1, soliton_energy_mass,
    SpeedParams,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Newton iterations allowed per fit.
pub const MAX_NEWTON: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    #[default]
    FarSeparatedSum,
    ApproxVAtMinusT,
}

fn d_separation_widths() -> f64 {
    30.0
}
fn d_max_spacing() -> f64 {
    0.2
}
fn d_dt() -> f64 {
    0.05
}
fn d_post_factor() -> f64 {
    15.0
}
fn d_fit_window() -> f64 {
    10.0
}
fn d_seam_widths() -> f64 {
    20.0
}
fn d_samples() -> usize {
    6
}
fn d_records() -> usize {
    400
}
fn d_true() -> bool {
    true
}
fn d_residue_speed() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub c1: f64,
    pub c2: f64,
    #[serde(default)]
    pub initial_mode: InitialMode,
    /// Initial distance between the centers; derived when absent.
    #[serde(default)]
    pub separation: Option<f64>,
    /// Lower bound on the derived separation, in small-soliton widths.
    #[serde(default = "d_separation_widths")]
    pub separation_widths: f64,
    #[serde(default = "d_max_spacing")]
    pub max_spacing: f64,
    /// Fixed domain length; derived from the seam rule when absent.
    #[serde(default)]
    pub domain_length: Option<f64>,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(default)]
    pub dealias: bool,
    /// Post-collision run time is this factor times `(c₂ - 1)^{-3/2}`.
    #[serde(default = "d_post_factor")]
    pub post_collision_factor: f64,
    /// Half-width of each fit window, in widths of the fitted soliton.
    #[serde(default = "d_fit_window")]
    pub fit_window_width: f64,
    #[serde(default = "d_seam_widths")]
    pub seam_widths: f64,
    /// Slowest residue speed kept inside the domain.
    #[serde(default = "d_residue_speed")]
    pub residue_speed: f64,
    /// Late-time residue samples.
    #[serde(default = "d_samples")]
    pub samples: usize,
    /// Trace rows over the whole run.
    #[serde(default = "d_records")]
    pub records: usize,
    /// Rerun with the solitons placed apart to measure drift and noise.
    #[serde(default = "d_true")]
    pub control_run: bool,
    /// Speed of the computational frame; `c₁` when absent.
    #[serde(default)]
    pub frame_speed: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(c1: f64, c2: f64) -> Self {
        Self {
            c1,
            c2,
            initial_mode: InitialMode::default(),
            separation: None,
            separation_widths: d_separation_widths(),
            max_spacing: d_max_spacing(),
            domain_length: None,
            dt: d_dt(),
            dealias: false,
            post_collision_factor: d_post_factor(),
            fit_window_width: d_fit_window(),
            seam_widths: d_seam_widths(),
            residue_speed: d_residue_speed(),
            samples: d_samples(),
            records: d_records(),
            control_run: true,
            frame_speed: None,
        }
    }

    pub fn speeds(&self) -> Result<SpeedParams> {
        SpeedParams::new(self.c1, self.c2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > self.c2 && self.c2 > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "speeds must satisfy c1 > c2 > 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        let p = self.speeds()?;
        let positive = [
            ("separation_widths", self.separation_widths),
            ("max_spacing", self.max_spacing),
            ("dt", self.dt),
            ("post_collision_factor", self.post_collision_factor),
            ("fit_window_width", self.fit_window_width),
            ("seam_widths", self.seam_widths),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.residue_speed < 1.0 && self.residue_speed >= -0.125) {
            return Err(Error::InvalidParameter(format!(
                "residue_speed = {} must lie in [-1/8, 1)",
                self.residue_speed
            )));
        }
        if self.samples < 2 || self.records < 2 {
            return Err(Error::InvalidParameter("samples and records must be at least 2".into()));
        }
        if let Some(x0) = self.separation {
            let min = 0.5 * (self.c1 - self.c2) * p.big_t();
            if !(x0 >= min) {
                return Err(Error::InvalidParameter(format!(
                    "separation {x0} is below ½(c1 - c2)T = {min}"
                )));
            }
        }
        Ok(())
    }
}

/// `√(c/(c-1))`, the decay length of `φ_c`.
pub fn width(c: f64) -> f64 {
    (c / (c - 1.0)).sqrt()
}

/// Domain, times and positions derived from a config. Lab coordinate of grid
/// node `x` at time `t` is `x + offset + frame_speed·t`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunPlan {
    #[serde(skip)]
    pub grid: Grid,
    pub half_length: f64,
    pub n_points: usize,
    pub offset: f64,
    pub frame_speed: f64,
    pub t_end: f64,
    pub collision_time: f64,
    pub collision_point: f64,
    pub start_big: f64,
    pub start_small: f64,
    pub separation: f64,
    pub big_t: f64,
}

impl RunPlan {
    pub fn to_grid(&self, t: f64, lab: f64) -> f64 {
        lab - self.offset - self.frame_speed * t
    }

    pub fn to_lab(&self, t: f64, x: f64) -> f64 {
        x + self.offset + self.frame_speed * t
    }

    /// `x = x_c + ½(1 + c₂)(t - t_c)` in lab coordinates.
    pub fn cut(&self, c2: f64, t: f64) -> f64 {
        self.collision_point + 0.5 * (1.0 + c2) * (t - self.collision_time)
    }

    fn mirror_small(&self) -> f64 {
        2.0 * self.start_big - self.start_small
    }
}

pub fn plan_run(cfg: &ExperimentConfig) -> Result<RunPlan> {
    cfg.validate()?;
    let p = cfg.speeds()?;
    let (c1, c2) = (cfg.c1, cfg.c2);
    let (w1, w2) = (width(c1), width(c2));
    let big_t = p.big_t();
    let (start_big, start_small) = match cfg.initial_mode {
        InitialMode::FarSeparatedSum => {
            let x0 = cfg
                .separation
                .unwrap_or(((c1 - c2) * big_t).max(cfg.separation_widths * w2));
            (0.0, x0)
        }
        InitialMode::ApproxVAtMinusT => (-c1 * big_t, -c2 * big_t),
    };
    let separation = start_small - start_big;
    let collision_time = separation / (c1 - c2);
    let collision_point = start_big + c1 * collision_time;
    let post = (cfg.post_collision_factor / (c2 - 1.0).powf(1.5))
        .max(2.0 * 12.0 * (w1 + w2) / (c1 - c2));
    let t_end = collision_time + post;
    let v = cfg.frame_speed.unwrap_or(c1);
    // frame positions of everything that must stay away from the seam
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut cover = |x0: f64, speed: f64, t0: f64, margin: f64| {
        for t in [t0, t_end] {
            let x = x0 + speed * (t - t0) - v * t;
            lo = lo.min(x - margin);
            hi = hi.max(x + margin);
        }
    };
    cover(start_big, c1, 0.0, cfg.seam_widths * w1);
    cover(start_small, c2, 0.0, cfg.seam_widths * w2);
    if cfg.control_run {
        cover(2.0 * start_big - start_small, c2, 0.0, cfg.seam_widths * w2);
    }
    cover(collision_point, 1.0, collision_time, cfg.seam_widths * w2);
    cover(collision_point, cfg.residue_speed, collision_time, cfg.seam_widths * w2);
    let needed = hi - lo;
    let (length, n) = match cfg.domain_length {
        Some(l) if l < needed => {
            return Err(Error::DomainTooSmall(format!(
                "length {l} is below the {needed:.1} the run needs"
            )))
        }
        Some(l) => (l, ((l / cfg.max_spacing).ceil() as usize).next_power_of_two()),
        None => {
            let n = ((needed / cfg.max_spacing).ceil() as usize).next_power_of_two();
            (n as f64 * cfg.max_spacing, n)
        }
    };
    let grid = Grid::periodic(0.5 * length, n)?;
    let kmax = PI / grid.spacing();
    let umax = 1.5 * (c1 - 1.0);
    let stiff = cfg.dt * (v.abs() * kmax + 1.0 + 2.0 * umax);
    if stiff > 2.8 {
        return Err(Error::InvalidParameter(format!(
            "dt = {} is unstable on spacing {:.4} in frame speed {v} (dt·|λ|max = {stiff:.2} > 2.8)",
            cfg.dt,
            grid.spacing()
        )));
    }
    Ok(RunPlan {
        grid,
        half_length: grid.half_length,
        n_points: n,
        offset: 0.5 * (lo + hi),
        frame_speed: v,
        t_end,
        collision_time,
        collision_point,
        start_big,
        start_small,
        separation,
        big_t,
    })
}

fn soliton_sum(plan: &RunPlan, parts: &[(f64, f64)]) -> GridFunction {
    GridFunction::from_fn(plan.grid, |x| {
        let lab = plan.to_lab(0.0, x);
        parts.iter().map(|&(c, at)| phi_c_at(c, lab - at)).sum()
    })
}

/// Initial state on the plan's grid.
///
/// `ApproxVAtMinusT` needs the profile lattice for `λ = (c₁-1)/c₁`.
pub fn make_initial_data(
    cfg: &ExperimentConfig,
    plan: &RunPlan,
    lattice: Option<Arc<ProfileLattice>>,
) -> Result<GridFunction> {
    match cfg.initial_mode {
        InitialMode::FarSeparatedSum => Ok(soliton_sum(
            plan,
            &[(cfg.c1, plan.start_big), (cfg.c2, plan.start_small)],
        )),
        InitialMode::ApproxVAtMinusT => {
            let p = cfg.speeds()?;
            let lattice = match lattice {
                Some(l) => l,
                None => Arc::new(solve_lattice(p.lambda)?),
            };
            let v = ApproxSolution::new(p, lattice, Variant::PhysicalV)?;
            let t = -plan.big_t;
            // node convention: node y stands for the physical point y + c₁t
            let nodes: Vec<f64> = plan
                .grid
                .points()
                .iter()
                .map(|&x| plan.to_lab(0.0, x) - cfg.c1 * t)
                .collect();
            GridFunction::new(plan.grid, v.sample_at(t, &nodes))
        }
    }
}

/// Soliton sum `φ_{c₁}(·+c₁T+½a) + φ_{c₂}(·+c₂T+½b)` compared against the `v(-T)`
/// data, with `a = b = Δ₂` in the first report column.
pub fn minus_t_reference(cfg: &ExperimentConfig, plan: &RunPlan, big_shift: f64, small_shift: f64) -> GridFunction {
    let t = plan.big_t;
    soliton_sum(
        plan,
        &[(cfg.c1, -cfg.c1 * t - 0.5 * big_shift), (cfg.c2, -cfg.c2 * t - 0.5 * small_shift)],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonFit {
    pub speed_est: f64,
    pub center: f64,
    pub amplitude: f64,
    pub window: (f64, f64),
    pub iterations: usize,
    /// Both orthogonality integrals relative to `‖(1-∂²)R‖·‖η‖` on the window.
    pub orthogonality: [f64; 2],
    /// `‖η‖` on the window; below about 1e-9 the ratios above sit at rounding level.
    pub eta_norm: f64,
}

/// Rough location of one soliton: center guess and search half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitGuess {
    pub center: f64,
    pub reach: f64,
}

fn index_range(grid: &Grid, a: f64, b: f64) -> (usize, usize) {
    let h = grid.spacing();
    let lo = ((a + grid.half_length) / h).ceil().max(0.0) as usize;
    let hi = (((b + grid.half_length) / h).floor().max(0.0) as usize).min(grid.n_points - 1);
    (lo, hi.max(lo))
}

fn detect_peak(u: &GridFunction, guess: FitGuess) -> Result<(f64, f64)> {
    let g = u.grid;
    let (lo, hi) = index_range(&g, guess.center - guess.reach, guess.center + guess.reach);
    let (jm, &um) = u.values[lo..=hi]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, v)| (j + lo, v))
        .expect("range is non-empty");
    if !(um > 0.0) {
        return Err(Error::FitDiverged(format!("no positive peak near {}", guess.center)));
    }
    if jm == 0 || jm + 1 >= g.n_points {
        return Ok((g.x(jm), um));
    }
    let (a, b, c) = (u.values[jm - 1], um, u.values[jm + 1]);
    let den = a - 2.0 * b + c;
    let s = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    Ok((g.x(jm) + s * g.spacing(), b - 0.25 * (a - c) * s))
}

struct Window {
    lo: usize,
    hi: usize,
}

/// Per-soliton residuals of the two orthogonality conditions and their
/// Jacobian in `(c_j, ρ_j)`.
fn conditions(u: &GridFunction, params: &[(f64, f64)], win: &Window, j: usize) -> ([f64; 2], [[f64; 2]; 2], [f64; 3]) {
    let g = u.grid;
    let h = g.spacing();
    let (c, rho) = params[j];
    let mut f = [0.0; 2];
    let mut jac = [[0.0; 2]; 2];
    let mut norms = [0.0; 3];
    for i in win.lo..=win.hi {
        let x = g.x(i);
        let eta = u.values[i] - params.iter().map(|&(ck, rk)| phi_c_at(ck, x - rk)).sum::<f64>();
        let y = x - rho;
        let r = phi_c_at(c, y);
        let r1 = phi_c_d1(c, y);
        let r2 = phi_c_d2(c, y);
        let rc = phi_c_dc(c, y);
        let rc1 = phi_c_dc_d1(c, y);
        let g0 = (r + r * r) / c;
        let g1 = (r1 + 2.0 * r * r1) / c;
        let g2 = (r2 + 2.0 * r1 * r1 + 2.0 * r * r2) / c;
        let g0c = (rc + 2.0 * r * rc) / c - g0 / c;
        let g1c = (rc1 + 2.0 * (rc * r1 + r * rc1)) / c - g1 / c;
        f[0] += g0 * eta;
        f[1] += g1 * eta;
        // ∂η/∂c = -R_c, ∂η/∂ρ = R', ∂g/∂ρ = -g'
        jac[0][0] += g0c * eta - g0 * rc;
        jac[0][1] += -g1 * eta + g0 * r1;
        jac[1][0] += g1c * eta - g1 * rc;
        jac[1][1] += -g2 * eta + g1 * r1;
        norms[0] += g0 * g0;
        norms[1] += g1 * g1;
        norms[2] += eta * eta;
    }
    for v in f.iter_mut() {
        *v *= h;
    }
    for row in jac.iter_mut() {
        for v in row.iter_mut() {
            *v *= h;
        }
    }
    for v in norms.iter_mut() {
        *v = (*v * h).sqrt();
    }
    (f, jac, norms)
}

/// Modulation fit of several separated solitons in grid coordinates.
///
/// Stage one reads the peak of each soliton near its guess; stage two is a
/// Newton solve of `∫((1-∂²)R_j)η = ∫((1-∂²)∂R_j)η = 0` on a window of
/// `window_widths` widths around each soliton, with `η = u - ΣR_k`.
pub fn fit_solitons(u: &GridFunction, guesses: &[FitGuess], window_widths: f64) -> Result<Vec<SolitonFit>> {
    let g = u.grid;
    let mut params = Vec::with_capacity(guesses.len());
    let mut amps = Vec::with_capacity(guesses.len());
    for guess in guesses {
        let (rho, amp) = detect_peak(u, *guess)?;
        params.push((1.0 + 2.0 * amp / 3.0, rho));
        amps.push(amp);
    }
    let start: Vec<f64> = params.iter().map(|p| p.1).collect();
    let span = |c: f64| window_widths * width(c);
    let windows: Vec<(f64, f64)> = params.iter().map(|&(c, r)| (r - span(c), r + span(c))).collect();
    let wins: Vec<Window> = windows
        .iter()
        .map(|&(a, b)| {
            let (lo, hi) = index_range(&g, a, b);
            Window { lo, hi }
        })
        .collect();
    let mut iterations = 0;
    let mut polish = 2;
    loop {
        if iterations == MAX_NEWTON {
            return Err(Error::FitDiverged(format!("no convergence after {MAX_NEWTON} Newton steps")));
        }
        iterations += 1;
        let mut done = true;
        let mut next = params.clone();
        for j in 0..params.len() {
            let (f, jac, _) = conditions(u, &params, &wins[j], j);
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if !(det.abs() > 0.0) || !det.is_finite() {
                return Err(Error::FitDiverged("singular fit Jacobian".into()));
            }
            let dc = (f[0] * jac[1][1] - f[1] * jac[0][1]) / det;
            let dr = (jac[0][0] * f[1] - jac[1][0] * f[0]) / det;
            let (c, r) = params[j];
            next[j] = (c - dc, r - dr);
            if !(dc.abs() < 1e-12 && dr.abs() < 1e-9) {
                done = false;
            }
        }
        for (j, &(c, r)) in next.iter().enumerate() {
            if !(c > 1.0) || (r - start[j]).abs() > span(params[j].0) {
                return Err(Error::FitDiverged(format!("soliton {j} left its window")));
            }
        }
        params = next;
        if done {
            // quadratic convergence: a couple of extra steps reach rounding level
            if polish == 0 {
                break;
            }
            polish -= 1;
        }
    }
    Ok(params
        .iter()
        .enumerate()
        .map(|(j, &(c, rho))| {
            let (f, _, n) = conditions(u, &params, &wins[j], j);
            let rel = |k: usize| {
                let d = n[k] * n[2];
                if d > 0.0 {
                    f[k].abs() / d
                } else {
                    0.0
                }
            };
            SolitonFit {
                speed_est: c,
                center: rho,
                amplitude: amps[j],
                window: windows[j],
                iterations,
                orthogonality: [rel(0), rel(1)],
                eta_norm: n[2],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfNorms {
    pub h1: f64,
    pub h1_c2: f64,
    pub l2: f64,
}

impl HalfNorms {
    fn on(w: &GridFunction, dw: &GridFunction, x0: f64, side: Side, c2: f64) -> Self {
        let l2 = norm_l2_halfline(w, x0, side);
        let d = norm_l2_halfline(dw, x0, side);
        Self {
            h1: (l2 * l2 + d * d).sqrt(),
            h1_c2: (d * d + (c2 - 1.0) * l2 * l2).sqrt(),
            l2,
        }
    }

    /// `‖∂w‖ + √(c₂-1)‖w‖`
    pub fn functional(&self, c2: f64) -> f64 {
        let d = (self.h1 * self.h1 - self.l2 * self.l2).max(0.0).sqrt();
        d + (c2 - 1.0).sqrt() * self.l2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidueNorms {
    pub t: f64,
    pub cut: f64,
    pub behind: HalfNorms,
    pub ahead: HalfNorms,
}

/// `w⁺ = u - ΣR_j` and its norms on both sides of the grid point `cut`.
pub fn extract_residue(u: &GridFunction, fits: &[SolitonFit], cut: f64, c2: f64) -> (GridFunction, HalfNorms, HalfNorms) {
    let w = u.map_x(|x, v| v - fits.iter().map(|f| phi_c_at(f.speed_est, x - f.center)).sum::<f64>());
    let dw = derivative(&w, 1).expect("order 1 is valid");
    let behind = HalfNorms::on(&w, &dw, cut, Side::Left, c2);
    let ahead = HalfNorms::on(&w, &dw, cut, Side::Right, c2);
    (w, behind, ahead)
}

/// `κ = √((c₁+7)/(c₁-1))`
pub fn psi_scale(c1: f64) -> f64 {
    ((c1 + 7.0) / (c1 - 1.0)).sqrt()
}

/// `ψ(x) = (2/π) arctan(exp(x/κ))`
pub fn psi(x: f64, kappa: f64) -> f64 {
    let s = x / kappa;
    // arctan(e^s) = π/2 - arctan(e^{-s}) keeps both tails accurate
    if s > 0.0 {
        1.0 - 2.0 / PI * (-s).exp().atan()
    } else {
        2.0 / PI * s.exp().atan()
    }
}

/// Localized mass right of `m` and the functional built from the left part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localized {
    pub n1: f64,
    pub g: f64,
}

/// `𝒩₁ = ½∫(u² + u_x²)ψ(x-m)` and
/// `𝒢 = a₂∫(u_x² + u²)(1-ψ(x-m)) - ∫(u² + ⅔u³)(1-ψ(x-m))`, `m` in grid coordinates.
pub fn diagnostics_functionals(u: &GridFunction, m: f64, kappa: f64, a2: f64) -> Localized {
    let du = derivative(u, 1).expect("order 1 is valid");
    let dens = du.zip_with(u, |d, v| d * d + v * v);
    let right = dens.map_x(|x, e| e * psi(x - m, kappa));
    let left_mass = dens.map_x(|x, e| e * (1.0 - psi(x - m, kappa)));
    let left_energy = u.map_x(|x, v| (v * v + 2.0 / 3.0 * v * v * v) * (1.0 - psi(x - m, kappa)));
    Localized {
        n1: 0.5 * integrate(&right),
        g: a2 * integrate(&left_mass) - integrate(&left_energy),
    }
}

/// Secant `ΔE/ΔN` along the soliton family, `c` in the limit.
pub fn secant_slope(ca: f64, cb: f64) -> f64 {
    let (ea, na) = soliton_energy_mass(ca);
    let (eb, nb) = soliton_energy_mass(cb);
    if (na - nb).abs() > 1e-9 * na {
        (ea - eb) / (na - nb)
    } else {
        0.5 * (ca + cb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub energy: f64,
    pub mass: f64,
    /// Lab centers and fitted speeds; absent while the solitons overlap.
    pub center_big: Option<f64>,
    pub center_small: Option<f64>,
    pub speed_big: Option<f64>,
    pub speed_small: Option<f64>,
    /// `½(ρ₁+ρ₂)` in lab coordinates, from fits or from the incoming lines.
    pub midpoint: f64,
    pub n1: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LateSample {
    pub t: f64,
    pub speed_big: f64,
    pub speed_small: f64,
    pub control_speed_big: Option<f64>,
    pub control_speed_small: Option<f64>,
    pub residue: ResidueNorms,
    pub control_residue: Option<HalfNorms>,
    pub orthogonality: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftMeasurement {
    #[serde(rename = "Delta1")]
    pub delta1: f64,
    #[serde(rename = "Delta2")]
    pub delta2: f64,
    #[serde(rename = "Delta1_predicted")]
    pub delta1_predicted: f64,
    #[serde(rename = "Delta2_predicted")]
    pub delta2_predicted: f64,
    /// Trajectory slopes over the last third.
    pub slope_big: f64,
    pub slope_small: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetCheck {
    /// `(c₁⁺-c₁)/‖w⁺‖²_{H¹_{c₂}}`
    pub big_ratio: f64,
    /// `(c₂-c₂⁺)(c₂-1)^{1/2}/‖w⁺‖²_{H¹}`
    pub small_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSummary {
    pub kappa: f64,
    pub a2: f64,
    /// `max (𝒩₁(t) - 𝒩₁(t₀))` over post-collision rows, `t₀` the first of them.
    pub n1_max_increase: f64,
    /// `𝒢(T) - 𝒢(T₀)` between the first row and the last pre-collision row.
    pub g_change: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionReport {
    pub schema_version: u32,
    pub version: String,
    pub config: ExperimentConfig,
    pub half_length: f64,
    pub n_points: usize,
    pub t_end: f64,
    pub collision_time: f64,
    pub collision_point: f64,
    pub c1_plus: f64,
    pub c2_plus: f64,
    pub delta_c1: f64,
    pub delta_c2: f64,
    /// Relative drift of `N` and `E` over the run.
    pub mass_drift: f64,
    pub energy_drift: f64,
    /// Control-run speed drift at the final sample.
    pub control_drift: Option<[f64; 2]>,
    pub residue_norms: Vec<LateSample>,
    /// `‖∂w⁺‖ + √(c₂-1)‖w⁺‖` behind the cut at the last sample.
    pub residue_functional: f64,
    /// Ahead-of-cut H¹ norm, last sample over first.
    pub ahead_decay: f64,
    /// Behind-cut H¹ norm, relative change between the last two samples.
    pub behind_change: f64,
    pub noise_floor: f64,
    pub gate_passed: bool,
    pub shift_meas: Option<ShiftMeasurement>,
    pub budget_check: BudgetCheck,
    pub diagnostics: DiagnosticSummary,
    /// H¹ distance of `v(-T)` from the soliton sum, with the big wave shifted
    /// by `½Δ₂` and by `½Δ₁`.
    pub initial_sum_distance: Option<[f64; 2]>,
    pub trace: Vec<TraceRow>,
}

impl CollisionReport {
    pub const TRACE_HEADER: &'static str =
        "t,energy,mass,center_big,center_small,speed_big,speed_small,midpoint,n1,g";

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::TRACE_HEADER)?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.15e}")).unwrap_or_default();
        for r in &self.trace {
            writeln!(
                out,
                "{:.15e},{:.15e},{:.15e},{},{},{},{},{:.15e},{:.15e},{:.15e}",
                r.t,
                r.energy,
                r.mass,
                opt(r.center_big),
                opt(r.center_small),
                opt(r.speed_big),
                opt(r.speed_small),
                r.midpoint,
                r.n1,
                r.g
            )?;
        }
        Ok(())
    }
}

struct Sampled {
    t: f64,
    fits: Vec<SolitonFit>,
    residue: ResidueNorms,
}

struct RunOutput {
    trace: Vec<TraceRow>,
    late: Vec<Sampled>,
    mass_drift: f64,
    energy_drift: f64,
}

struct Track {
    c: f64,
    start: f64,
}

fn line(track: &Track, t: f64) -> f64 {
    track.start + track.c * t
}

/// Evolves `u0` and fits the two tracked solitons along the way.
fn drive(cfg: &ExperimentConfig, plan: &RunPlan, u0: GridFunction, tracks: [Track; 2], kappa: f64, a2: f64) -> Result<RunOutput> {
    let bbm = Bbm::new(plan.grid, cfg.dealias)?.with_frame_speed(plan.frame_speed);
    let steps = (plan.t_end / cfg.dt).round().max(1.0) as usize;
    let dt = plan.t_end / steps as f64;
    let every = (steps / cfg.records).max(1);
    let post = plan.t_end - plan.collision_time;
    let first_late = plan.collision_time + 0.5 * post;
    let late_steps: BTreeSet<usize> = (0..cfg.samples)
        .map(|i| {
            let t = first_late + (plan.t_end - first_late) * i as f64 / (cfg.samples - 1) as f64;
            ((t / dt).round() as usize).min(steps)
        })
        .collect();
    let widths = [width(tracks[0].c), width(tracks[1].c)];
    let apart = 10.0 * (widths[0] + widths[1]);
    let mut last: Option<(f64, Vec<SolitonFit>)> = None;
    let mut trace = Vec::new();
    let mut late = Vec::new();
    let mut visit = |state: &EvolutionState| -> Result<()> {
        let k = state.step_count;
        let is_late = late_steps.contains(&k);
        if k % every != 0 && !is_late && k != steps {
            return Ok(());
        }
        let t = state.t;
        let lab = [line(&tracks[0], t), line(&tracks[1], t)];
        let separated = (lab[0] - lab[1]).abs() > apart;
        let fits = if separated {
            let guess: Vec<FitGuess> = (0..2)
                .map(|j| {
                    let center = match &last {
                        Some((t0, f)) => f[j].center + (f[j].speed_est - plan.frame_speed) * (t - t0),
                        None => plan.to_grid(t, lab[j]),
                    };
                    FitGuess {
                        center,
                        reach: 4.0 * widths[j],
                    }
                })
                .collect();
            Some(fit_solitons(&state.u, &guess, cfg.fit_window_width)?)
        } else {
            None
        };
        if let Some(f) = &fits {
            last = Some((t, f.clone()));
        } else {
            last = None;
        }
        let (energy, mass) = energy_mass(&state.u);
        let mid_lab = match &fits {
            Some(f) => 0.5 * (plan.to_lab(t, f[0].center) + plan.to_lab(t, f[1].center)),
            None => 0.5 * (lab[0] + lab[1]),
        };
        let loc = diagnostics_functionals(&state.u, plan.to_grid(t, mid_lab), kappa, a2);
        trace.push(TraceRow {
            t,
            energy,
            mass,
            center_big: fits.as_ref().map(|f| plan.to_lab(t, f[0].center)),
            center_small: fits.as_ref().map(|f| plan.to_lab(t, f[1].center)),
            speed_big: fits.as_ref().map(|f| f[0].speed_est),
            speed_small: fits.as_ref().map(|f| f[1].speed_est),
            midpoint: mid_lab,
            n1: loc.n1,
            g: loc.g,
        });
        if is_late {
            let f = fits.ok_or_else(|| Error::FitDiverged(format!("solitons not separated at late time {t}")))?;
            let cut_lab = plan.cut(cfg.c2, t);
            let (_, behind, ahead) = extract_residue(&state.u, &f, plan.to_grid(t, cut_lab), cfg.c2);
            late.push(Sampled {
                t,
                fits: f,
                residue: ResidueNorms {
                    t,
                    cut: cut_lab,
                    behind,
                    ahead,
                },
            });
        }
        Ok(())
    };
    let state = EvolutionState::new(u0);
    visit(&state)?;
    let mut int_cfg = IntegratorConfig::new(dt, plan.t_end);
    int_cfg.dealias = cfg.dealias;
    int_cfg.record_every = every;
    let traj = bbm.evolve_with(state, &int_cfg, &mut visit)?;
    let (energy_drift, mass_drift) = traj.conservation_drift();
    Ok(RunOutput {
        trace,
        late,
        mass_drift,
        energy_drift,
    })
}

/// Least-squares line `a + b t` through the points.
fn line_fit(ts: &[f64], xs: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let mx = xs.iter().sum::<f64>() / n;
    let stt: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let stx: f64 = ts.iter().zip(xs).map(|(t, x)| (t - mt) * (x - mx)).sum();
    let b = stx / stt;
    (mx - b * mt, b)
}

fn measure_shifts(plan: &RunPlan, trace: &[TraceRow], predicted: (f64, f64)) -> Option<ShiftMeasurement> {
    let tc = plan.collision_time;
    let pre: Vec<&TraceRow> = trace.iter().filter(|r| r.t < tc && r.center_big.is_some()).collect();
    let post: Vec<&TraceRow> = trace.iter().filter(|r| r.t > tc && r.center_big.is_some()).collect();
    let tail_from = plan.t_end - (plan.t_end - tc) / 3.0;
    let tail: Vec<&TraceRow> = post.into_iter().filter(|r| r.t >= tail_from).collect();
    if pre.len() < 2 || tail.len() < 2 {
        return None;
    }
    let at_tc = |rows: &[&TraceRow], pick: fn(&TraceRow) -> f64| {
        let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let xs: Vec<f64> = rows.iter().map(|r| pick(r)).collect();
        let (a, b) = line_fit(&ts, &xs);
        (a + b * tc, b)
    };
    let big = |r: &TraceRow| r.center_big.unwrap();
    let small = |r: &TraceRow| r.center_small.unwrap();
    let (b_in, _) = at_tc(&pre, big);
    let (s_in, _) = at_tc(&pre, small);
    let (b_out, slope_big) = at_tc(&tail, big);
    let (s_out, slope_small) = at_tc(&tail, small);
    Some(ShiftMeasurement {
        delta1: b_out - b_in,
        delta2: s_out - s_in,
        delta1_predicted: predicted.0,
        delta2_predicted: predicted.1,
        slope_big,
        slope_small,
    })
}

/// Runs the full pipeline for one pair of speeds.
pub fn run_collision(cfg: &ExperimentConfig) -> Result<CollisionReport> {
    run_collision_with(cfg, None)
}

/// As [`run_collision`], reusing a profile lattice when one is at hand.
pub fn run_collision_with(cfg: &ExperimentConfig, lattice: Option<Arc<ProfileLattice>>) -> Result<CollisionReport> {
    let plan = plan_run(cfg)?;
    let p = cfg.speeds()?;
    let (c1, c2) = (cfg.c1, cfg.c2);
    let kappa = psi_scale(c1);
    let needs_lattice = cfg.initial_mode == InitialMode::ApproxVAtMinusT;
    let lattice = match (lattice, needs_lattice) {
        (Some(l), _) => Some(l),
        (None, true) => Some(Arc::new(solve_lattice(p.lambda)?)),
        (None, false) => None,
    };
    let predicted = crate::approx::delta1_leading(p.lambda, c2);
    let predicted = (predicted, crate::approx::delta2_leading(p.lambda));
    let u0 = make_initial_data(cfg, &plan, lattice.clone())?;
    let initial_sum_distance = match (&lattice, cfg.initial_mode) {
        (Some(l), InitialMode::ApproxVAtMinusT) => {
            let sh = ApproxSolution::new(p, l.clone(), Variant::PhysicalV)?.shift_data();
            let dist = |a: f64| crate::grid::norm_h1(&u0.sub(&minus_t_reference(cfg, &plan, a, sh.delta2)));
            Some([dist(sh.delta2), dist(sh.delta1)])
        }
        _ => None,
    };
    let tracks = [
        Track {
            c: c1,
            start: plan.start_big,
        },
        Track {
            c: c2,
            start: plan.start_small,
        },
    ];
    // a₂ is refined once the outgoing speed is known
    let a2 = c2;
    let main = drive(cfg, &plan, u0, tracks, kappa, a2)?;
    let control = if cfg.control_run {
        let mirror = plan.mirror_small();
        let u = soliton_sum(&plan, &[(c1, plan.start_big), (c2, mirror)]);
        let tracks = [
            Track {
                c: c1,
                start: plan.start_big,
            },
            Track { c: c2, start: mirror },
        ];
        Some(drive(cfg, &plan, u, tracks, kappa, a2)?)
    } else {
        None
    };
    let mut late = Vec::new();
    for (i, s) in main.late.iter().enumerate() {
        let ctl = control.as_ref().map(|c| &c.late[i]);
        late.push(LateSample {
            t: s.t,
            speed_big: s.fits[0].speed_est,
            speed_small: s.fits[1].speed_est,
            control_speed_big: ctl.map(|c| c.fits[0].speed_est),
            control_speed_small: ctl.map(|c| c.fits[1].speed_est),
            residue: s.residue,
            control_residue: ctl.map(|c| c.residue.behind),
            orthogonality: [
                s.fits[0].orthogonality[0],
                s.fits[0].orthogonality[1],
                s.fits[1].orthogonality[0],
                s.fits[1].orthogonality[1],
            ],
        });
    }
    let corrected = |s: &LateSample| {
        let b = s.speed_big - s.control_speed_big.map_or(0.0, |v| v - c1);
        let m = s.speed_small - s.control_speed_small.map_or(0.0, |v| v - c2);
        (b, m)
    };
    let n_late = late.len() as f64;
    let c1_plus = late.iter().map(|s| corrected(s).0).sum::<f64>() / n_late;
    let c2_plus = late.iter().map(|s| corrected(s).1).sum::<f64>() / n_late;
    let last = *late.last().expect("at least two samples");
    let prev = late[late.len() - 2];
    let first = late[0];
    let control_drift = last
        .control_speed_big
        .zip(last.control_speed_small)
        .map(|(b, s)| [b - c1, s - c2]);
    let n0 = main.trace[0].mass;
    let drift_norm = (2.0 * main.mass_drift * n0).sqrt();
    let control_noise = last.control_residue.map_or(0.0, |r| r.h1);
    let noise_floor = control_noise + drift_norm;
    let behind = last.residue.behind;
    let budget_check = BudgetCheck {
        big_ratio: (c1_plus - c1) / behind.h1_c2.powi(2),
        small_ratio: (c2 - c2_plus) * (c2 - 1.0).sqrt() / behind.h1.powi(2),
    };
    let a2 = secant_slope(c2, c2_plus);
    let diagnostics = summarize_diagnostics(&plan, &main.trace, kappa, a2);
    Ok(CollisionReport {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: *cfg,
        half_length: plan.half_length,
        n_points: plan.n_points,
        t_end: plan.t_end,
        collision_time: plan.collision_time,
        collision_point: plan.collision_point,
        c1_plus,
        c2_plus,
        delta_c1: c1_plus - c1,
        delta_c2: c2 - c2_plus,
        mass_drift: main.mass_drift,
        energy_drift: main.energy_drift,
        control_drift,
        residue_norms: late,
        residue_functional: behind.functional(c2),
        ahead_decay: last.residue.ahead.h1 / first.residue.ahead.h1,
        behind_change: (last.residue.behind.h1 - prev.residue.behind.h1).abs() / last.residue.behind.h1,
        noise_floor,
        gate_passed: behind.h1 > 10.0 * noise_floor,
        shift_meas: measure_shifts(&plan, &main.trace, predicted),
        budget_check,
        diagnostics,
        initial_sum_distance,
        trace: main.trace,
    })
}

fn summarize_diagnostics(plan: &RunPlan, trace: &[TraceRow], kappa: f64, a2_used: f64) -> DiagnosticSummary {
    let tc = plan.collision_time;
    let post: Vec<&TraceRow> = trace.iter().filter(|r| r.t > tc && r.center_big.is_some()).collect();
    let n1_max_increase = post
        .first()
        .map(|r0| post.iter().map(|r| r.n1 - r0.n1).fold(f64::NEG_INFINITY, f64::max))
        .unwrap_or(0.0);
    let pre: Vec<&TraceRow> = trace.iter().filter(|r| r.t < tc && r.center_big.is_some()).collect();
    let g_change = match (pre.first(), pre.last()) {
        (Some(a), Some(b)) => b.g - a.g,
        _ => 0.0,
    };
    DiagnosticSummary {
        kappa,
        a2: a2_used,
        n1_max_increase,
        g_change,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub c1: f64,
    pub c2: f64,
    pub delta_c1: f64,
    pub delta_c2: f64,
    pub residue_functional: f64,
    pub residue_h1: f64,
    pub residue_h1_c2: f64,
    pub big_ratio: f64,
    pub small_ratio: f64,
    pub mass_drift: f64,
    pub noise_floor: f64,
    pub gate_passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub fit: Option<PowerFit>,
    /// 95% interval from the Student quantile.
    pub interval: Option<(f64, f64)>,
    pub target: (f64, f64),
    pub window: (f64, f64),
}

impl ExponentFit {
    fn of(x: &[f64], y: &[f64], target: (f64, f64), window: (f64, f64)) -> Self {
        let fit = fit_power_law(x, y).ok();
        let interval = fit.map(|f| f.interval(student_quantile_975(f.points.saturating_sub(2))));
        Self {
            fit,
            interval,
            target,
            window,
        }
    }

    pub fn in_window(&self) -> bool {
        self.fit.is_some_and(|f| f.slope >= self.window.0 && f.slope <= self.window.1)
    }
}

/// Two-sided 95% Student quantile for `dof` degrees of freedom.
pub fn student_quantile_975(dof: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    if dof == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub schema_version: u32,
    pub c1: f64,
    pub rows: Vec<ScalingRow>,
    pub delta_c1: ExponentFit,
    pub delta_c2: ExponentFit,
    pub residue: ExponentFit,
    pub delta_c1_increasing: bool,
    pub delta_c2_increasing: bool,
    /// `max/min` of each budget ratio over the sweep; infinite if a ratio is not positive.
    pub budget_band: (f64, f64),
    #[serde(skip)]
    pub reports: Vec<CollisionReport>,
}

impl ScalingStudy {
    pub const CSV_HEADER: &'static str = "c1,c2,delta_c1,delta_c2,residue_functional,residue_h1,residue_h1_c2,big_ratio,small_ratio,mass_drift,noise_floor,gate_passed";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.3e},{:.3e},{}",
                r.c1,
                r.c2,
                r.delta_c1,
                r.delta_c2,
                r.residue_functional,
                r.residue_h1,
                r.residue_h1_c2,
                r.big_ratio,
                r.small_ratio,
                r.mass_drift,
                r.noise_floor,
                r.gate_passed
            )?;
        }
        Ok(())
    }
}

fn band(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.iter().any(|x| !(*x > 0.0)) {
        return f64::INFINITY;
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    max / min
}

/// One experiment per `c₂`, run in parallel, then power-law fits in `c₂ - 1`.
pub fn scaling_study(base: &ExperimentConfig, c2_list: &[f64]) -> Result<ScalingStudy> {
    if c2_list.len() < 2 {
        return Err(Error::InvalidParameter("a scaling study needs two or more speeds".into()));
    }
    let lattice = if base.initial_mode == InitialMode::ApproxVAtMinusT {
        Some(Arc::new(solve_lattice((base.c1 - 1.0) / base.c1)?))
    } else {
        None
    };
    let mut reports: Vec<CollisionReport> = c2_list
        .par_iter()
        .map(|&c2| {
            let cfg = ExperimentConfig { c2, ..*base };
            run_collision_with(&cfg, lattice.clone())
        })
        .collect::<Result<_>>()?;
    reports.sort_by(|a, b| a.config.c2.total_cmp(&b.config.c2));
    let rows: Vec<ScalingRow> = reports
        .iter()
        .map(|r| {
            let behind = r.residue_norms.last().expect("samples").residue.behind;
            ScalingRow {
                c1: r.config.c1,
                c2: r.config.c2,
                delta_c1: r.delta_c1,
                delta_c2: r.delta_c2,
                residue_functional: r.residue_functional,
                residue_h1: behind.h1,
                residue_h1_c2: behind.h1_c2,
                big_ratio: r.budget_check.big_ratio,
                small_ratio: r.budget_check.small_ratio,
                mass_drift: r.mass_drift,
                noise_floor: r.noise_floor,
                gate_passed: r.gate_passed,
            }
        })
        .collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.c2 - 1.0).collect();
    let pick = |f: fn(&ScalingRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| *x > 0.0);
    let dc1 = pick(|r| r.delta_c1);
    let dc2 = pick(|r| r.delta_c2);
    Ok(ScalingStudy {
        schema_version: SCHEMA_VERSION,
        c1: base.c1,
        delta_c1: ExponentFit::of(&eps, &dc1, (4.5, 5.5), (4.0, 6.0)),
        delta_c2: ExponentFit::of(&eps, &dc2, (4.0, 5.0), (3.5, 5.5)),
        residue: ExponentFit::of(&eps, &pick(|r| r.residue_functional), (2.25, 2.75), (2.0, 3.0)),
        delta_c1_increasing: increasing(&dc1),
        delta_c2_increasing: increasing(&dc2),
        budget_band: (band(rows.iter().map(|r| r.big_ratio)), band(rows.iter().map(|r| r.small_ratio))),
        rows,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm_h1;

    fn grid() -> Grid {
        Grid::periodic(80.0, 2048).unwrap()
    }

    #[test]
    fn exact_profile_is_fitted_exactly() {
        let u = GridFunction::from_fn(grid(), |x| phi_c_at(2.0, x - 7.0));
        let f = fit_solitons(&u, &[FitGuess { center: 6.0, reach: 5.0 }], 10.0).unwrap();
        assert!((f[0].speed_est - 2.0).abs() < 1e-9, "{:?}", f[0]);
        assert!((f[0].center - 7.0).abs() < 1e-9);
        assert!((f[0].speed_est - 1.0 - 2.0 / 3.0 * f[0].amplitude).abs() < 1e-3);
    }

    #[test]
    fn fit_tolerates_noise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let g = grid();
        let values = g.points().iter().map(|&x| phi_c_at(2.0, x) + 1e-3 * rng.gen_range(-1.0..1.0)).collect();
        let u = GridFunction::new(g, values).unwrap();
        let f = fit_solitons(&u, &[FitGuess { center: 0.0, reach: 5.0 }], 10.0).unwrap();
        assert!((f[0].speed_est - 2.0).abs() < 5e-3);
    }

    #[test]
    fn two_solitons_and_their_residue() {
        let g = grid();
        let u = GridFunction::from_fn(g, |x| phi_c_at(2.0, x + 30.0) + phi_c_at(1.3, x - 35.0));
        let guesses = [FitGuess { center: -29.0, reach: 5.0 }, FitGuess { center: 36.0, reach: 8.0 }];
        let f = fit_solitons(&u, &guesses, 8.0).unwrap();
        assert!((f[0].speed_est - 2.0).abs() < 1e-9 && (f[1].speed_est - 1.3).abs() < 1e-9);
        let (_, behind, ahead) = extract_residue(&u, &f, 0.0, 1.3);
        assert!(behind.h1 < 1e-10 && ahead.h1 < 1e-10);
    }

    #[test]
    fn window_leaving_fit_fails() {
        let u = GridFunction::from_fn(grid(), |x| phi_c_at(2.0, x - 12.0));
        assert!(matches!(
            fit_solitons(&u, &[FitGuess { center: 0.0, reach: 5.0 }], 1.0),
            Err(Error::FitDiverged(_))
        ));
        let flat = GridFunction::from_fn(grid(), |_| -1.0);
        assert!(fit_solitons(&flat, &[FitGuess { center: 0.0, reach: 5.0 }], 10.0).is_err());
    }

    #[test]
    fn psi_limits() {
        let k = psi_scale(2.0);
        assert!(psi(-40.0 * k, k) < 1e-8);
        assert!(psi(40.0 * k, k) > 1.0 - 1e-8);
        for x in [-7.0, -0.3, 0.0, 2.0, 15.0] {
            assert!((psi(-x, k) - 1.0 + psi(x, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn secant_slope_tends_to_speed() {
        assert!((secant_slope(1.1, 1.1) - 1.1).abs() < 1e-12);
        assert!((secant_slope(1.1, 1.1 - 1e-4) - 1.1).abs() < 1e-3);
    }

    #[test]
    fn far_separated_sum_conserves_parts() {
        let cfg = ExperimentConfig::new(2.0, 1.2);
        let plan = plan_run(&cfg).unwrap();
        let u = make_initial_data(&cfg, &plan, None).unwrap();
        let (e, n) = energy_mass(&u);
        let (e1, n1) = soliton_energy_mass(2.0);
        let (e2, n2) = soliton_energy_mass(1.2);
        assert!((e - e1 - e2).abs() < 1e-10 && (n - n1 - n2).abs() < 1e-10);
    }

    #[test]
    fn small_domain_is_rejected() {
        let mut cfg = ExperimentConfig::new(2.0, 1.2);
        cfg.domain_length = Some(100.0);
        assert!(matches!(plan_run(&cfg), Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ExperimentConfig::new(2.0, 2.0).validate().is_err());
        assert!(ExperimentConfig::new(1.5, 2.0).validate().is_err());
        let mut cfg = ExperimentConfig::new(2.0, 1.2);
        cfg.separation = Some(0.01);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(2.0, 1.2);
        cfg.dt = 0.5;
        assert!(plan_run(&cfg).is_err());
    }

    #[test]
    fn unknown_config_keys_are_errors() {
        let ok: ExperimentConfig = serde_json::from_str(r#"{"c1": 2.0, "c2": 1.1}"#).unwrap();
        assert_eq!(ok, ExperimentConfig::new(2.0, 1.1));
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"c1": 2.0, "c2": 1.1, "dtt": 1}"#).is_err());
    }

    #[test]
    fn weak_small_soliton_leaves_the_big_one() {
        let g = Grid::periodic(200.0, 4096).unwrap();
        let u = GridFunction::from_fn(g, |x| phi_c_at(2.0, x) + phi_c_at(1.0 + 1e-8, x - 100.0));
        let single = GridFunction::from_fn(g, |x| phi_c_at(2.0, x));
        assert!(norm_h1(&u.sub(&single)) < 1e-6);
    }
}
