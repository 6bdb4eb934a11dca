//! Pseudospectral method of lines for `(1 - ∂²) u_t + ∂(u + u²) = 0` on a
//! periodic grid, advanced with classical RK4.

use std::io::Write;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridKind};
use crate::solitons::energy_mass;
use crate::spectral::SpectralPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Keep full samples in every snapshot.
    #[serde(default)]
    pub record_values: bool,
}

fn default_record_every() -> usize {
    100
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            dealias: false,
            record_every: default_record_every(),
            record_values: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end = {} must be non-negative", self.t_end)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of RK4 steps; the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionState {
    pub u: GridFunction,
    pub t: f64,
    pub dt: f64,
    pub step_count: usize,
}

impl EvolutionState {
    pub fn new(u: GridFunction) -> Self {
        Self {
            u,
            t: 0.0,
            dt: 0.0,
            step_count: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub step: usize,
    pub energy: f64,
    pub mass: f64,
    pub max_abs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Snapshot {
    fn of(state: &EvolutionState, keep: bool) -> Self {
        let (energy, mass) = energy_mass(&state.u);
        Self {
            t: state.t,
            step: state.step_count,
            energy,
            mass,
            max_abs: state.u.max_abs(),
            values: keep.then(|| state.u.values.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub final_state: EvolutionState,
    /// `dt ≤ h`; advisory only.
    pub cfl_ok: bool,
}

impl Trajectory {
    /// Largest relative change of `(E, N)` from the first snapshot.
    pub fn conservation_drift(&self) -> (f64, f64) {
        let first = &self.snapshots[0];
        self.snapshots.iter().fold((0.0f64, 0.0f64), |(de, dn), s| {
            (
                de.max(((s.energy - first.energy) / first.energy.abs().max(f64::MIN_POSITIVE)).abs()),
                dn.max(((s.mass - first.mass) / first.mass.abs().max(f64::MIN_POSITIVE)).abs()),
            )
        })
    }

    /// One JSON object per snapshot.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.snapshots {
            serde_json::to_writer(&mut out, s)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Right-hand side `-(1 - ∂²)^{-1} ∂(u + u²) + V ∂u` for one periodic grid,
/// the equation written in a frame moving with speed `V` (zero by default).
#[derive(Debug, Clone)]
pub struct Bbm {
    grid: Grid,
    plan: SpectralPlan,
    symbol: Vec<Complex64>,
    keep: Vec<bool>,
    dealias: bool,
    frame_speed: f64,
}

impl Bbm {
    pub fn new(grid: Grid, dealias: bool) -> Result<Self> {
        if grid.kind != GridKind::Periodic {
            return Err(Error::InvalidGrid("the integrator needs a periodic grid".into()));
        }
        let plan = grid.spectral_plan();
        let n = grid.n_points;
        let symbol = plan
            .wavenumbers()
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                if plan.is_nyquist(j) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, -k / (1.0 + k * k))
                }
            })
            .collect();
        // 2/3 rule on mode indices
        let keep = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j } else { n - j };
                3 * m < n
            })
            .collect();
        Ok(Self {
            grid,
            plan,
            symbol,
            keep,
            dealias,
            frame_speed: 0.0,
        })
    }

    /// Same equation in the frame `ξ = x - V t`.
    pub fn with_frame_speed(mut self, speed: f64) -> Self {
        self.frame_speed = speed;
        self
    }

    pub fn frame_speed(&self) -> f64 {
        self.frame_speed
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn rhs_values(&self, u: &[f64], out: &mut [f64], buf: &mut Vec<Complex64>) {
        let v = self.frame_speed;
        let zero = Complex64::new(0.0, 0.0);
        self.plan.forward_real(u, buf);
        let square: Vec<f64> = if self.dealias {
            let mut spec = buf.clone();
            for (c, k) in spec.iter_mut().zip(&self.keep) {
                if !k {
                    *c = zero;
                }
            }
            let mut filtered = vec![0.0; u.len()];
            self.plan.inverse_real(&mut spec, &mut filtered);
            filtered.iter().map(|f| f * f).collect()
        } else {
            u.iter().map(|f| f * f).collect()
        };
        let mut sq = Vec::with_capacity(u.len());
        self.plan.forward_real(&square, &mut sq);
        let ks = self.plan.wavenumbers();
        for (j, (c, s2)) in buf.iter_mut().zip(&sq).enumerate() {
            let s = self.symbol[j];
            let nonlinear = if self.dealias && !self.keep[j] { zero } else { s * s2 };
            let drift = if self.plan.is_nyquist(j) {
                zero
            } else {
                Complex64::new(0.0, v * ks[j])
            };
            *c = *c * (s + drift) + nonlinear;
        }
        self.plan.inverse_real(buf, out);
    }

    pub fn rhs(&self, u: &GridFunction) -> Result<GridFunction> {
        self.grid.check_same(&u.grid)?;
        let mut out = vec![0.0; u.len()];
        let mut buf = Vec::with_capacity(u.len());
        self.rhs_values(&u.values, &mut out, &mut buf);
        Ok(GridFunction {
            grid: self.grid,
            values: out,
        })
    }

    /// Advances `state` by `dt` in place.
    pub fn step(&self, state: &mut EvolutionState, dt: f64) -> Result<()> {
        let n = state.u.len();
        let u = &mut state.u.values;
        let mut buf = Vec::with_capacity(n);
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        self.rhs_values(u, &mut k1, &mut buf);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        self.rhs_values(&tmp, &mut k2, &mut buf);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        self.rhs_values(&tmp, &mut k3, &mut buf);
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        self.rhs_values(&tmp, &mut k4, &mut buf);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("solution at t = {}", state.t + dt)));
        }
        state.t += dt;
        state.dt = dt;
        state.step_count += 1;
        Ok(())
    }

    /// Runs to `t_end`, calling `observe` after every step.
    pub fn evolve_with<F>(&self, mut state: EvolutionState, cfg: &IntegratorConfig, mut observe: F) -> Result<Trajectory>
    where
        F: FnMut(&EvolutionState) -> Result<()>,
    {
        cfg.validate()?;
        self.grid.check_same(&state.u.grid)?;
        let steps = cfg.steps();
        let t0 = state.t;
        let mut snapshots = vec![Snapshot::of(&state, cfg.record_values)];
        for i in 0..steps {
            let target = t0 + ((i + 1) as f64 * cfg.dt).min(cfg.t_end);
            let dt = target - state.t;
            self.step(&mut state, dt)?;
            observe(&state)?;
            if (i + 1) % cfg.record_every == 0 || i + 1 == steps {
                snapshots.push(Snapshot::of(&state, cfg.record_values));
            }
        }
        Ok(Trajectory {
            snapshots,
            final_state: state,
            cfl_ok: cfg.dt <= self.grid.spacing(),
        })
    }

    pub fn evolve(&self, state: EvolutionState, cfg: &IntegratorConfig) -> Result<Trajectory> {
        self.evolve_with(state, cfg, |_| Ok(()))
    }
}

/// `(E, N)` with `E = ∫(u²/2 + u³/3)` and `N = ½∫(u_x² + u²)`.
pub fn conserved(u: &GridFunction) -> (f64, f64) {
    energy_mass(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::norm_h1;
    use crate::solitons::{phi_c_at, phi_c_d1};

    fn grid() -> Grid {
        Grid::periodic(100.0, 2048).unwrap()
    }

    #[test]
    fn zero_is_fixed() {
        let b = Bbm::new(grid(), true).unwrap();
        let z = GridFunction::zeros(grid());
        assert_eq!(b.rhs(&z).unwrap().max_abs(), 0.0);
        let tr = b.evolve(EvolutionState::new(z), &IntegratorConfig::new(0.1, 1.0)).unwrap();
        assert_eq!(tr.final_state.u.max_abs(), 0.0);
        assert_eq!(conserved(&tr.final_state.u), (0.0, 0.0));
    }

    #[test]
    fn traveling_wave_identity() {
        let g = grid();
        for dealias in [false, true] {
            let b = Bbm::new(g, dealias).unwrap();
            let u = GridFunction::from_fn(g, |x| phi_c_at(2.0, x - 3.0));
            let expect = GridFunction::from_fn(g, |x| -2.0 * phi_c_d1(2.0, x - 3.0));
            assert!(b.rhs(&u).unwrap().sub(&expect).max_abs() < 1e-8);
        }
    }

    #[test]
    fn dispersion_relation() {
        let g = grid();
        let b = Bbm::new(g, false).unwrap();
        let m = 7;
        let k = std::f64::consts::PI * m as f64 / g.half_length;
        let eps = 1e-9;
        let u = GridFunction::from_fn(g, |x| eps * (k * x).cos());
        // -(ik/(1+k²)) e^{ikx} has real part (k/(1+k²)) sin(kx)
        let expect = GridFunction::from_fn(g, |x| eps * k / (1.0 + k * k) * (k * x).sin());
        assert!(b.rhs(&u).unwrap().sub(&expect).max_abs() < 1e-15 + 1e-8 * eps);
    }

    #[test]
    fn conserved_values_of_a_soliton() {
        let u = GridFunction::from_fn(grid(), |x| phi_c_at(2.0, x));
        let (e, n) = conserved(&u);
        assert!((e - 7.63675).abs() < 1e-5 && (n - 4.66690).abs() < 1e-5, "{e} {n}");
        let far = GridFunction::from_fn(grid(), |x| phi_c_at(2.0, x + 50.0) + phi_c_at(1.5, x - 50.0));
        let (e2, n2) = conserved(&GridFunction::from_fn(grid(), |x| phi_c_at(1.5, x)));
        let (ef, nf) = conserved(&far);
        assert!((ef - e - e2).abs() < 1e-8 && (nf - n - n2).abs() < 1e-8);
    }

    #[test]
    fn soliton_propagation() {
        let g = grid();
        let b = Bbm::new(g, false).unwrap();
        let x0 = -20.0;
        let u0 = GridFunction::from_fn(g, |x| phi_c_at(2.0, x - x0));
        let tr = b.evolve(EvolutionState::new(u0), &IntegratorConfig::new(0.01, 20.0)).unwrap();
        let exact = GridFunction::from_fn(g, |x| phi_c_at(2.0, x - 40.0 - x0));
        let rel = norm_h1(&tr.final_state.u.sub(&exact)) / norm_h1(&exact);
        assert!(rel < 1e-5, "{rel}");
        let (de, dn) = tr.conservation_drift();
        assert!(de < 1e-8 && dn < 1e-8, "{de} {dn}");
        assert!((tr.final_state.t - 20.0).abs() < 1e-12);
        assert_eq!(tr.final_state.step_count, 2000);
    }

    #[test]
    fn time_reversal() {
        let g = grid();
        let b = Bbm::new(g, false).unwrap();
        let u0 = GridFunction::from_fn(g, |x| phi_c_at(2.0, x + 10.0) + phi_c_at(1.3, x - 5.0));
        let cfg = IntegratorConfig::new(0.02, 15.0);
        let fwd = b.evolve(EvolutionState::new(u0.clone()), &cfg).unwrap();
        let back = b
            .evolve(EvolutionState::new(fwd.final_state.u.reflected()), &cfg)
            .unwrap();
        let gap = back.final_state.u.sub(&u0.reflected()).max_abs();
        assert!(gap < 1e-6, "{gap}");
    }

    #[test]
    fn moving_frame_holds_the_soliton() {
        let g = grid();
        let b = Bbm::new(g, false).unwrap().with_frame_speed(2.0);
        let u0 = GridFunction::from_fn(g, |x| phi_c_at(2.0, x));
        assert!(b.rhs(&u0).unwrap().max_abs() < 1e-12);
        let tr = b.evolve(EvolutionState::new(u0.clone()), &IntegratorConfig::new(0.02, 10.0)).unwrap();
        assert!(tr.final_state.u.sub(&u0).max_abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Bbm::new(Grid::truncated_line(10.0, 64).unwrap(), false).is_err());
        assert!(IntegratorConfig::new(0.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::new(0.1, -1.0).validate().is_err());
        let g = Grid::periodic(10.0, 64).unwrap();
        let b = Bbm::new(g, false).unwrap();
        let u = GridFunction::from_fn(g, |_| f64::NAN);
        let err = b.evolve(EvolutionState::new(u), &IntegratorConfig::new(0.1, 1.0));
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }
}
