//! Uniform grids, sampled functions, quadrature, differentiation and norms.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralPlan;

/// Stencil width used for finite differences on truncated-line grids.
const STENCIL_WIDTH: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Periodic,
    TruncatedLine,
}

/// Uniform grid on `[-L, L)` with `n` points, `x_j = -L + j h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub kind: GridKind,
    #[serde(rename = "L")]
    pub half_length: f64,
    #[serde(rename = "n")]
    pub n_points: usize,
}

impl Grid {
    pub fn new(kind: GridKind, half_length: f64, n_points: usize) -> Result<Self> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(Error::InvalidGrid(format!("half length {half_length} must be positive")));
        }
        if n_points < 16 {
            return Err(Error::InvalidGrid(format!("n = {n_points} is below the minimum of 16")));
        }
        if kind == GridKind::Periodic && !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "periodic grids need a power-of-two size, got {n_points}"
            )));
        }
        Ok(Self {
            kind,
            half_length,
            n_points,
        })
    }

    pub fn periodic(half_length: f64, n_points: usize) -> Result<Self> {
        Self::new(GridKind::Periodic, half_length, n_points)
    }

    pub fn truncated_line(half_length: f64, n_points: usize) -> Result<Self> {
        Self::new(GridKind::TruncatedLine, half_length, n_points)
    }

    /// Default grid for the speed-independent profiles: `[-60, 60)`, 4096 points.
    pub fn profile_default() -> Self {
        Self::truncated_line(60.0, 4096).expect("static grid parameters are valid")
    }

    /// Grid for the solved profile lattice, `[-80, 80)` with 8192 points; the
    /// higher profiles carry polynomial prefactors on their `e^{-|x|}` tails.
    pub fn lattice_default() -> Self {
        Self::truncated_line(80.0, 8192).expect("static grid parameters are valid")
    }

    /// Smallest power-of-two periodic grid on `[-L, L)` with spacing at most `max_spacing`.
    pub fn periodic_with_spacing(half_length: f64, max_spacing: f64) -> Result<Self> {
        let needed = (2.0 * half_length / max_spacing).ceil().max(16.0) as usize;
        Self::periodic(half_length, needed.next_power_of_two())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n_points as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Index of the grid point `x = 0` (the grid always contains it for even `n`).
    pub fn origin_index(&self) -> usize {
        self.n_points / 2
    }

    pub fn spectral_plan(&self) -> SpectralPlan {
        SpectralPlan::new(self.n_points, 2.0 * self.half_length)
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.kind == other.kind
            && self.n_points == other.n_points
            && (self.half_length - other.half_length).abs() <= 1e-12 * self.half_length
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Samples of a real function on a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n_points
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sample {j} is not finite")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            values: vec![0.0; grid.n_points],
            grid,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n_points).map(|j| f(grid.x(j))).collect();
        Self { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise map with access to the abscissa.
    pub fn map_x(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(j, &v)| f(self.grid.x(j), v))
                .collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    /// `self + a * other`
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        self.zip_with(other, |u, v| u + a * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |u, v| u + v)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |u, v| u - v)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |u, v| u * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Values at `-x`, exact on grids symmetric about the origin (`x_0 = -L` maps to itself).
    pub fn reflected(&self) -> Self {
        let n = self.len();
        let values = (0..n).map(|j| self.values[(n - j) % n]).collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,value")?;
        for (j, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.x(j), v)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("grid functions always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GridFunction =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let grid = Grid::new(raw.grid.kind, raw.grid.half_length, raw.grid.n_points)?;
        Self::new(grid, raw.values)
    }
}

/// Trapezoid rule. On periodic grids this is `h * sum`; on truncated lines the
/// end points get half weight.
pub fn integrate(f: &GridFunction) -> f64 {
    let h = f.grid.spacing();
    let sum: f64 = f.values.iter().sum();
    match f.grid.kind {
        GridKind::Periodic => h * sum,
        GridKind::TruncatedLine => {
            let n = f.len();
            h * (sum - 0.5 * (f.values[0] + f.values[n - 1]))
        }
    }
}

pub fn inner(f: &GridFunction, g: &GridFunction) -> f64 {
    integrate(&f.mul(g))
}

/// Derivative of order 1 to 4: spectral on periodic grids, wide centered
/// finite differences (one-sided near the ends) on truncated lines.
pub fn derivative(f: &GridFunction, order: u32) -> Result<GridFunction> {
    if !(1..=4).contains(&order) {
        return Err(Error::DerivativeOrder(order));
    }
    let values = match f.grid.kind {
        GridKind::Periodic => f.grid.spectral_plan().derivative(&f.values, order),
        GridKind::TruncatedLine => stencil_derivative(&f.values, f.grid.spacing(), order as usize),
    };
    Ok(GridFunction {
        grid: f.grid,
        values,
    })
}

/// Finite-difference weights for derivatives up to `max_order` at `z` (Fornberg).
pub fn fd_weights(z: f64, nodes: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; max_order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c
}

fn stencil_derivative(values: &[f64], h: f64, order: usize) -> Vec<f64> {
    let n = values.len();
    let w = STENCIL_WIDTH.min(n);
    let half = w / 2;
    let nodes: Vec<f64> = (0..w).map(|i| i as f64).collect();
    // weights for every position of the evaluation point inside the stencil
    let table: Vec<Vec<f64>> = (0..w)
        .map(|p| {
            fd_weights(p as f64, &nodes, order)
                .iter()
                .map(|row| row[order] / h.powi(order as i32))
                .collect()
        })
        .collect();
    (0..n)
        .map(|j| {
            let start = j.saturating_sub(half).min(n - w);
            let weights = &table[j - start];
            weights
                .iter()
                .zip(&values[start..start + w])
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Antiderivative anchored at `x = 0` for samples that decay at both ends.
///
/// The total mass is carried by `3 tanh(x/2)` (antiderivative of a sech²
/// bump of mass 6); the zero-mean remainder is integrated spectrally, which
/// keeps spectral accuracy for smooth decaying data on either grid kind.
pub fn antiderivative_from_zero(f: &GridFunction) -> GridFunction {
    let grid = f.grid;
    let h = grid.spacing();
    let mass = h * f.values.iter().sum::<f64>();
    let bump = |x: f64| 1.5 / (x / 2.0).cosh().powi(2);
    let remainder: Vec<f64> = f
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| v - mass / 6.0 * bump(grid.x(j)))
        .collect();
    let plan = grid.spectral_plan();
    let integrated = plan.apply(&remainder, |k, _| {
        if k == 0.0 {
            0.0.into()
        } else {
            rustfft::num_complex::Complex64::new(0.0, -1.0 / k)
        }
    });
    let anchor = integrated[grid.origin_index()];
    let values = integrated
        .iter()
        .enumerate()
        .map(|(j, v)| v - anchor + mass / 6.0 * 3.0 * (grid.x(j) / 2.0).tanh())
        .collect();
    GridFunction { grid, values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormWeights {
    pub c2: f64,
    pub cutoff_center: f64,
    pub cutoff_width: f64,
}

impl NormWeights {
    pub fn new(c2: f64, cutoff_center: f64, cutoff_width: f64) -> Result<Self> {
        if !(c2 > 1.0) {
            return Err(Error::InvalidParameter(format!("c2 = {c2} must exceed 1")));
        }
        if !(cutoff_width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cutoff width {cutoff_width} must be positive"
            )));
        }
        Ok(Self {
            c2,
            cutoff_center,
            cutoff_width,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

pub fn norm_l2(f: &GridFunction) -> f64 {
    inner(f, f).sqrt()
}

pub fn norm_h1(f: &GridFunction) -> f64 {
    let d = derivative(f, 1).expect("order 1 is valid");
    (inner(f, f) + inner(&d, &d)).sqrt()
}

/// `(∫ (v')² + (c₂ - 1) v²)^{1/2}`
pub fn norm_h1_c2(f: &GridFunction, w: &NormWeights) -> f64 {
    let d = derivative(f, 1).expect("order 1 is valid");
    (inner(&d, &d) + (w.c2 - 1.0) * inner(f, f)).sqrt()
}

fn halfline_sum(grid: &Grid, values: &[f64], x0: f64, side: Side) -> f64 {
    let h = grid.spacing();
    values
        .iter()
        .enumerate()
        .filter(|(j, _)| match side {
            Side::Left => grid.x(*j) < x0,
            Side::Right => grid.x(*j) > x0,
        })
        .map(|(_, v)| v * v)
        .sum::<f64>()
        * h
}

/// L² norm restricted to `{x < x0}` or `{x > x0}` by a sharp index cutoff.
pub fn norm_l2_halfline(f: &GridFunction, x0: f64, side: Side) -> f64 {
    halfline_sum(&f.grid, &f.values, x0, side).sqrt()
}

pub fn norm_h1_halfline(f: &GridFunction, x0: f64, side: Side) -> f64 {
    let d = derivative(f, 1).expect("order 1 is valid");
    (halfline_sum(&f.grid, &f.values, x0, side) + halfline_sum(&f.grid, &d.values, x0, side))
        .sqrt()
}

/// Wavenumber of the `m`-th Fourier mode on a periodic grid.
pub fn mode_wavenumber(grid: &Grid, m: usize) -> f64 {
    PI * m as f64 / grid.half_length
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(x: f64) -> f64 {
        1.5 / (x / 2.0).cosh().powi(2)
    }

    fn dq(x: f64) -> f64 {
        -1.5 * (x / 2.0).tanh() / (x / 2.0).cosh().powi(2)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::periodic(10.0, 100).is_err());
        assert!(Grid::periodic(10.0, 8).is_err());
        assert!(Grid::truncated_line(-1.0, 64).is_err());
        assert!(Grid::truncated_line(10.0, 100).is_ok());
        let g = Grid::periodic(10.0, 64).unwrap();
        assert_eq!(g.x(0), -10.0);
        assert_eq!(g.x(g.origin_index()), 0.0);
    }

    #[test]
    fn integrates_q_and_its_moments() {
        let g = Grid::periodic(60.0, 4096).unwrap();
        let qq = GridFunction::from_fn(g, |x| q(x) * q(x));
        assert!((integrate(&qq) - 6.0).abs() < 1e-10);
        let x2q2 = GridFunction::from_fn(g, |x| x * x * q(x) * q(x));
        assert!((integrate(&x2q2) - (2.0 * PI * PI - 12.0)).abs() < 1e-8);
        assert_eq!(integrate(&GridFunction::zeros(g)), 0.0);
    }

    #[test]
    fn derivatives_of_q() {
        for grid in [Grid::profile_default(), Grid::periodic(60.0, 4096).unwrap()] {
            let f = GridFunction::from_fn(grid, q);
            let d1 = derivative(&f, 1).unwrap();
            let d2 = derivative(&f, 2).unwrap();
            let exact1 = GridFunction::from_fn(grid, dq);
            let exact2 = GridFunction::from_fn(grid, |x| q(x) - q(x) * q(x));
            assert!(d1.sub(&exact1).max_abs() < 1e-8, "{:?}", grid.kind);
            assert!(d2.sub(&exact2).max_abs() < 1e-8, "{:?}", grid.kind);
            let d11 = derivative(&d1, 1).unwrap();
            assert!(d11.sub(&d2).max_abs() < 1e-8);
        }
    }

    #[test]
    fn derivative_of_constant_and_bad_order() {
        let g = Grid::truncated_line(5.0, 64).unwrap();
        let c = GridFunction::from_fn(g, |_| 3.0);
        assert!(derivative(&c, 1).unwrap().max_abs() < 1e-10);
        assert!(matches!(derivative(&c, 5), Err(Error::DerivativeOrder(5))));
        assert!(derivative(&c, 0).is_err());
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let g = Grid::periodic(PI, 64).unwrap();
        for m in [1usize, 3, 7, 20] {
            let k = mode_wavenumber(&g, m);
            let f = GridFunction::from_fn(g, |x| (k * x).sin());
            let d = derivative(&f, 1).unwrap();
            let exact = GridFunction::from_fn(g, |x| k * (k * x).cos());
            assert!(d.sub(&exact).max_abs() < 1e-12 * k.max(1.0));
        }
    }

    #[test]
    fn q_norms() {
        let g = Grid::profile_default();
        let f = GridFunction::from_fn(g, q);
        let d = derivative(&f, 1).unwrap();
        assert!((inner(&f, &f) - 6.0).abs() < 1e-10);
        assert!((inner(&d, &d) - 1.2).abs() < 1e-10);
        assert!((norm_h1(&f).powi(2) - 7.2).abs() < 1e-9);
        let w = NormWeights::new(1.5, 0.0, 1.0).unwrap();
        assert!((norm_h1_c2(&f, &w).powi(2) - (1.2 + 0.5 * 6.0)).abs() < 1e-9);
        assert_eq!(norm_h1(&GridFunction::zeros(g)), 0.0);
        let left = norm_l2_halfline(&f, 0.0, Side::Left).powi(2);
        let right = norm_l2_halfline(&f, 0.0, Side::Right).powi(2);
        assert!((left - right).abs() < 1e-12);
        assert!((left + right + g.spacing() * q(0.0).powi(2) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn parity_of_quadrature() {
        let g = Grid::profile_default();
        let even = GridFunction::from_fn(g, q);
        let odd = GridFunction::from_fn(g, dq);
        assert!(inner(&even, &odd).abs() < 1e-14);
        assert!(even.sub(&even.reflected()).max_abs() < 1e-15);
        assert!(odd.add(&odd.reflected()).max_abs() < 1e-15);
    }

    #[test]
    fn antiderivative_matches_closed_form() {
        for grid in [Grid::profile_default(), Grid::periodic(60.0, 4096).unwrap()] {
            // ∫₀ˣ Q² with Q² = (9/4) sech⁴(x/2): 9/2 (tanh - tanh³/3)
            let f = GridFunction::from_fn(grid, |x| q(x) * q(x));
            let a = antiderivative_from_zero(&f);
            let exact = GridFunction::from_fn(grid, |x| {
                let t = (x / 2.0).tanh();
                4.5 * (t - t * t * t / 3.0)
            });
            assert!(a.sub(&exact).max_abs() < 1e-11);
            // odd integrand, even antiderivative
            let g = GridFunction::from_fn(grid, |x| x * q(x));
            let ag = antiderivative_from_zero(&g);
            assert!(ag.values[grid.origin_index()].abs() < 1e-15);
            assert!(ag.sub(&ag.reflected()).max_abs() < 1e-11);
        }
    }

    #[test]
    fn json_envelope_round_trip() {
        let g = Grid::periodic(4.0, 16).unwrap();
        let f = GridFunction::from_fn(g, |x| x * x);
        let text = f.to_json();
        assert!(text.contains("\"L\":4.0"));
        assert!(text.contains("\"kind\":\"periodic\""));
        assert_eq!(GridFunction::from_json(&text).unwrap(), f);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("x,value\n-4,16\n"));
    }

    #[test]
    fn rejects_nonfinite_samples() {
        let g = Grid::periodic(4.0, 16).unwrap();
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(matches!(GridFunction::new(g, v), Err(Error::NonFinite(_))));
    }
}
