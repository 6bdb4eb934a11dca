//! Formal expansion of the rescaled residual in powers of the small soliton.
//!
//! A term is `g(y) σ^l Q̃^k (Q̃')^e` with `e ∈ {0, 1}` and `g` a [`Profile`].
//! Higher powers of `Q̃'` and all `Q̃''` are eliminated with
//! `Q̃'' = σQ̃ - Q̃²/θ` and `(Q̃')² = σQ̃² - (2/(3θ))Q̃³`, where
//! `1/θ = (1 - λσ)/(1 - λ)` is a polynomial in `σ`. The drift `μ` is expanded as a
//! power series. Terms of weight `l + k + e` above the cap are dropped; every
//! operation is weight non-decreasing, so truncation commutes with the algebra.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::grid::Grid;
use crate::profile::Profile;

/// `(l, k, e)` for `σ^l Q̃^k (Q̃')^e`.
pub type Key = (u32, u32, u32);

pub fn weight(key: Key) -> u32 {
    key.0 + key.1 + key.2
}

#[derive(Debug, Clone)]
pub struct Series {
    pub terms: BTreeMap<Key, Profile>,
}

impl Series {
    pub fn new() -> Self {
        Self {
            terms: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: Key) -> Option<&Profile> {
        self.terms.get(&key)
    }

    pub fn push(&mut self, key: Key, coef: f64, g: &Profile) {
        if coef == 0.0 {
            return;
        }
        match self.terms.get_mut(&key) {
            Some(p) => p.add_assign_scaled(coef, g),
            None => {
                self.terms.insert(key, g.scale(coef));
            }
        }
    }

    pub fn add(&self, other: &Series) -> Series {
        self.axpy(1.0, other)
    }

    pub fn axpy(&self, a: f64, other: &Series) -> Series {
        let mut out = self.clone();
        for (k, g) in &other.terms {
            out.push(*k, a, g);
        }
        out
    }
}

impl Default for Series {
    fn default() -> Self {
        Self::new()
    }
}

/// Truncated algebra for one `λ`, with the shift-rate profile `β` supplied as
/// scalar coefficients `a_{k,l}`.
#[derive(Debug, Clone)]
pub struct Algebra {
    pub lambda: f64,
    pub cap: u32,
    grid: Grid,
    inv_theta: [f64; 2],
    mu: Series,
    beta: Series,
}

impl Algebra {
    pub fn new(lambda: f64, cap: u32, grid: Grid, shift_rates: &BTreeMap<(u32, u32), f64>) -> Self {
        let inv_theta = [1.0 / (1.0 - lambda), -lambda / (1.0 - lambda)];
        let mut mu = Series::new();
        // (1 - σ)/(1 - λσ) = 1 + Σ_{n≥1} λ^{n-1}(λ - 1) σ^n
        mu.push((0, 0, 0), 1.0, &Profile::constant(grid, 1.0));
        for n in 1..=cap {
            let c = lambda.powi(n as i32 - 1) * (lambda - 1.0);
            mu.push((n, 0, 0), c, &Profile::constant(grid, 1.0));
        }
        let mut beta = Series::new();
        for (&(k, l), &a) in shift_rates {
            if k + l <= cap {
                beta.push((l, k, 0), a, &Profile::constant(grid, 1.0));
            }
        }
        Self {
            lambda,
            cap,
            grid,
            inv_theta,
            mu,
            beta,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn keep(&self, key: Key) -> bool {
        weight(key) <= self.cap
    }

    /// `σ^l Q̃^k (Q̃')^e` times `σ^l' Q̃^k' (Q̃')^e'` in reduced form.
    fn mono_mul(&self, a: Key, b: Key) -> Vec<(Key, f64)> {
        let (l, k, e) = (a.0 + b.0, a.1 + b.1, a.2 + b.2);
        if e <= 1 {
            return vec![((l, k, e), 1.0)];
        }
        let [r0, r1] = self.inv_theta;
        vec![
            ((l + 1, k + 2, 0), 1.0),
            ((l, k + 3, 0), -2.0 / 3.0 * r0),
            ((l + 1, k + 3, 0), -2.0 / 3.0 * r1),
        ]
    }

    /// Derivative of the monomial with respect to `y_σ`.
    fn mono_diff(&self, key: Key) -> Vec<(Key, f64)> {
        let (l, k, e) = key;
        let kf = k as f64;
        let [r0, r1] = self.inv_theta;
        match e {
            0 if k == 0 => vec![],
            0 => vec![((l, k - 1, 1), kf)],
            _ => vec![
                ((l + 1, k + 1, 0), kf + 1.0),
                ((l, k + 2, 0), -(2.0 / 3.0 * kf + 1.0) * r0),
                ((l + 1, k + 2, 0), -(2.0 / 3.0 * kf + 1.0) * r1),
            ],
        }
    }

    pub fn mul(&self, a: &Series, b: &Series) -> Series {
        let mut out = Series::new();
        for (ka, ga) in &a.terms {
            for (kb, gb) in &b.terms {
                if weight(*ka) + weight(*kb) > self.cap {
                    continue;
                }
                let prod = ga.mul(gb);
                for (key, c) in self.mono_mul(*ka, *kb) {
                    if self.keep(key) {
                        out.push(key, c, &prod);
                    }
                }
            }
        }
        out
    }

    /// Derivative of the coefficient profiles in `y`.
    fn d_y(&self, s: &Series) -> Result<Series> {
        let mut out = Series::new();
        for (k, g) in &s.terms {
            out.push(*k, 1.0, &g.derivative()?);
        }
        Ok(out)
    }

    fn d_s(&self, s: &Series) -> Series {
        let mut out = Series::new();
        for (k, g) in &s.terms {
            for (key, c) in self.mono_diff(*k) {
                if self.keep(key) {
                    out.push(key, c, g);
                }
            }
        }
        out
    }

    /// `∂_x` with `y = x - α(y_σ)`, `y_σ = x + μt`.
    pub fn dx(&self, s: &Series) -> Result<Series> {
        let gy = self.d_y(s)?;
        let drag = self.mul(&self.beta, &gy);
        Ok(gy.axpy(-1.0, &drag).add(&self.d_s(s)))
    }

    pub fn dt(&self, s: &Series) -> Result<Series> {
        let gy = self.d_y(s)?;
        let inner = self.d_s(s).axpy(-1.0, &self.mul(&self.beta, &gy));
        Ok(self.mul(&self.mu, &inner))
    }

    /// `(1 - λ∂_x²)∂_t z + ∂_x(∂_x² z - z + z²)`
    pub fn residual(&self, z: &Series) -> Result<Series> {
        let zt = self.dt(z)?;
        let first = zt.axpy(-self.lambda, &self.dx(&self.dx(&zt)?)?);
        let zx = self.dx(z)?;
        let inner = self.dx(&zx)?.axpy(-1.0, z).add(&self.mul(z, z));
        Ok(first.add(&self.dx(&inner)?))
    }
}

/// Coefficients of `σ^l Q̃^k` and `σ^l (Q̃^k)'` in the residual for slot `(k, l)`.
#[derive(Debug, Clone)]
pub struct SlotCoefficients {
    pub plain: Profile,
    pub derived: Profile,
}

/// Read off slot `(k, l)`, `k ≥ 1`; `σ^l Q̃^{k-1} Q̃' = σ^l (Q̃^k)'/k`.
pub fn slot(s: &Series, k: u32, l: u32, grid: Grid) -> SlotCoefficients {
    let plain = s
        .get((l, k, 0))
        .cloned()
        .unwrap_or_else(|| Profile::zero(grid));
    let derived = s
        .get((l, k - 1, 1))
        .map(|p| p.scale(1.0 / k as f64))
        .unwrap_or_else(|| Profile::zero(grid));
    SlotCoefficients { plain, derived }
}

/// `Q(y) + Q̃(y_σ) + Σ σ^l (A_{k,l}(y) Q̃^k + B_{k,l}(y) (Q̃^k)')`
pub fn ansatz(grid: Grid, profiles: &BTreeMap<(u32, u32), (Profile, Profile)>, big: bool, small: bool) -> Series {
    let mut z = Series::new();
    if big {
        z.push((0, 0, 0), 1.0, &Profile::from_fn(grid, crate::solitons::q));
    }
    if small {
        z.push((0, 1, 0), 1.0, &Profile::constant(grid, 1.0));
    }
    for (&(k, l), (a, b)) in profiles {
        z.push((l, k, 0), 1.0, a);
        z.push((l, k - 1, 1), k as f64, b);
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solitons::{q, q1};

    fn max_all(s: &Series) -> f64 {
        s.terms.values().map(|p| p.max_abs()).fold(0.0, f64::max)
    }

    #[test]
    fn small_soliton_alone_is_exact() {
        let g = Grid::truncated_line(40.0, 1024).unwrap();
        let mut rates = BTreeMap::new();
        rates.insert((1, 0), 0.7);
        let alg = Algebra::new(0.4, 5, g, &rates);
        let z = ansatz(g, &BTreeMap::new(), false, true);
        let s = alg.residual(&z).unwrap();
        assert!(max_all(&s) < 1e-13, "{}", max_all(&s));
    }

    #[test]
    fn big_soliton_alone_is_exact() {
        let g = Grid::truncated_line(40.0, 1024).unwrap();
        let alg = Algebra::new(0.4, 3, g, &BTreeMap::new());
        let z = ansatz(g, &BTreeMap::new(), true, false);
        assert!(max_all(&alg.residual(&z).unwrap()) < 1e-8);
    }

    #[test]
    fn leading_sources() {
        let g = Grid::truncated_line(40.0, 1024).unwrap();
        let alg = Algebra::new(0.3, 1, g, &BTreeMap::new());
        let s = alg.residual(&ansatz(g, &BTreeMap::new(), true, true)).unwrap();
        let c = slot(&s, 1, 0, g);
        let f = crate::grid::GridFunction::from_fn(g, |x| 2.0 * q1(x));
        let gg = crate::grid::GridFunction::from_fn(g, |x| 2.0 * q(x));
        assert!(c.plain.sampled().sub(&f).max_abs() < 1e-9);
        assert!(c.derived.sampled().sub(&gg).max_abs() < 1e-9);
    }
}
