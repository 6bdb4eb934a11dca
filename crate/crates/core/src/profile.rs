//! Bounded profiles `f = f̃ + c + b φ` with `f̃` decaying and `φ = tanh(x/2)`.
//!
//! The class is closed under products (through `φ² = 1 + (φ² - 1)`) and
//! derivatives (through `φ' = Q/3`), so constant and kink tails are tracked
//! exactly instead of being smeared into sampled data.

use serde::Serialize;

use crate::error::Result;
use crate::grid::{derivative, Grid, GridFunction};
use crate::solitons::{kink, q};

#[derive(Debug, Clone)]
pub struct Profile {
    pub decay: GridFunction,
    pub constant: f64,
    pub kink: f64,
}

/// Tail summary of a profile.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct Tails {
    pub constant: f64,
    pub kink: f64,
}

impl Profile {
    pub fn zero(grid: Grid) -> Self {
        Self::decaying(GridFunction::zeros(grid))
    }

    pub fn decaying(decay: GridFunction) -> Self {
        Self {
            decay,
            constant: 0.0,
            kink: 0.0,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            decay: GridFunction::zeros(grid),
            constant: c,
            kink: 0.0,
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::decaying(GridFunction::from_fn(grid, f))
    }

    pub fn with_tails(decay: GridFunction, constant: f64, kink: f64) -> Self {
        Self {
            decay,
            constant,
            kink,
        }
    }

    pub fn grid(&self) -> Grid {
        self.decay.grid
    }

    pub fn tails(&self) -> Tails {
        Tails {
            constant: self.constant,
            kink: self.kink,
        }
    }

    pub fn limit_plus(&self) -> f64 {
        self.constant + self.kink
    }

    pub fn limit_minus(&self) -> f64 {
        self.constant - self.kink
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.kink == 0.0 && self.decay.values.iter().all(|v| *v == 0.0)
    }

    /// Full samples `f̃ + c + bφ`.
    pub fn sampled(&self) -> GridFunction {
        let g = self.grid();
        GridFunction {
            grid: g,
            values: self
                .decay
                .values
                .iter()
                .enumerate()
                .map(|(j, v)| v + self.constant + self.kink * kink(g.x(j)))
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            decay: self.decay.scale(a),
            constant: a * self.constant,
            kink: a * self.kink,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// `self + a·other`
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        Self {
            decay: self.decay.axpy(a, &other.decay),
            constant: self.constant + a * other.constant,
            kink: self.kink + a * other.kink,
        }
    }

    pub fn add_assign_scaled(&mut self, a: f64, other: &Self) {
        for (x, y) in self.decay.values.iter_mut().zip(&other.decay.values) {
            *x += a * y;
        }
        self.constant += a * other.constant;
        self.kink += a * other.kink;
    }

    pub fn mul(&self, other: &Self) -> Self {
        let g = self.grid();
        let (c1, b1, c2, b2) = (self.constant, self.kink, other.constant, other.kink);
        let values = self
            .decay
            .values
            .iter()
            .zip(&other.decay.values)
            .enumerate()
            .map(|(j, (d1, d2))| {
                let p = kink(g.x(j));
                d1 * d2 + d1 * (c2 + b2 * p) + d2 * (c1 + b1 * p) + b1 * b2 * (p * p - 1.0)
            })
            .collect();
        Self {
            decay: GridFunction { grid: g, values },
            constant: c1 * c2 + b1 * b2,
            kink: c1 * b2 + c2 * b1,
        }
    }

    pub fn derivative(&self) -> Result<Self> {
        let mut d = derivative(&self.decay, 1)?;
        if self.kink != 0.0 {
            let g = self.grid();
            for (j, v) in d.values.iter_mut().enumerate() {
                *v += self.kink * q(g.x(j)) / 3.0;
            }
        }
        Ok(Self::decaying(d))
    }

    pub fn derivative_n(&self, order: u32) -> Result<Self> {
        let mut out = self.clone();
        for _ in 0..order {
            out = out.derivative()?;
        }
        Ok(out)
    }

    /// Largest absolute value of the full samples.
    pub fn max_abs(&self) -> f64 {
        self.sampled().max_abs()
    }

    /// Distance from the profile's own reflection, with the given parity sign.
    pub fn parity_defect(&self, odd: bool) -> f64 {
        let s = if odd { 1.0 } else { -1.0 };
        let tail = if odd {
            self.constant.abs()
        } else {
            self.kink.abs()
        };
        self.decay.add(&self.decay.reflected().scale(s)).max_abs().max(tail)
    }
}
