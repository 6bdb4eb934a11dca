//! The linearized operator `L f = -f'' + f - 2 Q f` around the rescaled soliton.

use serde::Serialize;

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};
use crate::grid::{derivative, inner, integrate, Grid, GridFunction, GridKind};
use crate::solitons::{kink, q, q1, q2};

const ORTHOGONALITY_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 40;

/// `L` on a truncated line, with a factored fourth-order banded surrogate used
/// to drive defect correction against the accurate stencil operator.
#[derive(Debug, Clone)]
pub struct OperatorL {
    grid: Grid,
    q: GridFunction,
    dq: GridFunction,
    lu: BandLu,
    near_null: Vec<f64>,
}

/// Solution of `L f = h` with the achieved residual.
#[derive(Debug, Clone)]
pub struct LSolve {
    pub solution: GridFunction,
    pub residual: f64,
    pub sweeps: usize,
}

impl OperatorL {
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.kind != GridKind::TruncatedLine {
            return Err(Error::InvalidGrid(
                "the operator L is discretized on a truncated line".into(),
            ));
        }
        let n = grid.n_points;
        let m = n - 1;
        let h2 = grid.spacing().powi(2);
        let mut band = BandMatrix::zeros(m, 2, 2);
        let off = [1.0, -16.0, 30.0, -16.0, 1.0];
        for i in 0..m {
            let x = grid.x(i + 1);
            for (s, w) in off.iter().enumerate() {
                let j = i as isize + s as isize - 2;
                if j < 0 || j >= m as isize {
                    continue;
                }
                let mut v = w / (12.0 * h2);
                if s == 2 {
                    v += 1.0 - 2.0 * q(x);
                }
                band.set(i, j as usize, v);
            }
        }
        let lu = band.factor()?;
        let dq = GridFunction::from_fn(grid, q1);
        let mut v: Vec<f64> = dq.values[1..].to_vec();
        for _ in 0..4 {
            v = lu.solve(&v);
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::SingularSolve("near-null iteration failed".into()));
            }
            v.iter_mut().for_each(|a| *a /= norm);
        }
        Ok(Self {
            grid,
            q: GridFunction::from_fn(grid, q),
            dq,
            lu,
            near_null: v,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn q(&self) -> &GridFunction {
        &self.q
    }

    pub fn dq(&self) -> &GridFunction {
        &self.dq
    }

    /// Cosine between the banded operator's near-null vector and `Q'`.
    pub fn near_null_cosine(&self) -> f64 {
        let q = &self.dq.values[1..];
        let dot: f64 = q.iter().zip(&self.near_null).map(|(a, b)| a * b).sum();
        let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
        (dot / nq).abs()
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.grid.check_same(&f.grid)?;
        let d2 = derivative(f, 2)?;
        Ok(GridFunction {
            grid: self.grid,
            values: (0..f.len())
                .map(|j| -d2.values[j] + f.values[j] * (1.0 - 2.0 * self.q.values[j]))
                .collect(),
        })
    }

    fn project_out_dq(&self, f: &GridFunction) -> GridFunction {
        let c = inner(f, &self.dq) / inner(&self.dq, &self.dq);
        f.axpy(-c, &self.dq)
    }

    pub fn invert(&self, h: &GridFunction) -> Result<GridFunction> {
        Ok(self.solve(h)?.solution)
    }

    /// The unique `f ⊥ Q'` with `L f = h`, for `h ⊥ Q'`.
    pub fn solve(&self, h: &GridFunction) -> Result<LSolve> {
        self.grid.check_same(&h.grid)?;
        let hn = inner(h, h).sqrt();
        if hn == 0.0 {
            return Ok(LSolve {
                solution: GridFunction::zeros(self.grid),
                residual: 0.0,
                sweeps: 0,
            });
        }
        let qn = inner(&self.dq, &self.dq).sqrt();
        let rel = inner(h, &self.dq) / (hn * qn);
        if rel.abs() > ORTHOGONALITY_TOL {
            return Err(Error::NotOrthogonal(rel));
        }
        let target = self.project_out_dq(h);
        let scale = target.max_abs();
        let mut f = GridFunction::zeros(self.grid);
        let mut previous = f64::INFINITY;
        let mut sweeps = 0;
        loop {
            let r = self.project_out_dq(&target.sub(&self.apply(&f)?));
            let r_max = r.max_abs();
            if r_max <= 1e-13 * scale || r_max > 0.5 * previous || sweeps == MAX_SWEEPS {
                break;
            }
            previous = r_max;
            let mut rhs = r.values[1..].to_vec();
            deflate(&mut rhs, &self.near_null);
            let mut delta = self.lu.solve(&rhs);
            deflate(&mut delta, &self.near_null);
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSolve("non-finite correction".into()));
            }
            for (fj, dj) in f.values[1..].iter_mut().zip(&delta) {
                *fj += dj;
            }
            sweeps += 1;
        }
        let solution = self.project_out_dq(&f);
        let residual = self
            .project_out_dq(&target.sub(&self.apply(&solution)?))
            .max_abs();
        Ok(LSolve {
            solution,
            residual,
            sweeps,
        })
    }
}

fn deflate(v: &mut [f64], unit: &[f64]) {
    let c: f64 = v.iter().zip(unit).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(unit).for_each(|(a, b)| *a -= c * b);
}

/// `P_λ = 2Q + ((3-λ)/2) x Q'`
pub fn p_lambda_at(lambda: f64, x: f64) -> f64 {
    2.0 * q(x) + 0.5 * (3.0 - lambda) * x * q1(x)
}

/// `V_λ = ((λ-3)/2) x Q' - Q`
pub fn v_lambda_at(lambda: f64, x: f64) -> f64 {
    0.5 * (lambda - 3.0) * x * q1(x) - q(x)
}

/// `Lφ = φ - Q'/3 - 2Qφ` in closed form.
pub fn l_kink_at(x: f64) -> f64 {
    let p = kink(x);
    p - q1(x) / 3.0 - 2.0 * q(x) * p
}

#[derive(Debug, Clone)]
pub struct AuxProfiles {
    pub lambda: f64,
    pub phi: GridFunction,
    pub p: GridFunction,
    pub p_lambda: GridFunction,
    pub v_lambda: GridFunction,
}

impl AuxProfiles {
    pub fn new(lambda: f64, grid: Grid) -> Self {
        Self {
            lambda,
            phi: GridFunction::from_fn(grid, kink),
            p: GridFunction::from_fn(grid, |x| p_lambda_at(1.0, x)),
            p_lambda: GridFunction::from_fn(grid, |x| p_lambda_at(lambda, x)),
            v_lambda: GridFunction::from_fn(grid, |x| v_lambda_at(lambda, x)),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KinkCheck {
    /// `max |(Lφ)' - (2Q - 5Q²/3)|`
    pub residual: f64,
    /// `max |(2Q - 5Q²/3) - (Q/3 + 5Q''/3)|`
    pub forms_gap: f64,
    pub at_origin: f64,
}

pub fn check_lphi(op: &OperatorL) -> Result<KinkCheck> {
    let g = op.grid();
    let phi = GridFunction::from_fn(g, kink);
    let dl = derivative(&op.apply(&phi)?, 1)?;
    let first = GridFunction::from_fn(g, |x| 2.0 * q(x) - 5.0 / 3.0 * q(x).powi(2));
    let second = GridFunction::from_fn(g, |x| q(x) / 3.0 + 5.0 / 3.0 * q2(x));
    Ok(KinkCheck {
        residual: dl.sub(&first).max_abs(),
        forms_gap: first.sub(&second).max_abs(),
        at_origin: phi.values[g.origin_index()],
    })
}

/// `(2λ-3)∫Q'² + ∫((λ-3)Q'' - Q²) P_λ`, equal to `-((15+10λ-λ²)/20)∫Q²`.
pub fn solvability_constant(lambda: f64, grid: Grid) -> f64 {
    let f = GridFunction::from_fn(grid, |x| {
        (2.0 * lambda - 3.0) * q1(x).powi(2)
            + ((lambda - 3.0) * q2(x) - q(x).powi(2)) * p_lambda_at(lambda, x)
    });
    integrate(&f)
}

pub fn solvability_closed_form(lambda: f64) -> f64 {
    -(15.0 + 10.0 * lambda - lambda * lambda) / 20.0 * 6.0
}
