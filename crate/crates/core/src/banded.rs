//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};

/// Square banded matrix stored by rows, `kl` sub- and `ku` super-diagonals.
///
/// Row `i` keeps columns `i - kl ..= i + ku + kl`; the extra `kl` slots hold
/// fill-in created by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku + self.kl || i >= self.n || j >= self.n {
            None
        } else {
            Some(i * self.width + (j + self.kl - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics if `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry ({i}, {j}) outside band");
        let s = self.slot(i, j).expect("inside band");
        self.data[s] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let mut pivots = vec![0usize; n];
        let mut scale = 0.0f64;
        for v in &self.data {
            scale = scale.max(v.abs());
        }
        let tiny = scale * f64::EPSILON * n as f64;
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= tiny {
                return Err(Error::SingularSolve(format!("zero pivot in column {k}")));
            }
            pivots[k] = p;
            let last_col = (k + self.ku + self.kl).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    let sk = self.slot(k, j).expect("band");
                    self.data[sk] = b;
                    if let Some(sp) = self.slot(p, j) {
                        self.data[sp] = a;
                    }
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let si = self.slot(i, k).expect("band");
                let m = self.data[si] / pivot;
                self.data[si] = m;
                if m != 0.0 {
                    for j in k + 1..=last_col {
                        let ukj = self.get(k, j);
                        if ukj != 0.0 {
                            let s = self.slot(i, j).expect("fill stays in band");
                            self.data[s] -= m * ukj;
                        }
                    }
                }
            }
        }
        Ok(BandLu { lu: self, pivots })
    }
}

/// Factorization produced by [`BandMatrix::factor`]; immutable and shareable.
#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.n;
        let mut x = rhs.to_vec();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            for i in k + 1..=(k + a.kl).min(n - 1) {
                x[i] -= a.get(i, k) * xk;
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + a.ku + a.kl).min(n - 1) {
                s -= a.get(k, j) * x[j];
            }
            x[k] = s / a.get(k, k);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn solves_random_banded_systems() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for &(n, kl, ku) in &[(1, 0, 0), (5, 1, 1), (40, 2, 2), (33, 3, 1)] {
            let mut m = BandMatrix::zeros(n, kl, ku);
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    m.set(i, j, rng.gen_range(-1.0..1.0));
                }
            }
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = m.mul_vec(&x);
            let sol = m.clone().factor().unwrap().solve(&b);
            for (a, e) in sol.iter().zip(&x) {
                assert!((a - e).abs() < 1e-8, "n={n}: {a} vs {e}");
            }
        }
    }

    #[test]
    fn needs_pivoting() {
        let mut m = BandMatrix::zeros(2, 1, 1);
        m.set(0, 1, 1.0);
        m.set(1, 0, 1.0);
        m.set(1, 1, 2.0);
        let lu = m.factor().unwrap();
        let x = lu.solve(&[3.0, 4.0]);
        assert!((x[0] + 2.0).abs() < 1e-14 && (x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn singular_is_reported() {
        let m = BandMatrix::zeros(3, 1, 1);
        assert!(matches!(m.factor(), Err(Error::SingularSolve(_))));
    }
}
