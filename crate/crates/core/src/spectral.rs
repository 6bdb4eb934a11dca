//! FFT helpers shared by the spectral derivative and the time integrator.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward/inverse plans plus wavenumbers for one periodic grid size.
#[derive(Clone)]
pub struct SpectralPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    wavenumbers: Vec<f64>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan")
            .field("n", &self.wavenumbers.len())
            .finish()
    }
}

impl SpectralPlan {
    /// Plans for `n` samples on a period of length `period`.
    pub fn new(n: usize, period: f64) -> Self {
        let (forward, inverse) = PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            (p.plan_fft_forward(n), p.plan_fft_inverse(n))
        });
        let wavenumbers = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * PI * m / period
            })
            .collect();
        Self {
            forward,
            inverse,
            wavenumbers,
        }
    }

    pub fn len(&self) -> usize {
        self.wavenumbers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavenumbers.is_empty()
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.wavenumbers
    }

    /// True for the unpaired Nyquist mode of an even-length transform.
    pub fn is_nyquist(&self, j: usize) -> bool {
        self.len() % 2 == 0 && j == self.len() / 2
    }

    pub fn forward_real(&self, values: &[f64], out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(values.iter().map(|&v| Complex64::new(v, 0.0)));
        self.forward.process(out);
    }

    /// Inverse transform, normalized, keeping the real part.
    pub fn inverse_real(&self, spectrum: &mut [Complex64], out: &mut [f64]) {
        self.inverse.process(spectrum);
        let scale = 1.0 / self.len() as f64;
        for (o, c) in out.iter_mut().zip(spectrum.iter()) {
            *o = c.re * scale;
        }
    }

    /// Multiply the spectrum of `values` by `symbol(k, j)` and transform back.
    pub fn apply<F>(&self, values: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn(f64, usize) -> Complex64,
    {
        let mut buf = Vec::with_capacity(values.len());
        self.forward_real(values, &mut buf);
        for (j, c) in buf.iter_mut().enumerate() {
            *c *= symbol(self.wavenumbers[j], j);
        }
        let mut out = vec![0.0; values.len()];
        self.inverse_real(&mut buf, &mut out);
        out
    }

    /// Spectral derivative of the given order; odd orders drop the Nyquist mode.
    pub fn derivative(&self, values: &[f64], order: u32) -> Vec<f64> {
        let odd = order % 2 == 1;
        self.apply(values, |k, j| {
            if odd && self.is_nyquist(j) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, k).powu(order)
            }
        })
    }
}
