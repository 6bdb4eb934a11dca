//! Least-squares power-law fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log y ≈ intercept + slope · log x`, with the slope's standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

impl PowerFit {
    /// Two-sided interval `slope ± t·stderr` for the given Student quantile.
    pub fn interval(&self, quantile: f64) -> (f64, f64) {
        (self.slope - quantile * self.slope_stderr, self.slope + quantile * self.slope_stderr)
    }
}

pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<PowerFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "power fit needs two or more paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NonFinite("power fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("power fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if lx.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerFit {
        slope,
        intercept,
        slope_stderr,
        points: lx.len(),
    })
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}
