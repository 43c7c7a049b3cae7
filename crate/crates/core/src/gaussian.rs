//! One-dimensional Gaussian densities fitted to energy scores.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Lower bound on the fitted standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPdf {
    mu: f64,
    sigma: f64,
}

impl GaussianPdf {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::arg(format!(
                "gaussian mean must be finite, got {mu}"
            )));
        }
        if !(sigma >= SIGMA_FLOOR && sigma.is_finite()) {
            return Err(Error::arg(format!(
                "gaussian sigma must be finite and >= {SIGMA_FLOOR}, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    /// Maximum-likelihood fit: sample mean and population (divide-by-n)
    /// standard deviation, the latter floored at [`SIGMA_FLOOR`].
    pub fn fit(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::arg("cannot fit a gaussian to zero samples"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::arg("gaussian samples contain a non-finite value"));
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
        Self::new(mu, var.sqrt().max(SIGMA_FLOOR))
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn density(&self, x: f64) -> f64 {
        let u = (x - self.mu) / self.sigma;
        (-0.5 * u * u).exp() / (self.sigma * (2.0 * PI).sqrt())
    }
}
