//! Single-temperature scaling fitted by validation negative log-likelihood.

use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::scores::{nll_at, predict, Prediction};

pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 10.0;

/// Golden-section tolerance on ln T; keeps the final bracket under 1e-4 in T
/// anywhere in `[T_MIN, T_MAX]`.
const LOG_T_TOL: f64 = 1e-5;
const FLAT_GRID: usize = 33;
const FLAT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureParams {
    t: f64,
    k: usize,
}

impl TemperatureParams {
    pub fn new(t: f64, k: usize) -> Result<Self> {
        if !(T_MIN..=T_MAX).contains(&t) {
            return Err(Error::arg(format!(
                "temperature {t} outside [{T_MIN}, {T_MAX}]"
            )));
        }
        if k < 2 {
            return Err(Error::arg(format!(
                "class count must be at least 2, got {k}"
            )));
        }
        Ok(Self { t, k })
    }

    /// Temperature 1, i.e. the raw softmax.
    pub fn identity(k: usize) -> Result<Self> {
        Self::new(1.0, k)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        predict(z, self.t)
    }
}

/// Mean negative log-likelihood of the true classes under `softmax(z / t)`.
pub fn mean_nll(ds: &LogitDataset, classes: &[usize], t: f64) -> f64 {
    let total: f64 = ds.rows().zip(classes).map(|(z, &y)| nll_at(z, y, t)).sum();
    total / ds.n() as f64
}

/// Fits T by golden-section search on ln T over `[ln T_MIN, ln T_MAX]`.
///
/// Returns exactly 1.0 when the NLL is flat (range below 1e-10) over the
/// bracket. The bracket endpoints are always considered as candidates, so a
/// monotone NLL yields the clamp value.
pub fn fit_temperature(val: &LogitDataset) -> Result<TemperatureParams> {
    let classes = val.classes()?;
    let nll = |t: f64| mean_nll(val, &classes, t);
    let (lo, hi) = (T_MIN.ln(), T_MAX.ln());

    let grid: Vec<(f64, f64)> = (0..FLAT_GRID)
        .map(|i| {
            let t = (lo + (hi - lo) * i as f64 / (FLAT_GRID - 1) as f64).exp();
            (t, nll(t))
        })
        .collect();
    let (min, max) = grid
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &(_, v)| {
            (a.min(v), b.max(v))
        });
    if max - min < FLAT_TOL {
        return TemperatureParams::identity(val.k());
    }

    let searched = golden_section(|u| nll(u.exp()), lo, hi, LOG_T_TOL).exp();
    let mut best = (searched, nll(searched));
    for t in [T_MIN, T_MAX] {
        let v = nll(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    TemperatureParams::new(best.0.clamp(T_MIN, T_MAX), val.k())
}
