//! Softmax, free energy and related score functions on a single logit vector.
//!
//! Every exponential is taken after subtracting the row maximum, so finite
//! inputs never overflow.

use crate::error::{Error, Result};

/// Free energy of a logit vector, `-log Σ exp(z_i)`.
///
/// Lower (more negative) values indicate a more confident, in-distribution input.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EnergyScore(pub f64);

impl EnergyScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Predicted class, its confidence and the full probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub predicted_label: usize,
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// Takes the argmax (lowest index on ties) and its value from a simplex vector.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        let predicted_label = argmax(&probabilities);
        Self {
            predicted_label,
            confidence: probabilities[predicted_label],
            probabilities,
        }
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn check_logits(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(Error::arg("empty logit vector"));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("logit vector contains a non-finite value"));
    }
    Ok(())
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "temperature must be positive and finite, got {t}"
        )))
    }
}

pub(crate) fn max_of(z: &[f64]) -> f64 {
    z.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn log_sum_exp_unchecked(z: &[f64]) -> f64 {
    let m = max_of(z);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// `log Σ exp(z_i)` with max subtraction.
pub fn log_sum_exp(z: &[f64]) -> Result<f64> {
    check_logits(z)?;
    Ok(log_sum_exp_unchecked(z))
}

pub fn energy(z: &[f64]) -> Result<EnergyScore> {
    Ok(EnergyScore(-log_sum_exp(z)?))
}

/// Writes `softmax(z / t)` into `out`. Caller guarantees `t > 0` and finite `z`.
pub(crate) fn softmax_into(z: &[f64], t: f64, out: &mut [f64]) {
    let m = max_of(z);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = ((v - m) / t).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn tempered_softmax(z: &[f64], t: f64) -> Result<Vec<f64>> {
    check_logits(z)?;
    check_temperature(t)?;
    let mut out = vec![0.0; z.len()];
    softmax_into(z, t, &mut out);
    Ok(out)
}

pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    tempered_softmax(z, 1.0)
}

pub fn predict(z: &[f64], t: f64) -> Result<Prediction> {
    Ok(Prediction::from_probabilities(tempered_softmax(z, t)?))
}

/// `-log softmax(z / t)[y]`, accurate even when the probability is close to 1.
pub(crate) fn nll_at(z: &[f64], y: usize, t: f64) -> f64 {
    let top = argmax(z);
    let m = z[top];
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, &v)| ((v - m) / t).exp())
        .sum();
    (m - z[y]) / t + rest.ln_1p()
}

/// Absolute difference between the softmax negative log-likelihood of class
/// `y` and its energy decomposition `-z_y - F(z)`.
pub fn nll_identity_residual(z: &[f64], y: usize) -> Result<f64> {
    if y >= z.len() {
        return Err(Error::arg(format!(
            "class index {y} out of range for {} logits",
            z.len()
        )));
    }
    let nll = -softmax(z)?[y].ln();
    let decomposed = -z[y] - energy(z)?.value();
    Ok((nll - decomposed).abs())
}
