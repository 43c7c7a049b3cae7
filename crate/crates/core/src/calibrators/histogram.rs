//! Histogram binning of the top-label confidence.

use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::metrics::bin_index;
use crate::scores::{predict, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBinningParams {
    pub edges: Vec<f64>,
    /// Calibrated confidence per bin.
    pub values: Vec<f64>,
    pub k: usize,
}

impl HistogramBinningParams {
    pub fn new(edges: Vec<f64>, values: Vec<f64>, k: usize) -> Result<Self> {
        let m = values.len();
        if m == 0 || edges.len() != m + 1 {
            return Err(Error::arg(format!(
                "need M >= 1 bins and M + 1 edges, got {m} values and {} edges",
                edges.len()
            )));
        }
        if edges
            .iter()
            .enumerate()
            .any(|(i, &e)| e != i as f64 / m as f64)
        {
            return Err(Error::arg("histogram edges must be uniform over [0, 1]"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::arg("histogram bin values must lie in [0, 1]"));
        }
        if k < 2 {
            return Err(Error::arg(format!(
                "class count must be at least 2, got {k}"
            )));
        }
        Ok(Self { edges, values, k })
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    /// Keeps the raw argmax and replaces its confidence by the bin value,
    /// floored at `1/K` so the predicted class stays the largest entry. The
    /// remaining mass is spread evenly over the other classes.
    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        if z.len() != self.k {
            return Err(Error::arg(format!(
                "expected {} logits, got {}",
                self.k,
                z.len()
            )));
        }
        let raw = predict(z, 1.0)?;
        let k = self.k as f64;
        let confidence = self.values[bin_index(raw.confidence, self.m())].max(1.0 / k);
        let rest = (1.0 - confidence) / (k - 1.0);
        let probabilities = (0..self.k)
            .map(|j| {
                if j == raw.predicted_label {
                    confidence
                } else {
                    rest
                }
            })
            .collect();
        Ok(Prediction {
            predicted_label: raw.predicted_label,
            confidence,
            probabilities,
        })
    }
}

/// Uniform bins over the raw top-label confidence; each bin's value is the
/// empirical accuracy of its rows, or the bin midpoint when empty.
pub fn fit_histogram_binning(val: &LogitDataset, m: usize) -> Result<HistogramBinningParams> {
    if m == 0 {
        return Err(Error::arg("bin count must be at least 1"));
    }
    let classes = val.classes()?;
    let mut counts = vec![0usize; m];
    let mut hits = vec![0usize; m];
    for (z, &y) in val.rows().zip(&classes) {
        let p = predict(z, 1.0)?;
        let b = bin_index(p.confidence, m);
        counts[b] += 1;
        hits[b] += usize::from(p.predicted_label == y);
    }
    let edges = (0..=m).map(|i| i as f64 / m as f64).collect();
    let values = (0..m)
        .map(|b| match counts[b] {
            0 => (b as f64 + 0.5) / m as f64,
            n => hits[b] as f64 / n as f64,
        })
        .collect();
    HistogramBinningParams::new(edges, values, val.k())
}
