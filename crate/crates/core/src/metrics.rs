//! Calibration and OOD-detection metrics.
//!
//! Calibration errors are reported in percent (×100). Bins are the uniform
//! half-open intervals `[m/M, (m+1)/M)` with the last one closed at 1.0.

use crate::error::{Error, Result};
use crate::scores::Prediction;

pub const DEFAULT_BINS: usize = 15;

/// Bin holding `confidence`. Edges are computed as `m as f64 / M as f64`, so
/// a value equal to an edge always lands in the bin starting there.
pub fn bin_index(confidence: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut idx = ((confidence * mf).floor().max(0.0) as usize).min(m - 1);
    if idx > 0 && confidence < idx as f64 / mf {
        idx -= 1;
    } else if idx + 1 < m && confidence >= (idx + 1) as f64 / mf {
        idx += 1;
    }
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bin {
    pub count: usize,
    /// Mean confidence; 0 for an empty bin.
    pub confidence: f64,
    /// Fraction correct; 0 for an empty bin.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub bins: Vec<Bin>,
}

impl BinStats {
    pub fn m(&self) -> usize {
        self.bins.len()
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Accumulates `(confidence, hit)` pairs into `m` bins.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, bool)>, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::arg("bin count must be at least 1"));
        }
        let mut counts = vec![0usize; m];
        let mut conf = vec![0.0; m];
        let mut hits = vec![0usize; m];
        for (c, hit) in pairs {
            let b = bin_index(c, m);
            counts[b] += 1;
            conf[b] += c;
            hits[b] += usize::from(hit);
        }
        let bins = (0..m)
            .map(|b| match counts[b] {
                0 => Bin::default(),
                n => Bin {
                    count: n,
                    confidence: conf[b] / n as f64,
                    accuracy: hits[b] as f64 / n as f64,
                },
            })
            .collect();
        Ok(Self { bins })
    }

    fn weighted_gap(&self, n: usize) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| b.count as f64 / n as f64 * (b.accuracy - b.confidence).abs())
            .sum()
    }
}

pub fn bin_predictions(preds: &[Prediction], labels: &[usize], m: usize) -> Result<BinStats> {
    if preds.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    BinStats::from_pairs(
        preds
            .iter()
            .zip(labels)
            .map(|(p, &y)| (p.confidence, p.predicted_label == y)),
        m,
    )
}

/// Expected calibration error ×100.
pub fn ece(bins: &BinStats, n: usize) -> Result<f64> {
    let total = bins.total();
    if n != total || n == 0 {
        return Err(Error::arg(format!("n = {n} but bins hold {total} samples")));
    }
    Ok(bins.weighted_gap(n) * 100.0)
}

/// Maximum calibration error ×100 over nonempty bins.
pub fn mce(bins: &BinStats) -> Result<f64> {
    bins.bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.accuracy - b.confidence).abs() * 100.0)
        .reduce(f64::max)
        .ok_or_else(|| Error::arg("all bins are empty"))
}

/// Static (classwise) calibration error ×100.
pub fn sce(probabilities: &[Vec<f64>], labels: &[usize], m: usize) -> Result<f64> {
    let n = probabilities.len();
    if n == 0 || n != labels.len() {
        return Err(Error::arg(format!(
            "{n} probability rows but {} labels",
            labels.len()
        )));
    }
    let k = probabilities[0].len();
    if k == 0 || probabilities.iter().any(|p| p.len() != k) {
        return Err(Error::arg("probability rows have inconsistent lengths"));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::arg(format!(
            "label {y} out of range for {k} classes"
        )));
    }
    let mut total = 0.0;
    for class in 0..k {
        let bins = BinStats::from_pairs(
            probabilities
                .iter()
                .zip(labels)
                .map(|(p, &y)| (p[class], y == class)),
            m,
        )?;
        total += bins.weighted_gap(n);
    }
    Ok(total / k as f64 * 100.0)
}

/// Scores for the in-distribution and OOD sides; higher means "more in-distribution".
#[derive(Debug, Clone, PartialEq)]
pub struct OodScores {
    pub in_scores: Vec<f64>,
    pub out_scores: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Positive {
    In,
    Out,
}

impl OodScores {
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Result<Self> {
        let s = Self {
            in_scores,
            out_scores,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.in_scores.is_empty() || self.out_scores.is_empty() {
            return Err(Error::arg("both score lists must be nonempty"));
        }
        if self
            .in_scores
            .iter()
            .chain(&self.out_scores)
            .any(|s| s.is_nan())
        {
            return Err(Error::arg("scores contain NaN"));
        }
        Ok(())
    }
}

/// Mann–Whitney AUROC with ties counted as one half.
pub fn auroc(s: &OodScores) -> Result<f64> {
    s.check()?;
    let mut all: Vec<(f64, bool)> = s
        .in_scores
        .iter()
        .map(|&v| (v, true))
        .chain(s.out_scores.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // midrank sum of the in-distribution side
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid_rank * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let n_in = s.in_scores.len() as f64;
    let n_out = s.out_scores.len() as f64;
    Ok((rank_sum - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out))
}

/// Average precision with `positive` as the positive class; tied scores form
/// one threshold.
pub fn aupr(s: &OodScores, positive: Positive) -> Result<f64> {
    s.check()?;
    let mut all: Vec<(f64, bool)> = match positive {
        Positive::In => s
            .in_scores
            .iter()
            .map(|&v| (v, true))
            .chain(s.out_scores.iter().map(|&v| (v, false)))
            .collect(),
        Positive::Out => s
            .out_scores
            .iter()
            .map(|&v| (-v, true))
            .chain(s.in_scores.iter().map(|&v| (-v, false)))
            .collect(),
    };
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_pos = all.iter().filter(|e| e.1).count() as f64;

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / n_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityRow {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

/// One row per bin, empty bins included with blank confidence/accuracy.
pub fn reliability_table(bins: &BinStats) -> Vec<ReliabilityRow> {
    let m = bins.m();
    bins.bins
        .iter()
        .enumerate()
        .map(|(i, b)| ReliabilityRow {
            bin: i,
            lower: i as f64 / m as f64,
            upper: (i + 1) as f64 / m as f64,
            count: b.count,
            confidence: (b.count > 0).then_some(b.confidence),
            accuracy: (b.count > 0).then_some(b.accuracy),
        })
        .collect()
}
