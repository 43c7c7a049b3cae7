//! Metric summaries for calibrated predictions.

use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::metrics::{aupr, auroc, bin_predictions, ece, mce, sce, BinStats, OodScores, Positive};
use crate::scores::Prediction;

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSummary {
    pub n: usize,
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub ece: f64,
    pub mce: f64,
    pub sce: f64,
    pub bins: BinStats,
}

pub fn summarize(preds: &[Prediction], ds: &LogitDataset, m: usize) -> Result<CalibrationSummary> {
    if preds.len() != ds.n() {
        return Err(Error::arg(format!(
            "{} predictions for {} rows",
            preds.len(),
            ds.n()
        )));
    }
    let labels = ds.classes()?;
    let bins = bin_predictions(preds, &labels, m)?;
    let n = preds.len();
    let hits = preds
        .iter()
        .zip(&labels)
        .filter(|(p, &y)| p.predicted_label == y)
        .count();
    let probabilities: Vec<Vec<f64>> = preds.iter().map(|p| p.probabilities.clone()).collect();
    Ok(CalibrationSummary {
        n,
        accuracy: hits as f64 / n as f64,
        mean_confidence: mean_confidence(preds),
        ece: ece(&bins, n)?,
        mce: mce(&bins)?,
        sce: sce(&probabilities, &labels, m)?,
        bins,
    })
}

pub fn mean_confidence(preds: &[Prediction]) -> f64 {
    preds.iter().map(|p| p.confidence).sum::<f64>() / preds.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OodSummary {
    pub n_in: usize,
    pub n_out: usize,
    pub mean_out_confidence: f64,
    pub auroc: f64,
    pub aupr_in: f64,
    pub aupr_out: f64,
}

/// Detection metrics with calibrated confidence as the in-distribution score.
pub fn summarize_ood(in_preds: &[Prediction], out_preds: &[Prediction]) -> Result<OodSummary> {
    let scores = OodScores::new(
        in_preds.iter().map(|p| p.confidence).collect(),
        out_preds.iter().map(|p| p.confidence).collect(),
    )?;
    Ok(OodSummary {
        n_in: in_preds.len(),
        n_out: out_preds.len(),
        mean_out_confidence: mean_confidence(out_preds),
        auroc: auroc(&scores)?,
        aupr_in: aupr(&scores, Positive::In)?,
        aupr_out: aupr(&scores, Positive::Out)?,
    })
}
