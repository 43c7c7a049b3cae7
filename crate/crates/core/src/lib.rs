//! Post-hoc confidence calibration for classifier logits.
//!
//! The central method is energy-based instance-wise temperature scaling:
//! each input's temperature is the validation temperature shifted by
//! Gaussian densities of its free energy under correctly and incorrectly
//! classified populations. Temperature scaling, histogram binning,
//! one-vs-all isotonic regression and ensemble temperature scaling are
//! provided as baselines, along with ECE/MCE/SCE and AUROC/AUPR metrics and
//! a deterministic synthetic generator for shifted logit data.

pub mod bench;
pub mod calibrators;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod format;
pub mod gaussian;
pub mod metrics;
pub mod optim;
pub mod report;
pub mod scores;
pub mod synthetic;

pub use calibrators::{Calibrator, CalibratorKind};
pub use dataset::LogitDataset;
pub use error::{Error, Result};
pub use gaussian::GaussianPdf;
pub use scores::{EnergyScore, Prediction};
pub use synthetic::{ShiftKind, ShiftScenario};
