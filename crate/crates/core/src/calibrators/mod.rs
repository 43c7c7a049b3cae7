//! Calibration maps and their JSON parameter documents.
//!
//! Every fitted calibrator serializes to one JSON object of the form
//! `{"kind": "ts" | "energy" | "hb" | "irova" | "ets", "k": K, ...}` with all
//! floats written at 17 significant digits.

mod energy;
mod ensemble;
mod histogram;
mod isotonic;
mod temperature;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use energy::{
    fit_energy_calibrator, fit_energy_calibrator_report, grid_value, EnergyCalibratorParams,
    EnergyFit, EnergyObjective, GRID_POINTS, NM_MAX_ITER, NM_TOL, THETA_MAX,
};
pub use ensemble::{
    ensemble_nll, fit_ensemble_ts, true_class_probabilities, weight_grid, EnsembleTsParams,
};
pub use histogram::{fit_histogram_binning, HistogramBinningParams};
pub use isotonic::{fit_isotonic_ova, IsotonicMap, IsotonicOvAParams};
pub use temperature::{fit_temperature, mean_nll, TemperatureParams, T_MAX, T_MIN};

use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::format::to_json_string;
use crate::gaussian::GaussianPdf;
use crate::metrics::DEFAULT_BINS;
use crate::scores::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CalibratorKind {
    Ts,
    Energy,
    Hb,
    Irova,
    Ets,
}

impl CalibratorKind {
    pub const ALL: [CalibratorKind; 5] = [Self::Ts, Self::Energy, Self::Hb, Self::Irova, Self::Ets];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ts => "ts",
            Self::Energy => "energy",
            Self::Hb => "hb",
            Self::Irova => "irova",
            Self::Ets => "ets",
        }
    }
}

impl FromStr for CalibratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::arg(format!(
                    "unknown calibrator {s:?} (expected ts, energy, hb, irova or ets)"
                ))
            })
    }
}

impl fmt::Display for CalibratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fitted calibrator of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum Calibrator {
    Temperature(TemperatureParams),
    Energy(EnergyCalibratorParams),
    HistogramBinning(HistogramBinningParams),
    IsotonicOva(IsotonicOvAParams),
    EnsembleTs(EnsembleTsParams),
}

impl Calibrator {
    /// Fits a calibrator of the given family. `ood` is required for the
    /// energy method, which first fits plain temperature scaling on `val`.
    pub fn fit(
        kind: CalibratorKind,
        val: &LogitDataset,
        ood: Option<&LogitDataset>,
    ) -> Result<Self> {
        Ok(match kind {
            CalibratorKind::Ts => Self::Temperature(fit_temperature(val)?),
            CalibratorKind::Energy => {
                let ood = ood.ok_or_else(|| Error::arg("the energy method needs OOD data"))?;
                let ts = fit_temperature(val)?;
                Self::Energy(fit_energy_calibrator(val, ood, &ts)?)
            }
            CalibratorKind::Hb => Self::HistogramBinning(fit_histogram_binning(val, DEFAULT_BINS)?),
            CalibratorKind::Irova => Self::IsotonicOva(fit_isotonic_ova(val)?),
            CalibratorKind::Ets => Self::EnsembleTs(fit_ensemble_ts(val)?),
        })
    }

    pub fn kind(&self) -> CalibratorKind {
        match self {
            Self::Temperature(_) => CalibratorKind::Ts,
            Self::Energy(_) => CalibratorKind::Energy,
            Self::HistogramBinning(_) => CalibratorKind::Hb,
            Self::IsotonicOva(_) => CalibratorKind::Irova,
            Self::EnsembleTs(_) => CalibratorKind::Ets,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Temperature(p) => p.k(),
            Self::Energy(p) => p.k,
            Self::HistogramBinning(p) => p.k,
            Self::IsotonicOva(p) => p.k(),
            Self::EnsembleTs(p) => p.k,
        }
    }

    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        if z.len() != self.k() {
            return Err(Error::arg(format!(
                "calibrator expects {} logits, got {}",
                self.k(),
                z.len()
            )));
        }
        match self {
            Self::Temperature(p) => p.predict(z),
            Self::Energy(p) => p.predict(z),
            Self::HistogramBinning(p) => p.predict(z),
            Self::IsotonicOva(p) => p.predict(z),
            Self::EnsembleTs(p) => p.predict(z),
        }
    }

    /// Row-wise application; output order matches `ds`.
    pub fn apply(&self, ds: &LogitDataset) -> Result<Vec<Prediction>> {
        if ds.k() != self.k() {
            return Err(Error::arg(format!(
                "calibrator has {} classes but data has {}",
                self.k(),
                ds.k()
            )));
        }
        (0..ds.n())
            .into_par_iter()
            .map(|i| self.predict(ds.row(i)))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(to_json_string(&ParamsDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ParamsDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MapDoc {
    x: Vec<f64>,
    y: Vec<f64>,
}

/// Wire format of a parameter file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ParamsDoc {
    Ts {
        k: usize,
        t: f64,
    },
    Energy {
        k: usize,
        t_ts: f64,
        theta1: f64,
        theta2: f64,
        mu_correct: f64,
        sigma_correct: f64,
        mu_incorrect: f64,
        sigma_incorrect: f64,
        t_min: f64,
    },
    Hb {
        k: usize,
        edges: Vec<f64>,
        values: Vec<f64>,
    },
    Irova {
        k: usize,
        maps: Vec<MapDoc>,
    },
    Ets {
        k: usize,
        t: f64,
        w: [f64; 3],
    },
}

impl From<&Calibrator> for ParamsDoc {
    fn from(c: &Calibrator) -> Self {
        match c {
            Calibrator::Temperature(p) => Self::Ts { k: p.k(), t: p.t() },
            Calibrator::Energy(p) => Self::Energy {
                k: p.k,
                t_ts: p.t_ts,
                theta1: p.theta1,
                theta2: p.theta2,
                mu_correct: p.p_correct.mu(),
                sigma_correct: p.p_correct.sigma(),
                mu_incorrect: p.p_incorrect.mu(),
                sigma_incorrect: p.p_incorrect.sigma(),
                t_min: p.t_min,
            },
            Calibrator::HistogramBinning(p) => Self::Hb {
                k: p.k,
                edges: p.edges.clone(),
                values: p.values.clone(),
            },
            Calibrator::IsotonicOva(p) => Self::Irova {
                k: p.k(),
                maps: p
                    .maps
                    .iter()
                    .map(|m| MapDoc {
                        x: m.breakpoints.clone(),
                        y: m.values.clone(),
                    })
                    .collect(),
            },
            Calibrator::EnsembleTs(p) => Self::Ets {
                k: p.k,
                t: p.t,
                w: p.w,
            },
        }
    }
}

impl TryFrom<ParamsDoc> for Calibrator {
    type Error = Error;

    fn try_from(doc: ParamsDoc) -> Result<Self> {
        Ok(match doc {
            ParamsDoc::Ts { k, t } => Self::Temperature(TemperatureParams::new(t, k)?),
            ParamsDoc::Energy {
                k,
                t_ts,
                theta1,
                theta2,
                mu_correct,
                sigma_correct,
                mu_incorrect,
                sigma_incorrect,
                t_min,
            } => {
                let params = EnergyCalibratorParams {
                    t_ts,
                    theta1,
                    theta2,
                    p_correct: GaussianPdf::new(mu_correct, sigma_correct)?,
                    p_incorrect: GaussianPdf::new(mu_incorrect, sigma_incorrect)?,
                    k,
                    t_min,
                };
                params.validate()?;
                Self::Energy(params)
            }
            ParamsDoc::Hb { k, edges, values } => {
                Self::HistogramBinning(HistogramBinningParams::new(edges, values, k)?)
            }
            ParamsDoc::Irova { k, maps } => {
                if maps.len() != k || k < 2 {
                    return Err(Error::arg(format!(
                        "irova document declares k = {k} but holds {} maps",
                        maps.len()
                    )));
                }
                let maps = maps
                    .into_iter()
                    .map(|m| IsotonicMap::new(m.x, m.y))
                    .collect::<Result<_>>()?;
                Self::IsotonicOva(IsotonicOvAParams { maps })
            }
            ParamsDoc::Ets { k, t, w } => Self::EnsembleTs(EnsembleTsParams::new(t, w, k)?),
        })
    }
}
