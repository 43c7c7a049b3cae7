//! Severity benchmark on synthetic data.
//!
//! For each seed index `i` the base seed is `1000 * i`. The severity suite
//! (severities 0..=5) is generated from it; severity 0 is split in half into
//! a validation part and a test part. Two semantic-OOD sets of `n / 10` rows
//! are generated, one for fitting and one held out. Every method is fitted on
//! the validation part (plus the fitting OOD set for the energy method) and
//! scored by ECE on the severity-0 test part and on severities 1..=5, and by
//! mean confidence on the held-out OOD set.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::calibrators::{
    fit_energy_calibrator_report, fit_temperature, Calibrator, CalibratorKind, EnergyFit,
    TemperatureParams,
};
use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::metrics::DEFAULT_BINS;
use crate::report::{mean_confidence, summarize};
use crate::synthetic::{generate, severity_suite, ShiftKind, ShiftScenario, MAX_SEVERITY};

pub const SEVERITIES: usize = MAX_SEVERITY as usize + 1;
const SEED_STRIDE: u64 = 1000;
const VAL_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMethod {
    /// Raw softmax.
    Uncalibrated,
    Fitted(CalibratorKind),
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::Uncalibrated),
            other => other.parse().map(Self::Fitted),
        }
    }
}

impl fmt::Display for BenchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uncalibrated => f.write_str("none"),
            Self::Fitted(kind) => kind.fmt(f),
        }
    }
}

pub fn parse_methods(list: &str) -> Result<Vec<BenchMethod>> {
    let methods: Vec<BenchMethod> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::arg("no methods given"));
    }
    Ok(methods)
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Class count, row count and logit model; severity, kind and seed are ignored.
    pub scenario: ShiftScenario,
    pub seeds: usize,
    pub methods: Vec<BenchMethod>,
}

impl BenchConfig {
    pub fn new(k: usize, n: usize, seeds: usize, methods: Vec<BenchMethod>) -> Self {
        Self {
            scenario: ShiftScenario {
                k,
                n,
                ..ShiftScenario::default()
            },
            seeds,
            methods,
        }
    }
}

/// Results for one method on one seed.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: BenchMethod,
    pub ece: [f64; SEVERITIES],
    pub ood_confidence: f64,
    /// Present for the energy method.
    pub energy_fit: Option<EnergyFit>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub methods: Vec<MethodRun>,
}

/// Seed-averaged results for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: BenchMethod,
    pub ece: [f64; SEVERITIES],
    pub ece_average: f64,
    pub ood_confidence: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub runs: Vec<SeedRun>,
}

impl BenchReport {
    pub fn row(&self, method: BenchMethod) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn energy_fits(&self) -> impl Iterator<Item = &EnergyFit> {
        self.runs
            .iter()
            .flat_map(|r| &r.methods)
            .filter_map(|m| m.energy_fit.as_ref())
    }

    /// Long-format CSV: `method,metric,value`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("method,metric,value\n");
        for row in &self.rows {
            for (s, e) in row.ece.iter().enumerate() {
                out.push_str(&format!("{},ece_severity_{s},{e}\n", row.method));
            }
            out.push_str(&format!("{},ece_average,{}\n", row.method, row.ece_average));
            out.push_str(&format!(
                "{},ood_confidence,{}\n",
                row.method, row.ood_confidence
            ));
        }
        out
    }
}

struct SeedData {
    val: LogitDataset,
    tests: Vec<LogitDataset>,
    ood_fit: LogitDataset,
    ood_test: LogitDataset,
}

fn seed_data(base: &ShiftScenario, seed: u64) -> Result<SeedData> {
    let mut suite = severity_suite(&base.with_seed(seed))?;
    let (val, test0) = suite[0].split(VAL_FRACTION, seed.wrapping_add(100))?;
    suite[0] = test0;
    let semantic = |offset: u64| {
        generate(&ShiftScenario {
            n: (base.n / 10).max(1),
            severity: 0,
            kind: ShiftKind::Semantic,
            seed: seed.wrapping_add(offset),
            ..base.clone()
        })
    };
    Ok(SeedData {
        val,
        tests: suite,
        ood_fit: semantic(200)?,
        ood_test: semantic(300)?,
    })
}

fn run_method(method: BenchMethod, data: &SeedData) -> Result<MethodRun> {
    let k = data.val.k();
    let (calibrator, energy_fit) = match method {
        BenchMethod::Uncalibrated => (
            Calibrator::Temperature(TemperatureParams::identity(k)?),
            None,
        ),
        BenchMethod::Fitted(CalibratorKind::Energy) => {
            let ts = fit_temperature(&data.val)?;
            let fit = fit_energy_calibrator_report(&data.val, &data.ood_fit, &ts)?;
            (Calibrator::Energy(fit.params.clone()), Some(fit))
        }
        BenchMethod::Fitted(kind) => (Calibrator::fit(kind, &data.val, None)?, None),
    };
    let mut ece = [0.0; SEVERITIES];
    for (slot, test) in ece.iter_mut().zip(&data.tests) {
        *slot = summarize(&calibrator.apply(test)?, test, DEFAULT_BINS)?.ece;
    }
    Ok(MethodRun {
        method,
        ece,
        ood_confidence: mean_confidence(&calibrator.apply(&data.ood_test)?),
        energy_fit,
    })
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.seeds == 0 {
        return Err(Error::arg("need at least one seed"));
    }
    if cfg.methods.is_empty() {
        return Err(Error::arg("need at least one method"));
    }
    cfg.scenario.validate()?;
    if cfg.scenario.n < 2 {
        return Err(Error::arg("need at least two rows to split severity 0"));
    }

    let runs: Vec<SeedRun> = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|i| {
            let seed = i * SEED_STRIDE;
            let data = seed_data(&cfg.scenario, seed)?;
            let methods = cfg
                .methods
                .iter()
                .map(|&m| run_method(m, &data))
                .collect::<Result<_>>()?;
            Ok(SeedRun { seed, methods })
        })
        .collect::<Result<_>>()?;

    let n_seeds = runs.len() as f64;
    let rows = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let mut ece = [0.0; SEVERITIES];
            let mut ood = 0.0;
            for run in &runs {
                for (acc, v) in ece.iter_mut().zip(&run.methods[j].ece) {
                    *acc += v;
                }
                ood += run.methods[j].ood_confidence;
            }
            for v in &mut ece {
                *v /= n_seeds;
            }
            BenchRow {
                method,
                ece,
                ece_average: ece.iter().sum::<f64>() / SEVERITIES as f64,
                ood_confidence: ood / n_seeds,
            }
        })
        .collect();
    Ok(BenchReport { rows, runs })
}
