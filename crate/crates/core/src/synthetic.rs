//! Deterministic synthetic logit datasets with controllable distribution shift.
//!
//! In-distribution and covariate-shifted rows are
//! `c * (margin * onehot(y) + eps)` with `eps ~ N(0, s^2)` per coordinate and
//! `s = noise * (1 + 0.5 * severity)`. Semantic-shift rows drop the one-hot
//! term and carry label `-1`.

use std::fmt;
use std::str::FromStr;

use crate::dataset::{LogitDataset, UNLABELED};
use crate::error::{Error, Result};

/// SplitMix64 generator with Box–Muller normals.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
    spare_normal: Option<f64>,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self {
            state: seed,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on the open interval (0, 1).
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_open01();
        let u2 = self.next_open01();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * phi.sin());
        r * phi.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftKind {
    Id,
    Covariate,
    Semantic,
}

impl FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "id" => Ok(Self::Id),
            "covariate" => Ok(Self::Covariate),
            "semantic" => Ok(Self::Semantic),
            other => Err(Error::arg(format!(
                "unknown shift kind {other:?} (expected id, covariate or semantic)"
            ))),
        }
    }
}

impl fmt::Display for ShiftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Id => "id",
            Self::Covariate => "covariate",
            Self::Semantic => "semantic",
        })
    }
}

pub const MAX_SEVERITY: u32 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftScenario {
    pub k: usize,
    pub n: usize,
    /// Boost added to the true-class logit before scaling.
    pub margin: f64,
    /// Per-logit noise standard deviation at severity 0.
    pub noise: f64,
    /// Global logit multiplier.
    pub overconfidence: f64,
    pub severity: u32,
    pub kind: ShiftKind,
    pub seed: u64,
}

impl Default for ShiftScenario {
    fn default() -> Self {
        Self {
            k: 10,
            n: 5000,
            margin: 4.0,
            noise: 1.0,
            overconfidence: 3.0,
            severity: 0,
            kind: ShiftKind::Id,
            seed: 0,
        }
    }
}

impl ShiftScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::arg("scenario needs at least one row"));
        }
        if self.k < 2 {
            return Err(Error::arg(format!("scenario needs k >= 2, got {}", self.k)));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::arg(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::arg(format!(
                "noise must be non-negative, got {}",
                self.noise
            )));
        }
        if !(self.overconfidence >= 1.0 && self.overconfidence.is_finite()) {
            return Err(Error::arg(format!(
                "overconfidence must be >= 1, got {}",
                self.overconfidence
            )));
        }
        if self.severity > MAX_SEVERITY {
            return Err(Error::arg(format!(
                "severity must be in 0..={MAX_SEVERITY}, got {}",
                self.severity
            )));
        }
        Ok(())
    }

    /// Noise standard deviation after applying severity.
    pub fn effective_noise(&self) -> f64 {
        self.noise * (1.0 + 0.5 * f64::from(self.severity))
    }

    pub fn with_kind(&self, kind: ShiftKind) -> Self {
        Self {
            kind,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

pub fn generate(sc: &ShiftScenario) -> Result<LogitDataset> {
    sc.validate()?;
    let mut rng = SplitMix64::new(sc.seed);
    let sigma = sc.effective_noise();
    let mut logits = Vec::with_capacity(sc.n * sc.k);
    let mut labels = Vec::with_capacity(sc.n);
    for _ in 0..sc.n {
        let label = match sc.kind {
            ShiftKind::Semantic => None,
            ShiftKind::Id | ShiftKind::Covariate => Some(rng.below(sc.k)),
        };
        for j in 0..sc.k {
            let boost = if label == Some(j) { sc.margin } else { 0.0 };
            logits.push(sc.overconfidence * (boost + sigma * rng.next_normal()));
        }
        labels.push(label.map_or(UNLABELED, |y| y as i64));
    }
    LogitDataset::new(logits, labels, sc.k)
}

/// Covariate-shifted datasets for severities 0 through 5, seeded `seed + severity`.
pub fn severity_suite(base: &ShiftScenario) -> Result<Vec<LogitDataset>> {
    (0..=MAX_SEVERITY)
        .map(|severity| {
            generate(&ShiftScenario {
                severity,
                kind: ShiftKind::Covariate,
                seed: base.seed.wrapping_add(u64::from(severity)),
                ..base.clone()
            })
        })
        .collect()
}
