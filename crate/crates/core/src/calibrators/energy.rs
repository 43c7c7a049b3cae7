//! Energy-based instance-wise temperature scaling.
//!
//! Each input gets its own temperature
//!
//! ```text
//! T(z) = max(t_min, t_ts - P_correct(F(z)) * theta1 + P_incorrect(F(z)) * theta2)
//! ```
//!
//! where `F(z) = -logsumexp(z)` is the free energy and `P_correct`,
//! `P_incorrect` are Gaussian densities fitted to the energies of correctly
//! and incorrectly classified validation rows (semantic-OOD rows always
//! count as incorrect). `theta` minimizes the mean squared error between the
//! calibrated probabilities and the targets: one-hot labels for
//! in-distribution rows and the uniform vector for OOD rows.

use rayon::prelude::*;

use super::temperature::{TemperatureParams, T_MIN};
use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::gaussian::GaussianPdf;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::scores::{argmax, energy, log_sum_exp_unchecked, predict, softmax_into, Prediction};

pub const THETA_MAX: f64 = 10.0;
pub const GRID_POINTS: usize = 41;
pub const NM_MAX_ITER: usize = 200;
pub const NM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCalibratorParams {
    pub t_ts: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub p_correct: GaussianPdf,
    pub p_incorrect: GaussianPdf,
    pub k: usize,
    pub t_min: f64,
}

impl EnergyCalibratorParams {
    pub fn new(
        t_ts: &TemperatureParams,
        theta: (f64, f64),
        p_correct: GaussianPdf,
        p_incorrect: GaussianPdf,
    ) -> Result<Self> {
        let params = Self {
            t_ts: t_ts.t(),
            theta1: theta.0,
            theta2: theta.1,
            p_correct,
            p_incorrect,
            k: t_ts.k(),
            t_min: T_MIN,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        TemperatureParams::new(self.t_ts, self.k)?;
        for (name, th) in [("theta1", self.theta1), ("theta2", self.theta2)] {
            if !(0.0..=THETA_MAX).contains(&th) {
                return Err(Error::arg(format!(
                    "{name} = {th} outside [0, {THETA_MAX}]"
                )));
            }
        }
        if !(self.t_min > 0.0 && self.t_min.is_finite()) {
            return Err(Error::arg(format!(
                "t_min must be positive, got {}",
                self.t_min
            )));
        }
        Ok(())
    }

    /// Per-input temperature for a row with free energy `f`.
    pub fn temperature_at_energy(&self, f: f64) -> f64 {
        temperature(
            self.t_ts,
            self.t_min,
            self.p_correct.density(f),
            self.p_incorrect.density(f),
            self.theta1,
            self.theta2,
        )
    }

    pub fn temperature(&self, z: &[f64]) -> Result<f64> {
        self.check_k(z)?;
        Ok(self.temperature_at_energy(energy(z)?.value()))
    }

    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        predict(z, self.temperature(z)?)
    }

    fn check_k(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.k {
            return Err(Error::arg(format!(
                "expected {} logits, got {}",
                self.k,
                z.len()
            )));
        }
        Ok(())
    }
}

fn temperature(t_ts: f64, t_min: f64, lambda1: f64, lambda2: f64, theta1: f64, theta2: f64) -> f64 {
    (t_ts - lambda1 * theta1 + lambda2 * theta2).max(t_min)
}

/// Mean squared error objective over the pooled fitting rows, with densities
/// evaluated once up front.
#[derive(Debug, Clone)]
pub struct EnergyObjective {
    logits: Vec<f64>,
    k: usize,
    /// `None` marks an OOD row whose target is uniform.
    targets: Vec<Option<usize>>,
    lambda1: Vec<f64>,
    lambda2: Vec<f64>,
    t_ts: f64,
    t_min: f64,
}

impl EnergyObjective {
    pub fn new(
        data: &LogitDataset,
        p_correct: &GaussianPdf,
        p_incorrect: &GaussianPdf,
        t_ts: f64,
        t_min: f64,
    ) -> Self {
        let energies: Vec<f64> = data.rows().map(|z| -log_sum_exp_unchecked(z)).collect();
        Self {
            logits: data.logits().to_vec(),
            k: data.k(),
            targets: (0..data.n()).map(|i| data.class(i)).collect(),
            lambda1: energies.iter().map(|&f| p_correct.density(f)).collect(),
            lambda2: energies.iter().map(|&f| p_incorrect.density(f)).collect(),
            t_ts,
            t_min,
        }
    }

    pub fn loss(&self, theta1: f64, theta2: f64) -> f64 {
        let k = self.k;
        let uniform = 1.0 / k as f64;
        let mut probs = vec![0.0; k];
        let mut total = 0.0;
        for (i, z) in self.logits.chunks_exact(k).enumerate() {
            let t = temperature(
                self.t_ts,
                self.t_min,
                self.lambda1[i],
                self.lambda2[i],
                theta1,
                theta2,
            );
            softmax_into(z, t, &mut probs);
            total += match self.targets[i] {
                Some(y) => probs
                    .iter()
                    .enumerate()
                    .map(|(j, &p)| {
                        let target = if j == y { 1.0 } else { 0.0 };
                        (target - p) * (target - p)
                    })
                    .sum::<f64>(),
                None => probs
                    .iter()
                    .map(|&p| (uniform - p) * (uniform - p))
                    .sum::<f64>(),
            };
        }
        total / self.targets.len() as f64
    }
}

/// Values of θ on the search grid, `0, 0.25, ..., 10`.
pub fn grid_value(i: usize) -> f64 {
    THETA_MAX * i as f64 / (GRID_POINTS - 1) as f64
}

/// Fitted parameters together with the objective values needed to audit the fit.
#[derive(Debug, Clone)]
pub struct EnergyFit {
    pub params: EnergyCalibratorParams,
    pub loss: f64,
    pub loss_at_origin: f64,
    pub grid_min_loss: f64,
    pub grid_argmin: (f64, f64),
    pub refine_iterations: usize,
}

pub fn fit_energy_calibrator(
    id_val: &LogitDataset,
    ood: &LogitDataset,
    t_ts: &TemperatureParams,
) -> Result<EnergyCalibratorParams> {
    fit_energy_calibrator_report(id_val, ood, t_ts).map(|fit| fit.params)
}

/// Splits rows into correct/incorrect pools, fits both densities, then
/// minimizes the MSE objective over `[0, 10]^2` by a 41×41 grid followed by
/// Nelder–Mead refinement from the grid argmin.
pub fn fit_energy_calibrator_report(
    id_val: &LogitDataset,
    ood: &LogitDataset,
    t_ts: &TemperatureParams,
) -> Result<EnergyFit> {
    let k = id_val.k();
    if ood.k() != k || t_ts.k() != k {
        return Err(Error::arg(format!(
            "class count mismatch: validation {k}, ood {}, temperature {}",
            ood.k(),
            t_ts.k()
        )));
    }
    let classes = id_val.classes()?;

    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (z, &y) in id_val.rows().zip(&classes) {
        let f = -log_sum_exp_unchecked(z);
        if argmax(z) == y {
            correct.push(f);
        } else {
            incorrect.push(f);
        }
    }
    incorrect.extend(ood.rows().map(|z| -log_sum_exp_unchecked(z)));
    if correct.is_empty() || incorrect.is_empty() {
        return Err(Error::Fit(format!(
            "cannot estimate both densities: {} correct and {} incorrect rows",
            correct.len(),
            incorrect.len()
        )));
    }
    let p_correct = GaussianPdf::fit(&correct)?;
    let p_incorrect = GaussianPdf::fit(&incorrect)?;

    let pooled = id_val.concat(&ood.unlabeled())?;
    let objective = EnergyObjective::new(&pooled, &p_correct, &p_incorrect, t_ts.t(), T_MIN);

    let grid: Vec<f64> = (0..GRID_POINTS * GRID_POINTS)
        .into_par_iter()
        .map(|idx| objective.loss(grid_value(idx / GRID_POINTS), grid_value(idx % GRID_POINTS)))
        .collect();
    let mut best_idx = 0;
    for (idx, &v) in grid.iter().enumerate() {
        if v < grid[best_idx] {
            best_idx = idx;
        }
    }
    let grid_argmin = (
        grid_value(best_idx / GRID_POINTS),
        grid_value(best_idx % GRID_POINTS),
    );
    let grid_min_loss = grid[best_idx];

    let refined = nelder_mead(
        |x| objective.loss(x[0], x[1]),
        &[grid_argmin.0, grid_argmin.1],
        NelderMeadOptions {
            max_iter: NM_MAX_ITER,
            tol: NM_TOL,
            initial_step: grid_value(1),
            lower: 0.0,
            upper: THETA_MAX,
        },
    );
    let (theta, loss) = if refined.value <= grid_min_loss {
        ((refined.x[0], refined.x[1]), refined.value)
    } else {
        (grid_argmin, grid_min_loss)
    };

    Ok(EnergyFit {
        params: EnergyCalibratorParams::new(t_ts, theta, p_correct, p_incorrect)?,
        loss,
        loss_at_origin: grid[0],
        grid_min_loss,
        grid_argmin,
        refine_iterations: refined.iterations,
    })
}
