//! Ensemble temperature scaling: a convex mix of the tempered softmax, the
//! raw softmax and the uniform distribution.

use super::temperature::{fit_temperature, TemperatureParams};
use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::scores::{softmax_into, Prediction};

/// Grid resolution for the mixture weights (step 0.01).
const STEPS: usize = 100;
/// Improvements smaller than this are treated as ties.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleTsParams {
    pub t: f64,
    pub w: [f64; 3],
    pub k: usize,
}

impl EnsembleTsParams {
    pub fn new(t: f64, w: [f64; 3], k: usize) -> Result<Self> {
        TemperatureParams::new(t, k)?;
        if w.iter().any(|&v| !(0.0..=1.0).contains(&v))
            || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::arg(format!(
                "ensemble weights {w:?} are not on the simplex"
            )));
        }
        if w[0] + w[1] == 0.0 {
            return Err(Error::arg("ensemble weights need a non-uniform component"));
        }
        Ok(Self { t, w, k })
    }

    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        if z.len() != self.k {
            return Err(Error::arg(format!(
                "expected {} logits, got {}",
                self.k,
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("logit vector contains a non-finite value"));
        }
        let mut tempered = vec![0.0; self.k];
        let mut raw = vec![0.0; self.k];
        softmax_into(z, self.t, &mut tempered);
        softmax_into(z, 1.0, &mut raw);
        let uniform = 1.0 / self.k as f64;
        let probabilities = tempered
            .iter()
            .zip(&raw)
            .map(|(a, b)| self.w[0] * a + self.w[1] * b + self.w[2] * uniform)
            .collect();
        Ok(Prediction::from_probabilities(probabilities))
    }
}

/// All weight triples on the 0.01 simplex grid except the pure-uniform corner,
/// ordered from `(1, 0, 0)` by decreasing `w1` then increasing `w2`.
pub fn weight_grid() -> impl Iterator<Item = [f64; 3]> {
    (0..=STEPS).rev().flat_map(|i| {
        (0..=STEPS - i).filter(move |&j| i + j > 0).map(move |j| {
            let s = STEPS as f64;
            [i as f64 / s, j as f64 / s, (STEPS - i - j) as f64 / s]
        })
    })
}

/// Mean NLL of the mixture at the true classes.
pub fn ensemble_nll(tempered_true: &[f64], raw_true: &[f64], k: usize, w: [f64; 3]) -> f64 {
    let uniform = 1.0 / k as f64;
    let total: f64 = tempered_true
        .iter()
        .zip(raw_true)
        .map(|(a, b)| -(w[0] * a + w[1] * b + w[2] * uniform).ln())
        .sum();
    total / tempered_true.len() as f64
}

/// True-class probabilities under `softmax(z / t)` and `softmax(z)`.
pub fn true_class_probabilities(
    val: &LogitDataset,
    classes: &[usize],
    t: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut buf = vec![0.0; val.k()];
    let mut tempered = Vec::with_capacity(val.n());
    let mut raw = Vec::with_capacity(val.n());
    for (z, &y) in val.rows().zip(classes) {
        softmax_into(z, t, &mut buf);
        tempered.push(buf[y]);
        softmax_into(z, 1.0, &mut buf);
        raw.push(buf[y]);
    }
    (tempered, raw)
}

pub fn fit_ensemble_ts(val: &LogitDataset) -> Result<EnsembleTsParams> {
    let classes = val.classes()?;
    let t = fit_temperature(val)?.t();
    let (tempered, raw) = true_class_probabilities(val, &classes, t);
    let mut best = ([1.0, 0.0, 0.0], f64::INFINITY);
    for w in weight_grid() {
        let nll = ensemble_nll(&tempered, &raw, val.k(), w);
        if nll < best.1 - TIE_TOL {
            best = (w, nll);
        }
    }
    EnsembleTsParams::new(t, best.0, val.k())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::predict;
    use crate::synthetic::{generate, ShiftScenario, SplitMix64};

    #[test]
    fn grid_shape() {
        let grid: Vec<[f64; 3]> = weight_grid().collect();
        assert_eq!(grid.len(), 101 * 102 / 2 - 1);
        assert_eq!(grid[0], [1.0, 0.0, 0.0]);
        assert!(grid
            .iter()
            .all(|w| (w.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn uniform_logits_pick_first_grid_point() {
        let ds = LogitDataset::new(vec![0.0; 12], vec![0, 1, 2, 1], 3).unwrap();
        let p = fit_ensemble_ts(&ds).unwrap();
        assert_eq!(p.t, 1.0);
        assert_eq!(p.w, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn fitted_weights_beat_grid() {
        let ds = generate(&ShiftScenario {
            n: 400,
            severity: 3,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let p = fit_ensemble_ts(&ds).unwrap();
        let classes = ds.classes().unwrap();
        let (a, b) = true_class_probabilities(&ds, &classes, p.t);
        let best = ensemble_nll(&a, &b, ds.k(), p.w);
        for w in weight_grid() {
            assert!(best <= ensemble_nll(&a, &b, ds.k(), w) + 1e-12);
        }
    }

    #[test]
    fn calibrated_data_reproduces_softmax() {
        // labels sampled from softmax(z), so the raw softmax is already calibrated
        let base = generate(&ShiftScenario {
            n: 4000,
            margin: 2.0,
            noise: 1.0,
            overconfidence: 1.0,
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let mut rng = SplitMix64::new(99);
        let labels = base
            .rows()
            .map(|z| {
                let p = predict(z, 1.0).unwrap().probabilities;
                let u = rng.next_open01();
                let mut acc = 0.0;
                p.iter()
                    .position(|&v| {
                        acc += v;
                        u < acc
                    })
                    .unwrap_or(p.len() - 1) as i64
            })
            .collect();
        let ds = LogitDataset::new(base.logits().to_vec(), labels, base.k()).unwrap();
        let p = fit_ensemble_ts(&ds).unwrap();
        assert!((p.t - 1.0).abs() < 0.1, "t = {}", p.t);
        assert!(p.w[2] <= 0.05, "{:?}", p.w);
        for z in ds.rows().take(200) {
            let a = p.predict(z).unwrap();
            let b = predict(z, 1.0).unwrap();
            for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
                assert!((x - y).abs() < 0.02);
            }
        }
    }

    #[test]
    fn preserves_argmax() {
        let ds = generate(&ShiftScenario {
            n: 500,
            severity: 4,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let p = fit_ensemble_ts(&ds).unwrap();
        for z in ds.rows() {
            assert_eq!(
                p.predict(z).unwrap().predicted_label,
                predict(z, 1.0).unwrap().predicted_label
            );
        }
    }

    #[test]
    fn rejects_uniform_only_weights() {
        assert!(EnsembleTsParams::new(1.0, [0.0, 0.0, 1.0], 3).is_err());
        assert!(EnsembleTsParams::new(1.0, [0.5, 0.6, 0.0], 3).is_err());
    }
}
