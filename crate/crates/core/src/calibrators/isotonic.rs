//! One-vs-all isotonic regression on per-class softmax probabilities.

use crate::dataset::LogitDataset;
use crate::error::{Error, Result};
use crate::scores::{softmax, Prediction};

/// Nondecreasing step function: `values[i]` applies from `breakpoints[i]`
/// up to the next breakpoint. Queries below the first breakpoint clamp to the
/// first value.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicMap {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl IsotonicMap {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::arg(
                "isotonic map needs matching, nonempty breakpoints and values",
            ));
        }
        if breakpoints
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::arg(
                "isotonic breakpoints must be strictly increasing",
            ));
        }
        if values.windows(2).any(|w| w[0] > w[1]) || values.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::arg(
                "isotonic values must be nondecreasing in [0, 1]",
            ));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    /// Pool-adjacent-violators fit of `targets` against `xs`.
    pub fn fit(xs: &[f64], targets: &[f64]) -> Result<Self> {
        if xs.is_empty() || xs.len() != targets.len() {
            return Err(Error::arg("isotonic fit needs matching, nonempty inputs"));
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));

        // blocks of (start x, sum of targets, weight); equal x values start pooled
        let mut blocks: Vec<(f64, f64, f64)> = Vec::new();
        for i in order {
            match blocks.last_mut() {
                Some(last) if last.0 == xs[i] => {
                    last.1 += targets[i];
                    last.2 += 1.0;
                }
                _ => blocks.push((xs[i], targets[i], 1.0)),
            }
            while blocks.len() > 1 {
                let (_, s1, w1) = blocks[blocks.len() - 1];
                let (_, s0, w0) = blocks[blocks.len() - 2];
                if s0 / w0 <= s1 / w1 {
                    break;
                }
                blocks.pop();
                let prev = blocks.last_mut().expect("at least one block");
                prev.1 += s1;
                prev.2 += w1;
            }
        }
        let breakpoints = blocks.iter().map(|b| b.0).collect();
        let values = blocks.iter().map(|b| (b.1 / b.2).clamp(0.0, 1.0)).collect();
        Self::new(breakpoints, values)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= x);
        self.values[idx.saturating_sub(1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicOvAParams {
    pub maps: Vec<IsotonicMap>,
}

impl IsotonicOvAParams {
    pub fn k(&self) -> usize {
        self.maps.len()
    }

    /// Maps each class probability through its isotonic fit, then renormalizes
    /// (uniform when every mapped value is zero).
    pub fn predict(&self, z: &[f64]) -> Result<Prediction> {
        if z.len() != self.k() {
            return Err(Error::arg(format!(
                "expected {} logits, got {}",
                self.k(),
                z.len()
            )));
        }
        let p = softmax(z)?;
        let mapped: Vec<f64> = p.iter().zip(&self.maps).map(|(&v, m)| m.eval(v)).collect();
        let total: f64 = mapped.iter().sum();
        let probabilities = if total > 0.0 {
            mapped.iter().map(|v| v / total).collect()
        } else {
            vec![1.0 / self.k() as f64; self.k()]
        };
        Ok(Prediction::from_probabilities(probabilities))
    }
}

pub fn fit_isotonic_ova(val: &LogitDataset) -> Result<IsotonicOvAParams> {
    let classes = val.classes()?;
    let probs: Vec<Vec<f64>> = val.rows().map(softmax).collect::<Result<_>>()?;
    let maps = (0..val.k())
        .map(|c| {
            let xs: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let ys: Vec<f64> = classes
                .iter()
                .map(|&y| f64::from(u8::from(y == c)))
                .collect();
            IsotonicMap::fit(&xs, &ys)
        })
        .collect::<Result<_>>()?;
    Ok(IsotonicOvAParams { maps })
}
