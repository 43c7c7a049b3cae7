//! Python bindings. The extension module is importable as `energy_calib`.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use energy_calib::bench::{parse_methods, run_bench, BenchConfig};
use energy_calib::calibrators::{Calibrator, CalibratorKind};
use energy_calib::metrics::{self, BinStats, OodScores, Positive};
use energy_calib::report::{summarize, summarize_ood};
use energy_calib::synthetic::{self, ShiftKind, ShiftScenario};
use energy_calib::{scores, Error, LogitDataset};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for energy_calib::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Labeled logit matrix. Label -1 marks an unlabeled (OOD) row.
#[pyclass(name = "LogitDataset", module = "energy_calib", frozen)]
struct PyLogitDataset {
    inner: LogitDataset,
}

#[pymethods]
impl PyLogitDataset {
    #[new]
    fn new(logits: Vec<Vec<f64>>, labels: Vec<i64>) -> PyResult<Self> {
        LogitDataset::from_rows(&logits, labels)
            .py()
            .map(|inner| Self { inner })
    }

    #[staticmethod]
    fn load_csv(path: &str) -> PyResult<Self> {
        LogitDataset::load_csv(path)
            .py()
            .map(|inner| Self { inner })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        LogitDataset::from_csv_str(text)
            .py()
            .map(|inner| Self { inner })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path).py()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn logits(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn labels(&self) -> Vec<i64> {
        self.inner.labels().to_vec()
    }

    fn split(&self, fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = self.inner.split(fraction, seed).py()?;
        Ok((Self { inner: a }, Self { inner: b }))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("LogitDataset(n={}, k={})", self.inner.n(), self.inner.k())
    }
}

#[pyclass(name = "Prediction", module = "energy_calib", frozen, get_all)]
struct PyPrediction {
    predicted_label: usize,
    confidence: f64,
    probabilities: Vec<f64>,
}

impl From<scores::Prediction> for PyPrediction {
    fn from(p: scores::Prediction) -> Self {
        Self {
            predicted_label: p.predicted_label,
            confidence: p.confidence,
            probabilities: p.probabilities,
        }
    }
}

#[pymethods]
impl PyPrediction {
    fn __repr__(&self) -> String {
        format!(
            "Prediction(label={}, confidence={})",
            self.predicted_label, self.confidence
        )
    }
}

/// A fitted calibrator of any family: "ts", "energy", "hb", "irova" or "ets".
#[pyclass(name = "Calibrator", module = "energy_calib", frozen)]
struct PyCalibrator {
    inner: Calibrator,
}

#[pymethods]
impl PyCalibrator {
    #[staticmethod]
    #[pyo3(signature = (kind, val, ood = None))]
    fn fit(kind: &str, val: &PyLogitDataset, ood: Option<&PyLogitDataset>) -> PyResult<Self> {
        let kind: CalibratorKind = kind.parse().py()?;
        Calibrator::fit(kind, &val.inner, ood.map(|d| &d.inner))
            .py()
            .map(|inner| Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Calibrator::from_json(text).py().map(|inner| Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Calibrator::load(path).py().map(|inner| Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn predict(&self, z: Vec<f64>) -> PyResult<PyPrediction> {
        self.inner.predict(&z).py().map(Into::into)
    }

    fn apply(&self, py: Python<'_>, data: &PyLogitDataset) -> PyResult<Vec<PyPrediction>> {
        let preds = py.detach(|| self.inner.apply(&data.inner)).py()?;
        Ok(preds.into_iter().map(Into::into).collect())
    }

    /// Per-input temperature; only defined for the energy family.
    fn temperature(&self, z: Vec<f64>) -> PyResult<f64> {
        match &self.inner {
            Calibrator::Energy(p) => p.temperature(&z).py(),
            Calibrator::Temperature(p) => Ok(p.t()),
            _ => Err(PyValueError::new_err(format!(
                "{} has no temperature",
                self.inner.kind()
            ))),
        }
    }

    /// Calibration metrics on `data`, plus OOD metrics when `ood` is given.
    #[pyo3(signature = (data, ood = None, bins = metrics::DEFAULT_BINS))]
    fn evaluate(
        &self,
        py: Python<'_>,
        data: &PyLogitDataset,
        ood: Option<&PyLogitDataset>,
        bins: usize,
    ) -> PyResult<Vec<(String, f64)>> {
        py.detach(|| {
            let preds = self.inner.apply(&data.inner)?;
            let s = summarize(&preds, &data.inner, bins)?;
            let mut out = vec![
                ("n".to_string(), s.n as f64),
                ("accuracy".to_string(), s.accuracy),
                ("mean_confidence".to_string(), s.mean_confidence),
                ("ece".to_string(), s.ece),
                ("mce".to_string(), s.mce),
                ("sce".to_string(), s.sce),
            ];
            if let Some(ood) = ood {
                let o = summarize_ood(&preds, &self.inner.apply(&ood.inner)?)?;
                out.extend([
                    ("mean_ood_confidence".to_string(), o.mean_out_confidence),
                    ("auroc".to_string(), o.auroc),
                    ("aupr_in".to_string(), o.aupr_in),
                    ("aupr_out".to_string(), o.aupr_out),
                ]);
            }
            Ok(out)
        })
        .py()
    }

    fn __repr__(&self) -> String {
        format!(
            "Calibrator(kind={}, k={})",
            self.inner.kind(),
            self.inner.k()
        )
    }
}

/// Free energy `-logsumexp(z)`.
#[pyfunction]
fn energy(z: Vec<f64>) -> PyResult<f64> {
    scores::energy(&z).py().map(|e| e.value())
}

#[pyfunction]
#[pyo3(signature = (z, t = 1.0))]
fn softmax(z: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
    scores::tempered_softmax(&z, t).py()
}

#[pyfunction]
fn nll_identity_residual(z: Vec<f64>, y: usize) -> PyResult<f64> {
    scores::nll_identity_residual(&z, y).py()
}

fn bins_from(confidences: &[f64], correct: &[bool], bins: usize) -> PyResult<BinStats> {
    if confidences.len() != correct.len() {
        return Err(PyValueError::new_err(
            "confidences and correct differ in length",
        ));
    }
    BinStats::from_pairs(
        confidences.iter().copied().zip(correct.iter().copied()),
        bins,
    )
    .py()
}

#[pyfunction]
#[pyo3(signature = (confidences, correct, bins = metrics::DEFAULT_BINS))]
fn ece(confidences: Vec<f64>, correct: Vec<bool>, bins: usize) -> PyResult<f64> {
    metrics::ece(&bins_from(&confidences, &correct, bins)?, confidences.len()).py()
}

#[pyfunction]
#[pyo3(signature = (confidences, correct, bins = metrics::DEFAULT_BINS))]
fn mce(confidences: Vec<f64>, correct: Vec<bool>, bins: usize) -> PyResult<f64> {
    metrics::mce(&bins_from(&confidences, &correct, bins)?).py()
}

#[pyfunction]
#[pyo3(signature = (probabilities, labels, bins = metrics::DEFAULT_BINS))]
fn sce(probabilities: Vec<Vec<f64>>, labels: Vec<usize>, bins: usize) -> PyResult<f64> {
    metrics::sce(&probabilities, &labels, bins).py()
}

#[pyfunction]
fn auroc(in_scores: Vec<f64>, out_scores: Vec<f64>) -> PyResult<f64> {
    metrics::auroc(&OodScores::new(in_scores, out_scores).py()?).py()
}

#[pyfunction]
#[pyo3(signature = (in_scores, out_scores, positive = "in"))]
fn aupr(in_scores: Vec<f64>, out_scores: Vec<f64>, positive: &str) -> PyResult<f64> {
    let positive = match positive {
        "in" => Positive::In,
        "out" => Positive::Out,
        other => {
            return Err(PyValueError::new_err(format!(
                "positive must be 'in' or 'out', got {other:?}"
            )))
        }
    };
    metrics::aupr(&OodScores::new(in_scores, out_scores).py()?, positive).py()
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (k = 10, n = 5000, margin = 4.0, noise = 1.0, overconfidence = 3.0, severity = 0, kind = "id", seed = 0))]
fn generate(
    k: usize,
    n: usize,
    margin: f64,
    noise: f64,
    overconfidence: f64,
    severity: u32,
    kind: &str,
    seed: u64,
) -> PyResult<PyLogitDataset> {
    let kind: ShiftKind = kind.parse().py()?;
    let sc = ShiftScenario {
        k,
        n,
        margin,
        noise,
        overconfidence,
        severity,
        kind,
        seed,
    };
    synthetic::generate(&sc)
        .py()
        .map(|inner| PyLogitDataset { inner })
}

/// Runs the severity benchmark and returns its `method,metric,value` CSV.
#[pyfunction]
#[pyo3(name = "bench", signature = (k = 10, n = 5000, seeds = 5, methods = "none,ts,energy"))]
fn run_severity_bench(
    py: Python<'_>,
    k: usize,
    n: usize,
    seeds: usize,
    methods: &str,
) -> PyResult<String> {
    let cfg = BenchConfig::new(k, n, seeds, parse_methods(methods).py()?);
    py.detach(|| run_bench(&cfg))
        .py()
        .map(|r| r.to_csv_string())
}

#[pymodule(name = "energy_calib")]
fn energy_calib_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLogitDataset>()?;
    m.add_class::<PyPrediction>()?;
    m.add_class::<PyCalibrator>()?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(nll_identity_residual, m)?)?;
    m.add_function(wrap_pyfunction!(ece, m)?)?;
    m.add_function(wrap_pyfunction!(mce, m)?)?;
    m.add_function(wrap_pyfunction!(sce, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(aupr, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_severity_bench, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
