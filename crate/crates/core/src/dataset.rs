//! Logit/label datasets and their CSV encoding.
//!
//! A file starts with the header `label,z0,z1,...,z{K-1}` followed by one row
//! per sample. Label `-1` marks a row with no in-distribution class (semantic
//! OOD). Logits are written with 17 significant digits so every `f64`
//! survives a save/load cycle unchanged.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::format_real;
use crate::synthetic::SplitMix64;

/// Label value used for rows that belong to no in-distribution class.
pub const UNLABELED: i64 = -1;

/// An N×K matrix of logits with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitDataset {
    logits: Vec<f64>,
    labels: Vec<i64>,
    k: usize,
}

impl LogitDataset {
    /// Builds a dataset from a row-major logit buffer of length `labels.len() * k`.
    pub fn new(logits: Vec<f64>, labels: Vec<i64>, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::arg(format!(
                "class count must be at least 2, got {k}"
            )));
        }
        if labels.is_empty() {
            return Err(Error::arg("empty dataset"));
        }
        if logits.len() != labels.len() * k {
            return Err(Error::arg(format!(
                "expected {} logits for {} rows of {k} classes, got {}",
                labels.len() * k,
                labels.len(),
                logits.len()
            )));
        }
        if let Some(pos) = logits.iter().position(|z| !z.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite logit at row {}, column z{}",
                pos / k,
                pos % k
            )));
        }
        if let Some(pos) = labels
            .iter()
            .position(|&y| y != UNLABELED && (y < 0 || y >= k as i64))
        {
            return Err(Error::arg(format!(
                "label {} at row {pos} outside {{-1, 0..{}}}",
                labels[pos],
                k - 1
            )));
        }
        Ok(Self { logits, labels, k })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<i64>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::arg(format!(
                "row {i} has {} logits, expected {k}",
                rows[i].len()
            )));
        }
        if rows.len() != labels.len() {
            return Err(Error::arg(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        Self::new(rows.concat(), labels, k)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.logits[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.logits.chunks_exact(self.k)
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// Class index of row `i`, or `None` for an unlabeled row.
    pub fn class(&self, i: usize) -> Option<usize> {
        usize::try_from(self.labels[i]).ok()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labels.iter().all(|&y| y >= 0)
    }

    /// Class indices of every row, failing if any row is unlabeled.
    pub fn classes(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                usize::try_from(y)
                    .map_err(|_| Error::arg(format!("row {i} has no class label (-1)")))
            })
            .collect()
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut logits = Vec::with_capacity(indices.len() * self.k);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(Error::arg(format!("row index {i} out of range")));
            }
            logits.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(logits, labels, self.k)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.k != other.k {
            return Err(Error::arg(format!(
                "class count mismatch: {} vs {}",
                self.k, other.k
            )));
        }
        let mut logits = self.logits.clone();
        logits.extend_from_slice(&other.logits);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::new(logits, labels, self.k)
    }

    /// Same logits with every label replaced by `-1`.
    pub fn unlabeled(&self) -> Self {
        Self {
            logits: self.logits.clone(),
            labels: vec![UNLABELED; self.n()],
            k: self.k,
        }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.n() * (self.k * 24 + 4));
        out.push_str("label");
        for j in 0..self.k {
            let _ = write!(out, ",z{j}");
        }
        out.push('\n');
        for (row, y) in self.rows().zip(&self.labels) {
            let _ = write!(out, "{y}");
            for &z in row {
                out.push(',');
                out.push_str(&format_real(z));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("missing header".into()))?;
        let k = parse_header(header)?;

        let mut logits = Vec::new();
        let mut labels = Vec::new();
        let mut row_no = 0;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            row_no += 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != k + 1 {
                return Err(Error::Parse {
                    row: row_no,
                    column: "*".into(),
                    message: format!("expected {} fields, found {}", k + 1, fields.len()),
                });
            }
            let y: i64 = fields[0].trim().parse().map_err(|_| Error::Parse {
                row: row_no,
                column: "label".into(),
                message: format!("invalid label {:?}", fields[0]),
            })?;
            if y != UNLABELED && !(0..k as i64).contains(&y) {
                return Err(Error::Parse {
                    row: row_no,
                    column: "label".into(),
                    message: format!("label {y} outside {{-1, 0..{}}}", k - 1),
                });
            }
            labels.push(y);
            for (j, field) in fields[1..].iter().enumerate() {
                let z = field
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|z| z.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: row_no,
                        column: format!("z{j}"),
                        message: format!("invalid logit {field:?}"),
                    })?;
                logits.push(z);
            }
        }
        if labels.is_empty() {
            return Err(Error::Format("empty dataset".into()));
        }
        Self::new(logits, labels, k)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Seeded shuffled split into a first part of `round(fraction * N)` rows
    /// and a second part holding the rest.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::arg(format!(
                "split fraction {fraction} outside (0, 1)"
            )));
        }
        let n = self.n();
        let first = (fraction * n as f64).round() as usize;
        if first == 0 || first == n {
            return Err(Error::arg(format!(
                "fraction {fraction} of {n} rows leaves an empty part"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed).shuffle(&mut order);
        Ok((self.select(&order[..first])?, self.select(&order[first..])?))
    }
}

fn parse_header(header: &str) -> Result<usize> {
    let tokens: Vec<&str> = header.split(',').collect();
    if tokens[0].trim() != "label" {
        return Err(Error::Format(format!(
            "header must start with `label`, found {:?}",
            tokens[0]
        )));
    }
    for (j, tok) in tokens[1..].iter().enumerate() {
        if tok.trim() != format!("z{j}") {
            return Err(Error::Format(format!(
                "unexpected header token {tok:?}, expected `z{j}`"
            )));
        }
    }
    let k = tokens.len() - 1;
    if k < 2 {
        return Err(Error::Format(format!(
            "header declares {k} classes, need at least 2"
        )));
    }
    Ok(k)
}
