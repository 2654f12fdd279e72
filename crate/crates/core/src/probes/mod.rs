//! Determinism and categorization probes over neural codes.

mod kmeans;
mod knn;
mod logreg;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codes::{build_code_table, NeuralCode};

pub use kmeans::{kmeans_accuracy, KMeansConfig, KMeansModel};
pub use knn::{knn_accuracy, knn_predict, DEFAULT_K};
pub use logreg::{logreg_accuracy, LogRegConfig};

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("code layouts differ between inputs")]
    LayoutMismatch,
    #[error("{codes} codes but {labels} labels")]
    LabelCount { codes: usize, labels: usize },
    #[error("cannot form {k} clusters from {distinct} distinct codes")]
    DegenerateClustering { k: usize, distinct: usize },
    #[error("invalid probe parameter: {0}")]
    Param(String),
    #[error("probe failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedundancyReport {
    pub n: usize,
    pub m: usize,
    pub ratio: f64,
    pub largest_bucket: usize,
}

/// `(n - m) / n` where `n` codes occupy `m` distinct values.
pub fn redundancy(codes: &[NeuralCode]) -> Result<RedundancyReport, ProbeError> {
    if codes.is_empty() {
        return Err(ProbeError::Empty("redundancy needs at least one code"));
    }
    let table = build_code_table(codes);
    let (n, m) = (table.num_examples(), table.num_distinct());
    Ok(RedundancyReport {
        n,
        m,
        ratio: (n - m) as f64 / n as f64,
        largest_bucket: table.largest_bucket(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMethod {
    KMeans,
    Knn,
    LogReg,
}

impl fmt::Display for ProbeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeMethod::KMeans => "kmeans",
            ProbeMethod::Knn => "knn",
            ProbeMethod::LogReg => "logreg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum ProbeParams {
    KMeans {
        k: usize,
        iterations: usize,
        seed: u64,
    },
    Knn {
        k: usize,
    },
    LogReg(LogRegConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub method: ProbeMethod,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub hyperparams: ProbeParams,
}

pub(crate) fn check_inputs(
    codes: &[NeuralCode],
    labels: &[usize],
    what: &'static str,
) -> Result<(), ProbeError> {
    if codes.is_empty() {
        return Err(ProbeError::Empty(what));
    }
    if codes.len() != labels.len() {
        return Err(ProbeError::LabelCount {
            codes: codes.len(),
            labels: labels.len(),
        });
    }
    let layout = codes[0].layout();
    if codes.iter().any(|c| c.layout() != layout) {
        return Err(ProbeError::LayoutMismatch);
    }
    Ok(())
}

pub(crate) fn same_layout(a: &[NeuralCode], b: &[NeuralCode]) -> Result<(), ProbeError> {
    match (a.first(), b.first()) {
        (Some(x), Some(y)) if x.layout() != y.layout() => Err(ProbeError::LayoutMismatch),
        _ => Ok(()),
    }
}

pub(crate) fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}
