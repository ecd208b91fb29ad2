use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("closure produced a non-finite value at rho={rho}, u={u}")]
    NonFiniteEval { rho: f64, u: f64 },
    #[error("no root of f(u)-u in [{lo}, {hi}]")]
    EmptySigma { lo: f64, hi: f64 },
    #[error("f(u)-u vanishes identically; the fixed-point set is not isolated")]
    DegenerateSigma,
    #[error("contraction fails: {0}")]
    NoContraction(String),
    #[error("fixed-point iteration stalled after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("f(xi)-xi changes sign or vanishes between {from} and {to}")]
    SignChange { from: f64, to: f64 },
    #[error("query at t={t}, x={x} lies outside the stored fields")]
    OutOfCoverage { t: f64, x: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("time step collapsed to {dt:e} at t={t}")]
    CflCollapse { t: f64, dt: f64 },
    #[error("non-finite state in cell {cell} at t={t}")]
    NonFinite { t: f64, cell: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("hypothesis failed: {}", .0.join(", "))]
    HypothesisFailed(Vec<String>),
    #[error("{path}: parse error at line {line}, column {column} ({field}): {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}
