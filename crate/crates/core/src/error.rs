use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty attention column {0}")]
    EmptyAttentionColumn(usize),

    #[error("unused parameter #{0}")]
    UnusedParameter(usize),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid quantile level {0}; expected a value in (0, 1)")]
    InvalidTau(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quantile regression did not converge after {iterations} iterations (objective {objective})")]
    NoConvergence {
        iterations: usize,
        objective: f64,
        alpha: f64,
        gamma: Vec<f64>,
    },

    #[error("every hyperparameter grid cell diverged")]
    AllCellsFailed,

    #[error("no articles")]
    NoArticles,

    #[error("non-monotone dates at line {line}")]
    NonMonotoneDates { line: usize },

    #[error("unparseable cell at row {row}, column {column}: {value:?}")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("bad format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("truncated record at byte offset {offset}")]
    Truncated { offset: u64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("manifest mismatch: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
