//! Shared error type for the library.
//!
//! Every fallible operation returns [`CoreError`]; the CLI maps variants to
//! process exit codes (config/input problems, missing paths, numerical
//! failures).

use thiserror::Error;

/// Errors produced by graph ingestion, training, calibration and planning.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A file failed to parse; `line` is 1-based.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input data violated a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A configuration value is out of its documented range.
    #[error("config error: {0}")]
    Config(String),

    /// Matrix shapes do not conform.
    #[error("dimension error: {op} with shapes {lhs} and {rhs}")]
    Dimension {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    /// Training diverged or produced non-finite values.
    #[error("training error: {0}")]
    Training(String),

    /// An operation was called on a model in the wrong state.
    #[error("model state error: {0}")]
    ModelState(String),

    /// No directed path between the requested endpoints.
    #[error("no path from node {from} to node {to}")]
    NoPath { from: usize, to: usize },

    /// A lookup (edge, weight, cost, interval) had no entry.
    #[error("missing data: {0}")]
    Missing(String),

    /// Calibration produced an unusable (infinite) interval bound.
    #[error("degenerate calibration for {method}: {message}")]
    DegenerateCalibration { method: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
