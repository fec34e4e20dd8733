use std::path::PathBuf;

use thiserror::Error;

/// Which numerical pass produced a non-finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Forward,
    Backward,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Forward => f.write_str("forward"),
            Stage::Backward => f.write_str("backward"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("{path}:{line}: {reason}")]
    ConfigSyntax {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("non-finite value in {stage} pass at step {step}")]
    NonFinite { stage: Stage, step: usize },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error(
        "budget cap {cap} unreachable: budget still {budget} at multiplier {lambda} after {doublings} doublings"
    )]
    InfeasibleBudget {
        cap: f64,
        budget: f64,
        lambda: f64,
        doublings: usize,
    },

    #[error(
        "budget not monotone in multiplier: g({lambda_lo}) = {budget_lo} < g({lambda_hi}) = {budget_hi}"
    )]
    NonMonotoneBudget {
        lambda_lo: f64,
        budget_lo: f64,
        lambda_hi: f64,
        budget_hi: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to serialize run summary: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status associated with this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::ConfigSyntax { .. } | Error::Shape { .. } => 2,
            Error::InfeasibleBudget { .. } | Error::NonMonotoneBudget { .. } => 4,
            Error::NonFinite { .. } => 5,
            Error::Io { .. } | Error::Json(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
