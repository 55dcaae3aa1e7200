use std::io;

use thiserror::Error;

/// Errors surfaced by the simulator, the learning stack, and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint {constraint} violated: {detail}")]
    Constraint { constraint: &'static str, detail: String },

    #[error("out-of-range sub-action: {0}")]
    SubAction(String),

    #[error("enumeration guard exceeded: {0}")]
    Guard(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable class name, used by the CLI for error reporting.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "ConfigError",
            Error::Dimension(_) => "DimensionMismatch",
            Error::Constraint { .. } => "ConstraintViolation",
            Error::SubAction(_) => "SubActionOutOfRange",
            Error::Guard(_) => "GuardExceeded",
            Error::Format(_) | Error::Json(_) => "FormatError",
            Error::Io(_) | Error::Csv(_) => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
