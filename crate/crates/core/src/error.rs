use std::fmt;

use thiserror::Error;

/// One failed check of a point against a [`FeatureSpace`](crate::space::FeatureSpace).
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ArityMismatch { expected: usize, found: usize },
    OutOfBounds { feature: String, value: f64, lower: f64, upper: f64 },
    UnknownLevel { feature: String, level: String },
    NotFinite { feature: String },
    KindMismatch { feature: String, expected: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ArityMismatch { expected, found } => {
                write!(f, "arity mismatch: expected {expected} values, found {found}")
            }
            Violation::OutOfBounds { feature, value, lower, upper } => {
                write!(f, "{feature} out of bounds: {value} not in [{lower}, {upper}]")
            }
            Violation::UnknownLevel { feature, level } => {
                write!(f, "unknown level {level} for {feature}")
            }
            Violation::NotFinite { feature } => write!(f, "{feature} is not finite"),
            Violation::KindMismatch { feature, expected } => {
                write!(f, "{feature} expects a {expected} value")
            }
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid point: {}", join(.0))]
    InvalidPoint(Vec<Violation>),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures of the numerics (factorization, degenerate regression).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
