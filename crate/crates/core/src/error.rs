use thiserror::Error;

/// Errors raised by the forecasting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing quarter {missing} (gap in series)")]
    Gap { missing: String },

    #[error("timestamp {timestamp} is not aligned to the 15-minute grid")]
    Alignment { timestamp: String },

    #[error("duplicate timestamp {timestamp}")]
    DuplicateTimestamp { timestamp: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("quarter {quarter} outside the covered span {span}")]
    Range { quarter: String, span: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Cholesky factorization failed after jitter reached {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("dataset does not cover the schedule: {0}")]
    Coverage(String),

    #[error("invalid synthetic spec: {0}")]
    Spec(String),

    #[error("look-ahead violation: {0}")]
    LookAhead(String),

    #[error("empty input")]
    EmptyInput,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse grouping used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Model,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) => ErrorClass::Usage,
            Error::Cholesky { .. } | Error::LookAhead(_) | Error::InsufficientData(_) => {
                ErrorClass::Model
            }
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
