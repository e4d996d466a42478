use thiserror::Error;

/// Errors raised by the library.
///
/// Infeasibility of a matching problem is not an error; see
/// [`crate::matcher::MatchOutcome`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("insufficient data for {context}: need {required} samples, have {available}")]
    InsufficientData {
        context: &'static str,
        required: usize,
        available: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {context} at channel {channel}, step {step}")]
    NonFinite {
        context: &'static str,
        channel: usize,
        step: usize,
    },

    #[error("value outside the domain of {map}: {detail}")]
    Domain { map: String, detail: String },

    #[error("missing exogenous sample: channel {channel}, step {step}")]
    MissingExogenous { channel: usize, step: isize },

    #[error("negative level in tank {tank} at step {step}: {level}")]
    NegativeLevel {
        tank: usize,
        step: usize,
        level: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
