use thiserror::Error;

/// Errors raised by the active-learning engine and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed dataset: {0}")]
    Malformed(String),

    #[error("dimension mismatch: expected {expected}, got {actual}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: Option<String>,
    },

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("split violation: {0}")]
    SplitViolation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unknown sample `{0}`")]
    UnknownSample(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            expected,
            actual,
            context: None,
        }
    }

    /// True for errors caused by bad input data rather than a failed run.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Malformed(_)
                | Error::DimensionMismatch { .. }
                | Error::UnknownConcept(_)
                | Error::SplitViolation(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::UnknownSample(_)
        )
    }
}
