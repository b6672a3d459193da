use thiserror::Error;

use crate::io::ValidationReport;
use crate::stats::StatsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },

    #[error("line {line}: invalid {field}: {message}")]
    InvalidRecord {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("invalid model id {0:?}")]
    ModelId(String),

    #[error("image {0:?} has ground truth but no original-model output")]
    MissingOriginalOutput(String),

    #[error("no records for the original model")]
    MissingOriginal,

    #[error("inconsistent runs: {0}")]
    InconsistentRuns(String),

    #[error("record set failed validation with {} defect(s)", .0.defects.len())]
    RunSet(Box<ValidationReport>),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Stats(#[from] StatsError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            message: message.into(),
        }
    }

    /// True for failures caused by malformed or inconsistent input data.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Invalid { .. }
                | Error::InvalidRecord { .. }
                | Error::ModelId(_)
                | Error::MissingOriginalOutput(_)
                | Error::MissingOriginal
                | Error::InconsistentRuns(_)
                | Error::RunSet(_)
                | Error::Config(_)
        )
    }
}
