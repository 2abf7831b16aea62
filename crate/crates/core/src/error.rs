use crate::data::Group;
use thiserror::Error;

/// Coarse classification used by callers that need to map failures to
/// process exit codes: malformed input data versus numerical breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("line {line}, column `{column}`: {msg}")]
    BadField {
        line: u64,
        column: String,
        msg: String,
    },

    #[error("line {line}: observational row is missing the long-term outcome")]
    MissingLongTermOutcome { line: u64 },

    #[error("unknown subgroup label `{0}`")]
    UnknownLabel(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("cell (group={group}, treated={treated}) is empty")]
    EmptyCell { group: Group, treated: bool },

    #[error("long-term outcome is not observed for the experimental group")]
    ExperimentalOutcomeUnavailable,

    #[error("control regression is ill-posed: {0}")]
    IllPosedRegression(String),

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("bootstrap aborted: {failed} of {total} replicates failed")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("simulation aborted: {failed} of {total} replications failed validation")]
    ReplicationFailures { failed: usize, total: usize },

    #[error("target not attainable: {0}")]
    TargetNotAttainable(String),

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_)
            | Error::Csv { .. }
            | Error::MissingColumn(_)
            | Error::BadField { .. }
            | Error::MissingLongTermOutcome { .. }
            | Error::UnknownLabel(_)
            | Error::Validation(_)
            | Error::EmptyCell { .. }
            | Error::ExperimentalOutcomeUnavailable
            | Error::BadConfig(_)
            | Error::Json(_) => ErrorKind::Data,
            Error::IllPosedRegression(_)
            | Error::Degenerate(_)
            | Error::BootstrapFailures { .. }
            | Error::ReplicationFailures { .. }
            | Error::TargetNotAttainable(_) => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
