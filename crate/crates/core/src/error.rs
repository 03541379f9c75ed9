use thiserror::Error;

use crate::asymptotics::ConditionReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("undefined input: {0}")]
    UndefinedInput(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("undefined denominator: {0}")]
    UndefinedDenominator(&'static str),

    #[error("degenerate level: {0}")]
    DegenerateLevel(String),

    #[error("out of range: {0}")]
    OutOfRange(String),

    /// No interior crossing exists (or a nested root failed). The report is
    /// attached when one was computed.
    #[error("criticality violated: {message}")]
    Criticality {
        message: String,
        report: Option<Box<ConditionReport>>,
    },

    #[error("ambiguous crossing: {0}")]
    Ambiguity(String),

    #[error("oracle inconclusive: {0}")]
    OracleInconclusive(String),

    #[error("model is not simulable: {0}")]
    NotSimulable(String),

    #[error("C.13 monotonicity premise fails: {0}")]
    Premise(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn criticality(message: impl Into<String>) -> Self {
        Error::Criticality {
            message: message.into(),
            report: None,
        }
    }

    /// True for errors that signal a mathematical precondition failure rather
    /// than bad input.
    pub fn is_precondition_failure(&self) -> bool {
        matches!(
            self,
            Error::Criticality { .. }
                | Error::Ambiguity(_)
                | Error::DegenerateLevel(_)
                | Error::OracleInconclusive(_)
                | Error::Premise(_)
        )
    }
}
