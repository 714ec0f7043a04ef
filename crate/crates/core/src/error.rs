use thiserror::Error;

use crate::dgp::DslError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("unit {unit} at time {time}: rule needs {window} past values of `{var}`, found {available}")]
    InsufficientHistory {
        unit: String,
        time: i32,
        var: String,
        window: usize,
        available: usize,
    },

    #[error(transparent)]
    Dsl(#[from] DslError),

    #[error("learner `{learner}` failed: {reason}")]
    LearnerFailure { learner: String, reason: String },

    #[error("no admissible predictors for {0}")]
    NoAdmissiblePredictors(String),

    #[error("nothing to screen: every feature is constant")]
    NothingToScreen,

    #[error("all learners failed")]
    AllLearnersFailed,

    #[error("no adherent units under regime `{0}`")]
    NoAdherentUnits(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown node or variable `{0}`")]
    UnknownNode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn learner(learner: &str, reason: impl Into<String>) -> Self {
        Error::LearnerFailure {
            learner: learner.to_string(),
            reason: reason.into(),
        }
    }
}
