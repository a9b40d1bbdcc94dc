use thiserror::Error;

use crate::objective::ObjectiveId;

/// Errors raised by objective evaluation, optimizer steps and run configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{objective} takes {expected} parameter(s), got {found}")]
    ArityMismatch {
        objective: ObjectiveId,
        expected: usize,
        found: usize,
    },
    #[error("{0} requires a regression sample (x, y)")]
    MissingSample(ObjectiveId),
    #[error("{0} does not take a regression sample")]
    UnexpectedSample(ObjectiveId),
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid sampling spec: {0}")]
    InvalidSampling(String),
}

pub type Result<T> = std::result::Result<T, Error>;
