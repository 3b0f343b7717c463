use thiserror::Error;

/// Errors produced by environments, policies, and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("not enough samples: {0}")]
    InsufficientSamples(String),

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
