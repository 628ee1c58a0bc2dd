use thiserror::Error;

/// Errors raised by problem evaluation, shot generation and the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dynamics evaluation failed at stage {stage}: {reason}")]
    DynamicsEval { stage: usize, reason: String },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("shot generation failed: {0}")]
    ShotGen(String),

    #[error("plant integration failed: {0}")]
    Integration(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("every shot failed to produce a feasible QP")]
    AllShotsFailed,
}

pub type Result<T> = std::result::Result<T, Error>;
