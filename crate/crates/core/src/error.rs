use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("point {index} cannot be placed on the grid: {reason}")]
    OutOfRange { index: usize, reason: String },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),

    #[error("invalid target: {0}")]
    InvalidTarget(String),

    #[error("invalid guidance configuration: {0}")]
    InvalidGuidance(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
