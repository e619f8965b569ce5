use thiserror::Error;

/// Errors produced while building, fitting or serializing models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("curves live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("cannot extrapolate to t = {t} outside [{min}, {max}]")]
    Extrapolation { t: f64, min: f64, max: f64 },

    #[error("component index {index} out of range ({available} available)")]
    IndexOutOfRange { index: usize, available: usize },

    #[error("weight {index} is not a positive finite number: {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("component {component} is degenerate (zero eigenvalue or zero score variance)")]
    DegenerateComponent { component: usize },

    #[error("weighted normal equations of order {order} are numerically singular (condition {condition:e})")]
    Singular { order: usize, condition: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("every cross-validation cell failed")]
    AllCellsFailed,

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
