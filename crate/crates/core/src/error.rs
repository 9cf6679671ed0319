use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum PnlError {
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("invalid shift: {0}")]
    InvalidShift(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid ellipticity: {0}")]
    InvalidEllipticity(String),
    #[error("model evaluation error: {0}")]
    ModelEvaluation(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("step failure at step {step}: {reason}")]
    StepFailure { step: usize, reason: String },
    #[error("unsupported boundary: {0}")]
    UnsupportedBoundary(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stability bound violated: {0}")]
    Stability(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PnlError>;
