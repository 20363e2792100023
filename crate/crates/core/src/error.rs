use thiserror::Error;

/// Errors raised by the witness toolkit.
#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid usage: {0}")]
    Usage(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("generation exhausted for family {family}: {rejects} consecutive rejects")]
    GenerationExhausted { family: String, rejects: usize },

    #[error("gradient evaluation failed for parameter {param}: {reason}")]
    GradientEvaluation { param: String, reason: String },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingFailure { epoch: usize, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, WitnessError>;
