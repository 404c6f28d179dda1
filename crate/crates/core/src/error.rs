use thiserror::Error;

/// Errors produced across the ensemble pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown label {label:?} at line {line}")]
    UnknownLabel { line: usize, label: String },

    #[error("empty context at line {line}")]
    EmptyContext { line: usize },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training data: {0}")]
    TrainingData(String),

    #[error("expert for class {class} ({variant}) is not trained")]
    Untrained { class: usize, variant: String },

    #[error("expert set: {0}")]
    ExpertSet(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("too many features for exact enumeration: {0} (limit 16)")]
    TooManyFeatures(usize),

    #[error("length mismatch: {0} gold labels vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("missing bundle for setting {0}")]
    MissingBundle(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
