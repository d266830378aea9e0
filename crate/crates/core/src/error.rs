use std::path::PathBuf;

/// Errors produced across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("expected raw (unnormalized) Lab input")]
    AlreadyNormalized,
    #[error("expected normalized Lab input")]
    NotNormalized,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("spatial size {size} is not divisible by {divisor}")]
    Indivisible { size: usize, divisor: usize },
    #[error("backbone asset error: {0}")]
    Backbone(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("requested output dimension {out_dim} exceeds input dimension {in_dim}")]
    OutDimTooLarge { out_dim: usize, in_dim: usize },
    #[error("degenerate (zero) descriptor for image {0}")]
    DegenerateDescriptor(String),
    #[error("empty cluster list")]
    NoClusters,
    #[error("scores must lie strictly inside (0, 1), got {0}")]
    ScoreRange(f64),
    #[error("non-finite loss: {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not a probability vector (sum {0})")]
    NotProbability(f64),
    #[error("empty dataset directory {0}")]
    EmptyDataset(PathBuf),
    #[error("image {0} is not available in this split")]
    UnknownImage(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
