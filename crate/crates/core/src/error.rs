//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("parameter entry `{name}` incompatible: {reason}")]
    ParamMismatch { name: String, reason: String },

    #[error("non-finite value detected: {0}")]
    NonFinite(String),

    #[error("non-finite loss at batch {batch_index} ({which})")]
    NonFiniteLoss { batch_index: usize, which: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("anatomy seed range exhausted: need {needed}, range holds {available}")]
    SeedRangeExhausted { needed: usize, available: usize },

    #[error("aggregation weights invalid: {0}")]
    InvalidWeights(String),

    #[error("client `{client_id}` failed: {source}")]
    Client {
        client_id: String,
        #[source]
        source: Box<CoreError>,
    },

    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("sample length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(PathBuf),

    #[error("malformed file `{path}`: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("transport protocol error: {0}")]
    Transport(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
