use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("stale tape: backward was already run; rebuild the graph before differentiating again")]
    StaleTape,

    #[error("direction not normalized (|d| = {norm})")]
    NotNormalized { norm: f64 },

    #[error("backfacing shading point: view direction is below the surface horizon")]
    Backfacing,

    #[error("inter-reflection residual requires a surface hit; the traced ray missed")]
    TraceMiss,

    #[error("hemisphere sample count {0} is too small (minimum 4)")]
    TooFewSamples(usize),

    #[error("singular extrinsic matrix: rotation is not orthonormal")]
    SingularExtrinsics,

    #[error("unknown scene '{name}'; valid scenes are: {valid}")]
    UnknownScene { name: String, valid: String },

    #[error("non-finite loss at step {step}: first offending term is {term}")]
    NonFiniteLoss { term: &'static str, step: u64 },

    #[error("camera index {index} out of range ({count} cameras)")]
    CameraIndex { index: usize, count: usize },

    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error("config: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
