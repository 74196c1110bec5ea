use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator and learning stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("closed-form state requires drag_coeff == 0 (got {0})")]
    DragNotSupported(f64),

    #[error("unreachable: {0}")]
    Unreachable(String),

    #[error("plane z = {0} m is never crossed")]
    PlaneNotCrossed(f64),

    #[error("object is behind the camera (depth {0} m)")]
    BehindCamera(f64),

    #[error("detections are not time-ordered at index {0}")]
    Unordered(usize),

    #[error("need at least {needed} detections, got {got}")]
    TooFewDetections { needed: usize, got: usize },

    #[error("rank-deficient design: all detection timestamps are equal")]
    RankDeficient,

    #[error("object is not approaching the catch plane (depth slope {0} m/s)")]
    NotApproaching(f64),

    #[error("catch plane already passed (tau* = {tau_star} s < last observation {tau_last} s)")]
    PlanePassed { tau_star: f64, tau_last: f64 },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("non-composable input size: {0}")]
    NonComposable(String),

    #[error("backward called without a cached forward pass (layer {0})")]
    NoForwardCache(usize),

    #[error("non-finite gradient in parameter group {0}")]
    NonFiniteGradient(usize),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("bad magic in weights file")]
    BadMagic,

    #[error("unsupported weights format version {0}")]
    UnsupportedVersion(u32),

    #[error("weights file truncated in layer {layer}")]
    Truncated { layer: usize },

    #[error("weights do not match architecture at layer {layer}: {detail}")]
    ArchitectureMismatch { layer: usize, detail: String },

    #[error("missing weights for {0} pipeline")]
    MissingWeights(&'static str),

    #[error("empty detection buffer")]
    EmptyBuffer,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
