use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate canonical frame: defining joints are collinear")]
    DegenerateFrame,

    #[error("alignment undefined: {0}")]
    AlignmentUndefined(String),

    #[error("backward called without a cached forward pass")]
    MissingForward,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("pose is not in the canonical view (frame deviation {0:.3e})")]
    NotCanonical(f64),

    #[error("overlapping splits: {0}")]
    OverlappingSplits(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the error stems from bad input data (as opposed to numerics).
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Topology(_)
                | Error::Shape(_)
                | Error::Parse { .. }
                | Error::Checkpoint(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::OverlappingSplits(_)
                | Error::InvalidArgument(_)
        )
    }
}
