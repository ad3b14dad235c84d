use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs} vs {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{op} produced a non-finite value at index {index:?}")]
    NonFinite { op: &'static str, index: [usize; 4] },

    #[error("backward needs a scalar (1,1,1,1) loss, got {0}")]
    NonScalarLoss(Shape),

    #[error("second-order differentiation is not supported through {0}")]
    SecondOrderUnsupported(&'static str),

    #[error("missing gradient for trainable parameter `{0}`")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("cannot grow: already at final scale x{0}")]
    GrowPastFinal(u32),

    #[error("level {level} is not active (active levels: {active})")]
    InactiveLevel { level: u32, active: u32 },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{}: {msg}", path.display())]
    Path { path: PathBuf, msg: String },

    #[error("non-finite value: {0}")]
    Numerical(String),

    #[error("training diverged at iteration {iteration}: {source}")]
    Diverged {
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("file truncated")]
    Truncated,
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("stage mismatch: checkpoint holds {found}, expected {expected}")]
    StageMismatch { expected: String, found: String },
    #[error("architecture digest does not match the requested configuration")]
    DigestMismatch,
    #[error("malformed record: {0}")]
    Malformed(String),
}

impl Error {
    pub fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub fn path(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Path {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::GrowPastFinal(_) | Error::InactiveLevel { .. } => {
                ErrorKind::Config
            }
            Error::Checkpoint(CheckpointError::StageMismatch { .. })
            | Error::Checkpoint(CheckpointError::DigestMismatch) => ErrorKind::Config,
            Error::Checkpoint(_) | Error::Data(_) | Error::Path { .. } | Error::Io(_) => {
                ErrorKind::Data
            }
            Error::NonFinite { .. } | Error::Numerical(_) | Error::Diverged { .. } => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Internal,
        }
    }
}
