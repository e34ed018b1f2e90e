use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch on {axis} axis (expected {expected}, got {got})")]
    AxisMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar (1,1,1,1) loss, got {0}")]
    NonScalarLoss(Shape),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("variable belongs to a different tape")]
    ForeignVariable,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint: unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("checkpoint: parameter `{name}` has shape {found}, model expects {expected}")]
    ParamShape {
        name: String,
        expected: Shape,
        found: Shape,
    },
    #[error("checkpoint: parameter `{0}` missing")]
    MissingParam(String),
    #[error("checkpoint: unexpected parameter `{0}`")]
    UnexpectedParam(String),
    #[error("checkpoint: malformed payload: {0}")]
    MalformedCheckpoint(String),
    #[error("ppm: malformed header: {0}")]
    PpmHeader(String),
    #[error("ppm: truncated payload (expected {expected} bytes, got {got})")]
    PpmTruncated { expected: usize, got: usize },
    #[error("non-finite loss at step {step}; first non-finite gradient in `{param}`")]
    NonFiniteLoss { step: usize, param: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
