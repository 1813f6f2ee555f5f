use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("value {value} outside the domain of {op}")]
    Domain { op: &'static str, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range for {bits}-bit codes")]
    IndexRange { index: u32, bits: u32 },

    #[error("bit stream: {0}")]
    BitStream(String),

    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }
}
