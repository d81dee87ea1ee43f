use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a precondition (NaN samples, wrong emission width, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Layer or tensor shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A model, lexicon, token or LM file could not be parsed.
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("unknown stream {0}")]
    UnknownStream(u64),

    #[error("stream {0} is closed")]
    ClosedStream(u64),

    #[error("resource limit reached: {0}")]
    ResourceLimit(String),

    /// A benchmark measurement precondition does not hold.
    #[error("measurement refused: {0}")]
    Measurement(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
