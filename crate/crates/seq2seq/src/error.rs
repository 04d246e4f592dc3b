//! Error type for model construction, forward passes, and checkpoints.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),

    #[error("{kind} sequence of length {len} exceeds the maximum of {max}")]
    Overlong {
        kind: &'static str,
        len: usize,
        max: usize,
    },

    #[error("{kind} token index {index} out of range for vocabulary of {vocab}")]
    IndexOutOfRange {
        kind: &'static str,
        index: u32,
        vocab: usize,
    },

    #[error("target sequence is empty")]
    EmptyTarget,

    #[error("{0} sequence is empty")]
    EmptySequence(&'static str),

    #[error("decoder prefix must start with BOS")]
    BadDecodePrefix,

    #[error("model is dual-encoder but no phoneme sequence was provided")]
    MissingPhones,

    #[error("numeric failure: {0}")]
    Numeric(#[from] numkit::NumError),

    #[error("checkpoint {}: {detail}", path.display())]
    BadCheckpoint { path: PathBuf, detail: String },

    #[error("failed to access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;
