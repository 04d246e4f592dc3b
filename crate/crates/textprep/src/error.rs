//! Error type shared across the crate.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum TextError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("word {0:?} produced zero phonemes")]
    ZeroPhonemes(String),

    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,

    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
}

pub type Result<T> = std::result::Result<T, TextError>;
