//! Error type for decoding.

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    /// Inconsistent search parameters (zero beam, K larger than the beam,
    /// zero length bound, ...).
    #[error("invalid decoding parameters: {0}")]
    BadParams(String),

    /// The underlying model refused a step.
    #[error(transparent)]
    Model(#[from] seq2seq::ModelError),

    /// A malformed N-best file.
    #[error("n-best file, line {line}: {detail}")]
    BadFile { line: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, DecodeError>;
