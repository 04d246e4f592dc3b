//! Error type for evaluation.

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    /// A test pair has no N-best list to score against.
    #[error("no n-best list for utterance {id:?}")]
    MissingNBest { id: String },

    /// Word error rate against an empty reference is undefined.
    #[error("word error rate is undefined for an empty gold sequence")]
    EmptyGold,

    /// Recall over zero utterances is undefined.
    #[error("test set is empty")]
    EmptyTestSet,

    /// K must be at least 1.
    #[error("recall at k = 0 is undefined")]
    ZeroK,
}

pub type Result<T> = std::result::Result<T, EvalError>;
