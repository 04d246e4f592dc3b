//! Error type for training runs.

/// Anything that can go wrong while planning or running a training job.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    /// The training plan itself is inconsistent (bad learning rate, zero
    /// token budget, ...).
    #[error("invalid training plan: {0}")]
    BadPlan(String),

    /// A corpus that must contain at least one example is empty.
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),

    /// A single example exceeds the batch token budget, so no batching of
    /// the corpus can satisfy the budget.
    #[error("example {index} costs {cost} tokens, above the batch budget of {budget}")]
    OverBudget {
        index: usize,
        cost: usize,
        budget: usize,
    },

    /// The finetuning corpus was numberized against a different vocabulary
    /// than the base checkpoint. Token ids would silently mean different
    /// words, so this is refused unless explicitly overridden.
    #[error("vocabulary mismatch for role {role:?}: finetuning data was built against a different vocabulary than the base checkpoint")]
    VocabMismatch { role: String },

    /// Model-level failure (bad config, malformed example, ...).
    #[error(transparent)]
    Model(#[from] seq2seq::ModelError),

    /// Numeric failure outside the model graph (optimizer rejected a
    /// gradient, ...).
    #[error(transparent)]
    Numeric(#[from] numkit::NumError),
}

pub type Result<T> = std::result::Result<T, TrainError>;
