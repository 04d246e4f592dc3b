//! Training loops for the hallucination models.
//!
//! Work is organized as epochs over token-budget batches (see [`batch`]),
//! optimized with Nesterov momentum. After every epoch the model is scored
//! on a validation set; the checkpoint that comes back is the best one by
//! validation loss, not the last one. Runs stop early when validation
//! stalls and roll back to the last clean state when the numbers blow up.
//! Given the same inputs, plan, and seed, a run is bit-for-bit
//! reproducible.

pub mod batch;
mod error;
pub mod fit;

pub use batch::{epoch_order, make_batches, token_cost};
pub use error::{Result, TrainError};
pub use fit::{
    evaluate, finetune, render_log, train, EpochStats, StopReason, TrainOutcome, TrainPlan,
};
