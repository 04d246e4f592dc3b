//! Strict recall metrics for hallucinated ASR output.
//!
//! Given a test set of (clean text, reference transcript) pairs and an
//! N-best hypothesis list per utterance, this crate measures how much of
//! the reference system's error behaviour the hypotheses reproduce:
//!
//! - **Chunk recall**: errors are isolated as alignment chunks
//!   ([`ErrorChunk`]) and a chunk counts only if a hypothesis reproduces
//!   it exactly — same position, same gold words, same replacement.
//! - **Utterance recall**: the fraction of utterances where some
//!   hypothesis matches the reference transcript word for word.
//!
//! Word error rate ([`wer`]) is included for sanity checks.

mod align;
mod error;
mod recall;

pub use align::{edit_distance, extract_error_chunks, wer, ErrorChunk};
pub use error::{EvalError, Result};
pub use recall::{
    chunk_recall_at_k, render_machine, render_table, utterance_recall_at_k, RecallReport,
    TestPair,
};
