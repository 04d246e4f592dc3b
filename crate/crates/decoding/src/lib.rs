//! N-best hypothesis generation: beam search and sampled decoding over
//! any step decoder, plus the N-best file format.
//!
//! Both strategies run against the [`StepDecoder`] trait, so the search
//! logic is tested against enumerable toy decoders independently of the
//! trained model, which participates through [`ModelDecoder`]. Beam
//! search is deterministic; sampled decoding is deterministic given its
//! RNG. Returned sequences never contain PAD or BOS, and every sequence
//! is terminated — by EOS or by the length bound.

pub mod beam;
mod error;
pub mod nbest;
pub mod sample;
pub mod step;

pub use beam::{beam_search, default_max_len};
pub use error::{DecodeError, Result};
pub use nbest::{read_nbest, render_nbest, write_nbest, NBestEntry, NBestList, ScoredSeq};
pub use sample::{sample_decode, sample_sequence, SampleStats};
pub use step::{ModelDecoder, StepDecoder};
