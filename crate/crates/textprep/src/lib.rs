//! Text preparation for parallel clean/recognized corpora.
//!
//! The pipeline is deliberately boring and fully deterministic: lowercase and
//! strip punctuation, drop bracketed annotation tokens, derive phoneme
//! sequences from a pronunciation lexicon with a table-driven fallback for
//! out-of-vocabulary words, build frequency-ordered vocabularies, and filter
//! out degenerate examples (empty word or phoneme side) with a report of how
//! much was removed.

pub mod corpus;
pub mod g2p;
pub mod lexicon;
pub mod tokenize;
pub mod vocab;

mod error;

pub use corpus::{
    filter_pairs, prepare_pairs, read_corpus, render_line, write_corpus, FilterReport,
    RawUtterance, UtterancePair,
};
pub use error::{Result, TextError};
pub use g2p::{G2p, TableG2p};
pub use lexicon::{phonemize, phonemize_lenient, Lexicon};
pub use tokenize::{tokenize, tokenize_transcript};
pub use vocab::Vocab;
