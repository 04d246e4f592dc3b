//! Command implementations and supporting plumbing for the `halluc` binary.
//!
//! Everything the binary does lives here so integration tests can drive the
//! same code paths in-process. Commands take a flat key=value [`RunConfig`]
//! (from a file, command-line overrides, or both), reject unknown keys, and
//! write their primary output atomically together with a `.manifest` sidecar
//! that records the tool version, the effective configuration, and a content
//! hash of every input file.

pub mod channel;
pub mod commands;
pub mod config;
pub mod manifest;
pub mod prepared;

mod error;

pub use channel::{synth_corpus, Channel};
pub use commands::{
    cmd_augment, cmd_decode, cmd_evaluate, cmd_finetune, cmd_preprocess, cmd_synthcorpus,
    cmd_train,
};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use manifest::{write_atomic, write_manifest};
pub use prepared::{
    encode_examples, read_prepared, source_tokens, write_prepared, PreparedUtterance,
};
