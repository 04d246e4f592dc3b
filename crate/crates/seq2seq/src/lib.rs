//! Convolutional sequence-to-sequence models that map clean text to errorful
//! recognizer-style output.
//!
//! Two architectures share one parameter/forward layer:
//!
//! * **single** — a word encoder (residual `same`-padded conv stack over
//!   token+position embeddings) and a causal conv decoder with per-layer
//!   dot-product attention.
//! * **dual** — adds a phoneme encoder; each decoder layer attends to both
//!   encoders with a shared query projection and fuses the two contexts with
//!   a linear map. Training can randomly silence one encoder per example
//!   (encoder dropout) so neither side becomes a crutch.
//!
//! Attention follows the query-key-value shape: keys are encoder hidden
//! states, values are hidden states plus input embeddings, and the query for
//! decoder position i adds the previous target embedding g_{i−1}. Everything
//! runs on the [`numkit`] tape, in `f32` for real work and `f64` for
//! gradient checks; [`infer`] adds an incremental decoder that avoids
//! re-running the whole prefix every step.

pub mod checkpoint;
pub mod config;
pub mod forward;
pub mod infer;
pub mod params;

mod error;

pub use checkpoint::{Checkpoint, OptimState, VocabRef};
pub use config::{ConvSpec, Mode, ModelConfig};
pub use error::{ModelError, Result};
pub use forward::{
    decode_step, draw_branch, example_loss, example_loss_with_branch, mean_loss, register_params,
    EncBranch, EncodedExample, ParamNodes, SourceTokens, BOS, EOS, PAD,
};
pub use infer::{encode_source, DecoderSession, DecoderState, EncodedSource};
pub use params::ModelParams;
