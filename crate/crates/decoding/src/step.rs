//! The decoder interface that search strategies run against.
//!
//! Search code never touches model internals: it sees a [`StepDecoder`],
//! which hands out branchable states and per-step log-probabilities. The
//! real model plugs in through [`ModelDecoder`]; tests plug in toy
//! decoders with hand-built distributions.

use seq2seq::{DecoderSession, DecoderState, BOS, PAD};

use crate::error::Result;

/// One step of left-to-right decoding over a fixed source utterance.
pub trait StepDecoder {
    /// Per-hypothesis state. Cloning must branch the hypothesis: two
    /// clones fed different tokens evolve independently.
    type State: Clone;

    /// Target vocabulary size (the length of every step distribution).
    fn vocab(&self) -> usize;

    /// A state positioned before the first step.
    fn start(&self) -> Self::State;

    /// Advances `state` past `token` (the previously emitted token; the
    /// first call feeds [`BOS`]) and returns log-probabilities over the
    /// next emission. Unemittable tokens — PAD and BOS always — carry
    /// `−∞`; the rest sum to probability one.
    fn step(&self, state: &mut Self::State, token: u32) -> Result<Vec<f64>>;
}

/// The trained model as a [`StepDecoder`]: incremental decoder steps with
/// PAD and BOS masked out and the remaining probabilities renormalized.
pub struct ModelDecoder<'a> {
    session: DecoderSession<'a>,
}

impl<'a> ModelDecoder<'a> {
    pub fn new(session: DecoderSession<'a>) -> Self {
        ModelDecoder { session }
    }
}

impl StepDecoder for ModelDecoder<'_> {
    type State = DecoderState;

    fn vocab(&self) -> usize {
        self.session.target_vocab()
    }

    fn start(&self) -> DecoderState {
        self.session.start()
    }

    fn step(&self, state: &mut DecoderState, token: u32) -> Result<Vec<f64>> {
        let logits = self.session.step(state, token)?;
        let mut xs: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        xs[PAD as usize] = f64::NEG_INFINITY;
        xs[BOS as usize] = f64::NEG_INFINITY;
        Ok(numkit::kernels::log_softmax_f64(&xs))
    }
}
