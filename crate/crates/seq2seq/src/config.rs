//! Model hyperparameters, presets, and the parameter-count arithmetic.

use crate::error::{ModelError, Result};
use serde::{Deserialize, Serialize};

/// Which architecture the parameters realize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Word encoder only.
    Single,
    /// Word encoder + phoneme encoder with fused attention.
    Dual,
}

/// One residual convolution layer of an encoder ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    /// Output channels of the layer (the gated conv produces 2× internally).
    pub channels: usize,
    /// Kernel width; `same` padding in encoders requires it odd.
    pub kernel: usize,
}

/// Everything needed to size a model. All vocab sizes INCLUDE the four
/// reserved entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub embed_dim: usize,
    pub word_vocab: usize,
    pub target_vocab: usize,
    /// Required iff `mode == Dual`.
    pub phone_vocab: Option<usize>,
    pub max_src_positions: usize,
    pub max_phone_positions: usize,
    pub max_tgt_positions: usize,
    /// Encoder ladder, applied to the word encoder and (dual mode) the
    /// phoneme encoder alike. The last layer's channels must equal
    /// `embed_dim` so attention keys match query dimensionality.
    pub enc_layers: Vec<ConvSpec>,
    pub dec_layers: usize,
    pub dec_kernel: usize,
    /// Conventional dropout rate on every conv layer input and the final
    /// decoder output.
    pub dropout: f64,
    /// Probability that one encoder is silenced for a training example
    /// (dual mode only).
    pub encoder_dropout: f64,
}

/// Word/phone/position sizes of the full-scale configuration. 44k word
/// types and ~60 phoneme symbols are typical for a conversational English
/// setup; the 4 reserved entries ride on top.
pub const FULL_WORD_VOCAB: usize = 44_000 + 4;
pub const FULL_PHONE_VOCAB: usize = 60 + 4;

impl ModelConfig {
    /// Full-scale single-encoder configuration: 256-dim embeddings, four
    /// residual encoder layers, three decoder layers.
    pub fn paper_single() -> Self {
        ModelConfig {
            mode: Mode::Single,
            embed_dim: 256,
            word_vocab: FULL_WORD_VOCAB,
            target_vocab: FULL_WORD_VOCAB,
            phone_vocab: None,
            max_src_positions: 1024,
            max_phone_positions: 1024,
            max_tgt_positions: 1024,
            enc_layers: vec![ConvSpec { channels: 256, kernel: 3 }; 4],
            dec_layers: 3,
            dec_kernel: 3,
            dropout: 0.2,
            encoder_dropout: 0.0,
        }
    }

    /// Full-scale dual-encoder configuration: both encoders run the
    /// 3×(64,k11) + 2×(128,k7) + 1×(256,k5) ladder.
    pub fn paper_dual() -> Self {
        let mut ladder = vec![ConvSpec { channels: 64, kernel: 11 }; 3];
        ladder.extend(vec![ConvSpec { channels: 128, kernel: 7 }; 2]);
        ladder.push(ConvSpec { channels: 256, kernel: 5 });
        ModelConfig {
            mode: Mode::Dual,
            phone_vocab: Some(FULL_PHONE_VOCAB),
            max_phone_positions: 2048,
            enc_layers: ladder,
            encoder_dropout: 0.5,
            ..Self::paper_single()
        }
    }

    /// Small single-encoder model for tests and desk-scale experiments.
    pub fn desk_single(word_vocab: usize, target_vocab: usize) -> Self {
        ModelConfig {
            mode: Mode::Single,
            embed_dim: 64,
            word_vocab,
            target_vocab,
            phone_vocab: None,
            max_src_positions: 128,
            max_phone_positions: 256,
            max_tgt_positions: 128,
            enc_layers: vec![ConvSpec { channels: 64, kernel: 3 }; 2],
            dec_layers: 2,
            dec_kernel: 3,
            dropout: 0.2,
            encoder_dropout: 0.0,
        }
    }

    /// Small dual-encoder model: scaled filter ladder 16/k11, 32/k7, 64/k5.
    pub fn desk_dual(word_vocab: usize, target_vocab: usize, phone_vocab: usize) -> Self {
        ModelConfig {
            mode: Mode::Dual,
            phone_vocab: Some(phone_vocab),
            enc_layers: vec![
                ConvSpec { channels: 16, kernel: 11 },
                ConvSpec { channels: 32, kernel: 7 },
                ConvSpec { channels: 64, kernel: 5 },
            ],
            encoder_dropout: 0.5,
            ..Self::desk_single(word_vocab, target_vocab)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ModelError::BadConfig(msg));
        if self.embed_dim == 0
            || self.word_vocab == 0
            || self.target_vocab == 0
            || self.max_src_positions == 0
            || self.max_tgt_positions == 0
            || self.dec_layers == 0
            || self.dec_kernel == 0
        {
            return bad("all dimensions must be positive".into());
        }
        if self.enc_layers.is_empty() {
            return bad("need at least one encoder layer".into());
        }
        if let Some(l) = self.enc_layers.iter().find(|l| l.channels == 0 || l.kernel == 0) {
            return bad(format!("degenerate encoder layer {l:?}"));
        }
        if let Some(l) = self.enc_layers.iter().find(|l| l.kernel % 2 == 0) {
            return bad(format!(
                "encoder kernels must be odd for `same` padding, got {}",
                l.kernel
            ));
        }
        let last = self.enc_layers.last().unwrap().channels;
        if last != self.embed_dim {
            return bad(format!(
                "encoder ladder must end at embed_dim ({}), ends at {}",
                self.embed_dim, last
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0,1), got {}", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.encoder_dropout) {
            return bad(format!(
                "encoder_dropout must be in [0,1], got {}",
                self.encoder_dropout
            ));
        }
        match self.mode {
            Mode::Dual => {
                if self.phone_vocab.is_none() {
                    return bad("dual mode requires a phoneme vocabulary".into());
                }
                if self.max_phone_positions == 0 {
                    return bad("dual mode requires max_phone_positions > 0".into());
                }
            }
            Mode::Single => {}
        }
        Ok(())
    }

    /// Exact trainable parameter count, by pure arithmetic — no tensors are
    /// allocated, so it is cheap even for full-scale configs.
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let ladder: usize = {
            let mut total = 0;
            let mut cin = d;
            for l in &self.enc_layers {
                total += 2 * l.channels * cin * l.kernel; // gated conv kernels
                total += 2 * l.channels; // conv bias
                if cin != l.channels {
                    total += l.channels * cin; // residual projection
                }
                cin = l.channels;
            }
            total
        };
        let mut n = 0;
        n += self.word_vocab * d + self.max_src_positions * d;
        n += ladder;
        if self.mode == Mode::Dual {
            n += self.phone_vocab.unwrap_or(0) * d + self.max_phone_positions * d;
            n += ladder; // second encoder, same shape
            n += d * 2 * d + d; // context fusion
        }
        n += self.target_vocab * d + self.max_tgt_positions * d;
        n += self.dec_layers * (2 * d * d * self.dec_kernel + 2 * d); // causal convs
        n += self.dec_layers * (d * d + d); // per-layer query projections
        n += self.target_vocab * d + self.target_vocab; // output projection
        n
    }
}
