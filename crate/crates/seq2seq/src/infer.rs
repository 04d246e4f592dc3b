//! Incremental decoding: encode a source once, then emit one step at a time
//! with O(d²) work per step instead of re-running the whole prefix.
//!
//! The causal convolutions only ever look `W−1` positions back, so each
//! decoder layer keeps a sliding window of its last `W−1` input rows; that
//! window plus the per-step attention against the precomputed encoder
//! keys/values reproduces the full forward pass exactly (eval mode, no
//! dropout). [`DecoderState`] is cheap to clone, which is what beam search
//! branches on.

use crate::config::{Mode, ModelConfig};
use crate::error::{ModelError, Result};
use crate::forward::{SourceTokens, BOS};
use crate::params::{Affine, ModelParams};
use numkit::{kernels, Graph, Tensor};

/// Plain-tensor attention inputs for one encoder: keys `[n×d]`, values
/// `[n×d]`.
#[derive(Debug, Clone)]
pub struct EncMats {
    pub keys: Tensor<f32>,
    pub values: Tensor<f32>,
}

/// A source utterance pushed through the encoder(s) once, ready for any
/// number of decode sessions.
#[derive(Debug, Clone)]
pub struct EncodedSource {
    pub words: EncMats,
    /// Present iff the model is dual-encoder.
    pub phones: Option<EncMats>,
}

/// Runs the encoder(s) in eval mode and extracts keys/values as plain
/// tensors.
pub fn encode_source(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    source: &SourceTokens,
) -> Result<EncodedSource> {
    let mut g: Graph<f32> = Graph::new();
    let nodes = crate::forward::register_params(&mut g, params, false)?;
    let mut rng = ForbiddenRng;
    let (enc_w, enc_p) = crate::forward::encode_all(&mut g, &nodes, cfg, source, false, &mut rng)?;
    let mats = |enc: &crate::forward::EncoderRef| EncMats {
        keys: g.value(enc.keys).clone(),
        values: g.value(enc.values).clone(),
    };
    Ok(EncodedSource {
        words: mats(&enc_w),
        phones: enc_p.as_ref().map(mats),
    })
}

/// Immutable per-utterance decode context.
pub struct DecoderSession<'a> {
    params: &'a ModelParams<f32>,
    cfg: &'a ModelConfig,
    src: &'a EncodedSource,
}

/// Mutable per-hypothesis state: one input-row window per decoder layer
/// plus the number of steps taken. Clone to branch a hypothesis.
#[derive(Debug, Clone)]
pub struct DecoderState {
    /// `windows[l]` holds up to `W−1` most recent input rows of layer `l`.
    windows: Vec<Vec<Vec<f32>>>,
    pos: usize,
}

impl<'a> DecoderSession<'a> {
    pub fn new(
        params: &'a ModelParams<f32>,
        cfg: &'a ModelConfig,
        src: &'a EncodedSource,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.mode == Mode::Dual && src.phones.is_none() {
            return Err(ModelError::MissingPhones);
        }
        Ok(DecoderSession { params, cfg, src })
    }

    /// State positioned before the first step; feed [`BOS`] first.
    pub fn start(&self) -> DecoderState {
        DecoderState {
            windows: vec![Vec::new(); self.cfg.dec_layers],
            pos: 0,
        }
    }

    pub fn target_vocab(&self) -> usize {
        self.cfg.target_vocab
    }

    /// Feeds `token` (the first must be BOS) and returns the logits for the
    /// NEXT position, `[target_vocab]`.
    pub fn step(&self, state: &mut DecoderState, token: u32) -> Result<Vec<f32>> {
        let cfg = self.cfg;
        let d = cfg.embed_dim;
        if state.pos == 0 && token != BOS {
            return Err(ModelError::BadDecodePrefix);
        }
        if state.pos >= cfg.max_tgt_positions {
            return Err(ModelError::Overlong {
                kind: "target",
                len: state.pos + 1,
                max: cfg.max_tgt_positions,
            });
        }
        if token as usize >= cfg.target_vocab {
            return Err(ModelError::IndexOutOfRange {
                kind: "target",
                index: token,
                vocab: cfg.target_vocab,
            });
        }

        // g_{i−1}: embedding of the token just fed, plus its position.
        let p = self.params;
        let mut g_prev = vec![0.0f32; d];
        g_prev.copy_from_slice(p.tgt_embed.row(token as usize));
        kernels::add_assign(p.tgt_pos.row(state.pos), &mut g_prev);

        let mut x = g_prev.clone();
        let width = cfg.dec_kernel;
        for (l, (conv, attn)) in p.dec_conv.iter().zip(&p.dec_attn).enumerate() {
            let window = &mut state.windows[l];

            // Causal gated conv at the newest position. Window rows are the
            // previous inputs x_{t−W+1..t−1}; the current input is `x`.
            let mut acc = conv.bias.data().to_vec(); // [2d]
            let missing = (width - 1).saturating_sub(window.len());
            for (k, row) in window.iter().enumerate() {
                add_kernel_tap(&mut acc, &conv.kernels, missing + k, row, d);
            }
            add_kernel_tap(&mut acc, &conv.kernels, width - 1, &x, d);

            let mut pl = vec![0.0f32; d];
            for j in 0..d {
                pl[j] = acc[j] * kernels::sigmoid(acc[d + j]);
            }
            kernels::add_assign(&x, &mut pl); // residual

            // Slide the window forward with the just-consumed input.
            if width > 1 {
                if window.len() == width - 1 {
                    window.remove(0);
                }
                window.push(x.clone());
            }

            // Attention for this layer.
            let c = self.attend_row(&pl, &g_prev, attn)?;
            x = pl;
            kernels::add_assign(&c, &mut x); // d_{l+1} = p_l + c_l
        }

        state.pos += 1;

        // Output projection.
        let mut logits = p.out.b.data().to_vec();
        for (o, lo) in logits.iter_mut().enumerate() {
            *lo += kernels::dot(&x, p.out.w.row(o));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(numkit::NumError::NonFinite { op: "decode step" }.into());
        }
        Ok(logits)
    }

    fn attend_row(&self, pl: &[f32], g_prev: &[f32], attn: &Affine<f32>) -> Result<Vec<f32>> {
        let d = self.cfg.embed_dim;
        let mut q = attn.b.data().to_vec();
        for (o, qo) in q.iter_mut().enumerate() {
            *qo += kernels::dot(pl, attn.w.row(o));
        }
        kernels::add_assign(g_prev, &mut q);

        let context = |enc: &EncMats| -> Result<Vec<f32>> {
            let n = enc.keys.rows();
            let scores: Vec<f32> = (0..n).map(|j| kernels::dot(&q, enc.keys.row(j))).collect();
            let a = kernels::softmax_row(&scores)?;
            let mut c = vec![0.0f32; d];
            for (j, &w) in a.iter().enumerate() {
                kernels::axpy(w, enc.values.row(j), &mut c);
            }
            Ok(c)
        };

        match (&self.src.phones, &self.params.dual_fuse) {
            (Some(ph), Some(fuse)) => {
                let ca = context(ph)?;
                let cb = context(&self.src.words)?;
                let mut cat = ca;
                cat.extend_from_slice(&cb);
                let mut fused = fuse.b.data().to_vec();
                for (o, fo) in fused.iter_mut().enumerate() {
                    *fo += kernels::dot(&cat, fuse.w.row(o));
                }
                Ok(fused)
            }
            _ => context(&self.src.words),
        }
    }
}

/// Adds `x · kernels[:, :, k]` into `acc[2d]` — one kernel tap applied to
/// one input row. `kernels` layout is `[2d × d × W]`.
fn add_kernel_tap(acc: &mut [f32], kernels_t: &Tensor<f32>, k: usize, x: &[f32], d: usize) {
    let width = kernels_t.shape()[2];
    let data = kernels_t.data();
    for (co, a) in acc.iter_mut().enumerate() {
        let mut s = 0.0f32;
        let base = co * d * width;
        for (ci, &xv) in x.iter().enumerate() {
            s += xv * data[base + ci * width + k];
        }
        *a += s;
    }
}

/// Log-softmax of step logits in f64, for scoring.
pub fn step_log_probs(logits: &[f32]) -> Vec<f64> {
    kernels::log_softmax_f64(logits)
}

/// RNG stand-in for eval-mode paths. Panics if anything draws from it.
struct ForbiddenRng;

impl rand::RngCore for ForbiddenRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval-mode encode must not consume randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval-mode encode must not consume randomness")
    }
    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("eval-mode encode must not consume randomness")
    }
    fn try_fill_bytes(&mut self, _dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("eval-mode encode must not consume randomness")
    }
}
