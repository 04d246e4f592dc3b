//! Graph-building forward passes: encoding, attention, and teacher-forced
//! loss. Everything here records onto a [`numkit::Graph`], so one graph can
//! hold several examples whose losses are combined before a single backward
//! pass — that is how batching works without padding.

use crate::config::{Mode, ModelConfig};
use crate::error::{ModelError, Result};
use crate::params::{Affine, ConvBlock, ModelParams};
use numkit::{Graph, NodeRef, PadMode, Scalar, Tensor};
use rand::Rng;

/// Reserved token indices, fixed across all vocabularies.
pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;

/// Graph handles for every parameter tensor, in [`ModelParams`] layout.
pub struct ParamNodes {
    pub word_embed: NodeRef,
    pub word_pos: NodeRef,
    pub phone_embed: Option<NodeRef>,
    pub phone_pos: Option<NodeRef>,
    pub word_enc: Vec<BlockNodes>,
    pub phone_enc: Vec<BlockNodes>,
    pub tgt_embed: NodeRef,
    pub tgt_pos: NodeRef,
    pub dec_conv: Vec<BlockNodes>,
    pub dec_attn: Vec<AffineNodes>,
    pub dual_fuse: Option<AffineNodes>,
    pub out: AffineNodes,
}

impl ParamNodes {
    /// Node handles in the canonical [`ModelParams::visit`] order, so graph
    /// gradients line up index-for-index with flattened parameters.
    pub fn flat(&self) -> Vec<NodeRef> {
        fn blocks(out: &mut Vec<NodeRef>, bs: &[BlockNodes]) {
            for b in bs {
                out.push(b.kernels);
                out.push(b.bias);
                out.extend(b.proj);
            }
        }
        let mut out = Vec::new();
        out.push(self.word_embed);
        out.push(self.word_pos);
        out.extend(self.phone_embed);
        out.extend(self.phone_pos);
        blocks(&mut out, &self.word_enc);
        blocks(&mut out, &self.phone_enc);
        out.push(self.tgt_embed);
        out.push(self.tgt_pos);
        blocks(&mut out, &self.dec_conv);
        for a in &self.dec_attn {
            out.push(a.w);
            out.push(a.b);
        }
        if let Some(a) = &self.dual_fuse {
            out.push(a.w);
            out.push(a.b);
        }
        out.push(self.out.w);
        out.push(self.out.b);
        out
    }
}

pub struct BlockNodes {
    pub kernels: NodeRef,
    pub bias: NodeRef,
    pub proj: Option<NodeRef>,
}

pub struct AffineNodes {
    pub w: NodeRef,
    pub b: NodeRef,
}

fn put<S: Scalar>(g: &mut Graph<S>, t: &Tensor<S>, trainable: bool) -> Result<NodeRef> {
    Ok(if trainable { g.leaf(t.clone())? } else { g.constant(t.clone())? })
}

fn put_opt<S: Scalar>(
    g: &mut Graph<S>,
    t: &Option<Tensor<S>>,
    trainable: bool,
) -> Result<Option<NodeRef>> {
    t.as_ref().map(|t| put(g, t, trainable)).transpose()
}

fn put_block<S: Scalar>(g: &mut Graph<S>, b: &ConvBlock<S>, trainable: bool) -> Result<BlockNodes> {
    Ok(BlockNodes {
        kernels: put(g, &b.kernels, trainable)?,
        bias: put(g, &b.bias, trainable)?,
        proj: put_opt(g, &b.proj, trainable)?,
    })
}

fn put_blocks<S: Scalar>(
    g: &mut Graph<S>,
    bs: &[ConvBlock<S>],
    trainable: bool,
) -> Result<Vec<BlockNodes>> {
    bs.iter().map(|b| put_block(g, b, trainable)).collect()
}

fn put_affine<S: Scalar>(g: &mut Graph<S>, a: &Affine<S>, trainable: bool) -> Result<AffineNodes> {
    Ok(AffineNodes {
        w: put(g, &a.w, trainable)?,
        b: put(g, &a.b, trainable)?,
    })
}

/// Installs every parameter tensor on the graph. With `trainable`, tensors
/// keep their `requires_grad` flag (gradients flow); otherwise they are
/// constants, which is what inference and validation want.
pub fn register_params<S: Scalar>(
    g: &mut Graph<S>,
    params: &ModelParams<S>,
    trainable: bool,
) -> Result<ParamNodes> {
    Ok(ParamNodes {
        word_embed: put(g, &params.word_embed, trainable)?,
        word_pos: put(g, &params.word_pos, trainable)?,
        phone_embed: put_opt(g, &params.phone_embed, trainable)?,
        phone_pos: put_opt(g, &params.phone_pos, trainable)?,
        word_enc: put_blocks(g, &params.word_enc, trainable)?,
        phone_enc: put_blocks(g, &params.phone_enc, trainable)?,
        tgt_embed: put(g, &params.tgt_embed, trainable)?,
        tgt_pos: put(g, &params.tgt_pos, trainable)?,
        dec_conv: put_blocks(g, &params.dec_conv, trainable)?,
        dec_attn: params
            .dec_attn
            .iter()
            .map(|a| put_affine(g, a, trainable))
            .collect::<Result<_>>()?,
        dual_fuse: params
            .dual_fuse
            .as_ref()
            .map(|a| put_affine(g, a, trainable))
            .transpose()?,
        out: put_affine(g, &params.out, trainable)?,
    })
}

/// Token-index inputs for one source utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTokens {
    pub words: Vec<u32>,
    /// Required in dual mode.
    pub phones: Option<Vec<u32>>,
}

/// One training example: source tokens plus the target (recognized) token
/// sequence without BOS/EOS framing — the loss adds those itself.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub source: SourceTokens,
    pub target: Vec<u32>,
}

/// Which encoder, if any, gets silenced for one example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncBranch {
    Keep,
    /// Phoneme encoder values zeroed, word values doubled.
    DropPhones,
    /// Word encoder values zeroed, phoneme values doubled.
    DropWords,
}

/// Samples the per-example encoder-dropout branch: each encoder is dropped
/// with probability `p_d/2`, otherwise both are kept.
pub fn draw_branch<R: Rng + ?Sized>(p_d: f64, rng: &mut R) -> EncBranch {
    let u: f64 = rng.gen();
    if u < p_d / 2.0 {
        EncBranch::DropPhones
    } else if u < p_d {
        EncBranch::DropWords
    } else {
        EncBranch::Keep
    }
}

/// Encoder output handles: attention keys, values, and the validity mask.
pub struct EncoderRef {
    pub keys: NodeRef,
    pub values: NodeRef,
    pub mask: Vec<bool>,
}

fn check_tokens(kind: &'static str, tokens: &[u32], vocab: usize, max_pos: usize) -> Result<()> {
    if tokens.is_empty() {
        return Err(ModelError::EmptySequence(kind));
    }
    if tokens.len() > max_pos {
        return Err(ModelError::Overlong {
            kind,
            len: tokens.len(),
            max: max_pos,
        });
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= vocab) {
        return Err(ModelError::IndexOutOfRange {
            kind,
            index: bad,
            vocab,
        });
    }
    Ok(())
}

/// Token + position embeddings: `[len × d]`.
fn embed<S: Scalar>(
    g: &mut Graph<S>,
    table: NodeRef,
    pos_table: NodeRef,
    tokens: &[u32],
) -> Result<NodeRef> {
    let tok = g.gather_rows(table, tokens)?;
    let idx: Vec<u32> = (0..tokens.len() as u32).collect();
    let pos = g.gather_rows(pos_table, &idx)?;
    Ok(g.add(tok, pos)?)
}

struct DropCfg {
    rate: f64,
    train: bool,
}

fn maybe_dropout<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    x: NodeRef,
    drop: &DropCfg,
    rng: &mut R,
) -> Result<NodeRef> {
    if drop.train && drop.rate > 0.0 {
        Ok(g.dropout(x, drop.rate, rng)?)
    } else {
        Ok(x)
    }
}

/// One residual gated-conv block. The residual branch reads the block input
/// BEFORE dropout; channel changes go through the bias-free projection.
fn conv_block<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    x: NodeRef,
    b: &BlockNodes,
    pad: PadMode,
    drop: &DropCfg,
    rng: &mut R,
) -> Result<NodeRef> {
    let residual = match b.proj {
        Some(p) => g.linear(x, p, None)?,
        None => x,
    };
    let xd = maybe_dropout(g, x, drop, rng)?;
    let c = g.conv1d(xd, b.kernels, pad)?;
    let c = g.add_row(c, b.bias)?;
    let h = g.glu(c)?;
    Ok(g.add(h, residual)?)
}

/// Runs one encoder: embeddings through the `same`-padded residual ladder.
/// Returns `(e, enc)` where `e` is the embedding matrix (needed for values)
/// and `enc` holds keys `k = h`, values `v = h + e`, and the all-true mask.
fn encode_with<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    table: NodeRef,
    pos_table: NodeRef,
    blocks: &[BlockNodes],
    tokens: &[u32],
    drop: &DropCfg,
    rng: &mut R,
) -> Result<(NodeRef, EncoderRef)> {
    let e = embed(g, table, pos_table, tokens)?;
    let mut h = e;
    for b in blocks {
        h = conv_block(g, h, b, PadMode::Same, drop, rng)?;
    }
    let values = g.add(h, e)?;
    Ok((
        e,
        EncoderRef {
            keys: h,
            values,
            mask: vec![true; tokens.len()],
        },
    ))
}

/// Public single-encoder encode (word side), eval or train mode.
pub fn encode<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    words: &[u32],
    train: bool,
    rng: &mut R,
) -> Result<EncoderRef> {
    check_tokens("source", words, cfg.word_vocab, cfg.max_src_positions)?;
    let drop = DropCfg { rate: cfg.dropout, train };
    let (_, enc) = encode_with(g, nodes.word_embed, nodes.word_pos, &nodes.word_enc, words, &drop, rng)?;
    Ok(enc)
}

/// Runs the word encoder and, in dual mode, the phoneme encoder. No
/// encoder-dropout branch is applied — this is the raw pair of encodings.
pub fn encode_all<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    source: &SourceTokens,
    train: bool,
    rng: &mut R,
) -> Result<(EncoderRef, Option<EncoderRef>)> {
    let drop = DropCfg { rate: cfg.dropout, train };
    let phones = match cfg.mode {
        Mode::Single => None,
        Mode::Dual => {
            let toks = source.phones.as_ref().ok_or(ModelError::MissingPhones)?;
            check_tokens(
                "phoneme",
                toks,
                cfg.phone_vocab.expect("validated"),
                cfg.max_phone_positions,
            )?;
            let (_, enc) = encode_with(
                g,
                nodes.phone_embed.expect("dual params"),
                nodes.phone_pos.expect("dual params"),
                &nodes.phone_enc,
                toks,
                &drop,
                rng,
            )?;
            Some(enc)
        }
    };
    check_tokens("source", &source.words, cfg.word_vocab, cfg.max_src_positions)?;
    let (_, words) = encode_with(
        g,
        nodes.word_embed,
        nodes.word_pos,
        &nodes.word_enc,
        &source.words,
        &drop,
        rng,
    )?;
    Ok((words, phones))
}

/// Attention for one decoder layer: `q_i = W·p_i + b + g_{i−1}`, scores
/// against keys, masked softmax over encoder positions, weighted value sum.
pub fn attend<S: Scalar>(
    g: &mut Graph<S>,
    p: NodeRef,
    g_prev: NodeRef,
    enc: &EncoderRef,
    attn: &AffineNodes,
) -> Result<NodeRef> {
    let q = g.linear(p, attn.w, Some(attn.b))?;
    let q = g.add(q, g_prev)?;
    let scores = g.matmul_nt(q, enc.keys)?;
    let a = g.masked_softmax_rows(scores, Some(&enc.mask))?;
    Ok(g.matmul(a, enc.values)?)
}

/// Dual-encoder attention: attend to each encoder with the SAME query
/// projection, concatenate the two contexts, fuse linearly.
pub fn dual_attend<S: Scalar>(
    g: &mut Graph<S>,
    p: NodeRef,
    g_prev: NodeRef,
    enc_phones: &EncoderRef,
    enc_words: &EncoderRef,
    attn: &AffineNodes,
    fuse: &AffineNodes,
) -> Result<NodeRef> {
    let ca = attend(g, p, g_prev, enc_phones, attn)?;
    let cb = attend(g, p, g_prev, enc_words, attn)?;
    let cat = g.concat_cols(ca, cb)?;
    Ok(g.linear(cat, fuse.w, Some(fuse.b))?)
}

/// Both encoders' outputs plus the decoder's view of them.
enum Encoders {
    Single(EncoderRef),
    Dual { phones: EncoderRef, words: EncoderRef },
}

/// Applies the encoder-dropout branch to the value matrices.
fn apply_branch<S: Scalar>(
    g: &mut Graph<S>,
    phones: EncoderRef,
    words: EncoderRef,
    branch: EncBranch,
) -> Result<(EncoderRef, EncoderRef)> {
    let two = S::from_f64(2.0);
    let zero = S::zero();
    let (pv, wv) = match branch {
        EncBranch::Keep => (phones.values, words.values),
        EncBranch::DropPhones => (g.scale(phones.values, zero)?, g.scale(words.values, two)?),
        EncBranch::DropWords => (g.scale(phones.values, two)?, g.scale(words.values, zero)?),
    };
    Ok((
        EncoderRef { values: pv, ..phones },
        EncoderRef { values: wv, ..words },
    ))
}

fn encode_sources<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    source: &SourceTokens,
    train: bool,
    branch: EncBranch,
    rng: &mut R,
) -> Result<Encoders> {
    let (words, phones) = encode_all(g, nodes, cfg, source, train, rng)?;
    match phones {
        None => Ok(Encoders::Single(words)),
        Some(enc_p) => {
            let (phones, words) = apply_branch(g, enc_p, words, branch)?;
            Ok(Encoders::Dual { phones, words })
        }
    }
}

/// Causal decoder stack over `dec_in` tokens (must start with BOS), with
/// per-layer attention. Returns the logits matrix `[len × target_vocab]`.
fn decoder_logits<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    encs: &Encoders,
    dec_in: &[u32],
    drop: &DropCfg,
    rng: &mut R,
) -> Result<NodeRef> {
    check_tokens("target", dec_in, cfg.target_vocab, cfg.max_tgt_positions)?;
    let g_prev = embed(g, nodes.tgt_embed, nodes.tgt_pos, dec_in)?;
    let mut d = g_prev;
    for (conv, attn) in nodes.dec_conv.iter().zip(&nodes.dec_attn) {
        let p = conv_block(g, d, conv, PadMode::Causal, drop, rng)?;
        let c = match encs {
            Encoders::Single(enc) => attend(g, p, g_prev, enc, attn)?,
            Encoders::Dual { phones, words } => dual_attend(
                g,
                p,
                g_prev,
                phones,
                words,
                attn,
                nodes.dual_fuse.as_ref().expect("dual params"),
            )?,
        };
        d = g.add(p, c)?;
    }
    let d = maybe_dropout(g, d, drop, rng)?;
    Ok(g.linear(d, nodes.out.w, Some(nodes.out.b))?)
}

/// Teacher-forced summed cross-entropy for one example, plus the number of
/// predicted tokens (|target| + 1 for EOS). Decoder inputs are
/// `[BOS, y_1 … y_m]`; predictions are `[y_1 … y_m, EOS]`.
///
/// In train mode this applies conventional dropout at every conv input and
/// the decoder output, and (dual mode) samples the encoder-dropout branch —
/// one draw per example. Eval mode is fully deterministic.
pub fn example_loss<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    ex: &EncodedExample,
    train: bool,
    rng: &mut R,
) -> Result<(NodeRef, usize)> {
    let branch = if train && cfg.mode == Mode::Dual {
        draw_branch(cfg.encoder_dropout, rng)
    } else {
        EncBranch::Keep
    };
    example_loss_with_branch(g, nodes, cfg, ex, train, branch, rng)
}

/// [`example_loss`] with the encoder-dropout branch chosen by the caller.
/// Exposed so tests can pin a branch; training code wants [`example_loss`].
pub fn example_loss_with_branch<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    ex: &EncodedExample,
    train: bool,
    branch: EncBranch,
    rng: &mut R,
) -> Result<(NodeRef, usize)> {
    if ex.target.is_empty() {
        return Err(ModelError::EmptyTarget);
    }
    let drop = DropCfg { rate: cfg.dropout, train };
    let encs = encode_sources(g, nodes, cfg, &ex.source, train, branch, rng)?;

    let mut dec_in = Vec::with_capacity(ex.target.len() + 1);
    dec_in.push(BOS);
    dec_in.extend_from_slice(&ex.target);
    let mut targets = ex.target.clone();
    targets.push(EOS);

    let logits = decoder_logits(g, nodes, cfg, &encs, &dec_in, &drop, rng)?;
    let loss_sum = g.cross_entropy_sum(logits, &targets)?;
    Ok((loss_sum, targets.len()))
}

/// Per-token mean loss for one example (convenience over [`example_loss`]).
pub fn mean_loss<S: Scalar, R: Rng + ?Sized>(
    g: &mut Graph<S>,
    nodes: &ParamNodes,
    cfg: &ModelConfig,
    ex: &EncodedExample,
    train: bool,
    rng: &mut R,
) -> Result<NodeRef> {
    let (sum, n) = example_loss(g, nodes, cfg, ex, train, rng)?;
    Ok(g.scale(sum, S::from_f64(1.0 / n as f64))?)
}

/// Next-token distribution after `prev_targets` (which must start with
/// BOS), computed by a fresh eval-mode forward pass. This is the slow,
/// obviously-correct path; incremental decoding lives in [`crate::infer`].
pub fn decode_step<S: Scalar>(
    params: &ModelParams<S>,
    cfg: &ModelConfig,
    source: &SourceTokens,
    prev_targets: &[u32],
) -> Result<Vec<S>> {
    if prev_targets.first() != Some(&BOS) {
        return Err(ModelError::BadDecodePrefix);
    }
    let mut g: Graph<S> = Graph::new();
    let nodes = register_params(&mut g, params, false)?;
    let drop = DropCfg { rate: 0.0, train: false };
    let mut rng = NoRng;
    let encs = encode_sources(&mut g, &nodes, cfg, source, false, EncBranch::Keep, &mut rng)?;
    let logits = decoder_logits(&mut g, &nodes, cfg, &encs, prev_targets, &drop, &mut rng)?;
    let last = g.value(logits).row(prev_targets.len() - 1).to_vec();
    Ok(numkit::kernels::softmax_row(&last)?)
}

/// RNG stand-in for paths that never draw (eval mode). Panics if used.
struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("eval-mode forward must not consume randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("eval-mode forward must not consume randomness")
    }
    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("eval-mode forward must not consume randomness")
    }
    fn try_fill_bytes(&mut self, _dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        unreachable!("eval-mode forward must not consume randomness")
    }
}
