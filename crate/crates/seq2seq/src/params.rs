//! Parameter storage, initialization, and named traversal.

use crate::config::{Mode, ModelConfig};
use crate::error::Result;
use numkit::{rng, Scalar, Tensor};
use rand::distributions::Distribution;
use rand::Rng;

/// One residual gated-convolution block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<S: Scalar = f32> {
    /// `[2·Cout × Cin × W]` — doubled channels feed the gated linear unit.
    pub kernels: Tensor<S>,
    /// `[2·Cout]`
    pub bias: Tensor<S>,
    /// Bias-free `[Cout × Cin]` residual projection, present iff the block
    /// changes channel count.
    pub proj: Option<Tensor<S>>,
}

/// An affine map `w·x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<S: Scalar = f32> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

/// All trainable tensors of a model. See [`ModelParams::visit`] for the
/// canonical naming and ordering used by checkpoints and the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S: Scalar = f32> {
    pub word_embed: Tensor<S>,
    pub word_pos: Tensor<S>,
    pub phone_embed: Option<Tensor<S>>,
    pub phone_pos: Option<Tensor<S>>,
    pub word_enc: Vec<ConvBlock<S>>,
    pub phone_enc: Vec<ConvBlock<S>>,
    pub tgt_embed: Tensor<S>,
    pub tgt_pos: Tensor<S>,
    pub dec_conv: Vec<ConvBlock<S>>,
    pub dec_attn: Vec<Affine<S>>,
    /// Dual mode: maps the concatenated two-encoder context `[2d]` back to
    /// `[d]`. Shared across decoder layers.
    pub dual_fuse: Option<Affine<S>>,
    pub out: Affine<S>,
}

fn glorot<S: Scalar, R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, r: &mut R) -> Tensor<S> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data: Vec<S> = (0..n)
        .map(|_| S::from_f64(r.gen_range(-a..a)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape/data agree").with_grad()
}

fn embedding<S: Scalar, R: Rng>(rows: usize, cols: usize, r: &mut R) -> Tensor<S> {
    let dist = rand::distributions::Uniform::new(0.0f64, 1.0);
    // Box–Muller from two uniforms: keeps the dependency surface small and
    // the draw count per element fixed.
    let mut normal = || {
        let u1: f64 = dist.sample(r).max(f64::MIN_POSITIVE);
        let u2: f64 = dist.sample(r);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let data: Vec<S> = (0..rows * cols).map(|_| S::from_f64(0.1 * normal())).collect();
    Tensor::from_vec(&[rows, cols], data).expect("shape/data agree").with_grad()
}

fn zeros_grad<S: Scalar>(shape: &[usize]) -> Tensor<S> {
    Tensor::zeros(shape).with_grad()
}

fn conv_block<S: Scalar>(cin: usize, cout: usize, width: usize, seed: u64, name: &str) -> ConvBlock<S> {
    let mut r = rng::stream(seed, &["init", name, "kernels"]);
    let kernels = glorot(&[2 * cout, cin, width], cin * width, 2 * cout * width, &mut r);
    let proj = (cin != cout).then(|| {
        let mut r = rng::stream(seed, &["init", name, "proj"]);
        glorot(&[cout, cin], cin, cout, &mut r)
    });
    ConvBlock {
        kernels,
        bias: zeros_grad(&[2 * cout]),
        proj,
    }
}

fn ladder<S: Scalar>(cfg: &ModelConfig, seed: u64, prefix: &str) -> Vec<ConvBlock<S>> {
    let mut blocks = Vec::new();
    let mut cin = cfg.embed_dim;
    for (i, l) in cfg.enc_layers.iter().enumerate() {
        blocks.push(conv_block(cin, l.channels, l.kernel, seed, &format!("{prefix}.{i}")));
        cin = l.channels;
    }
    blocks
}

impl<S: Scalar> ModelParams<S> {
    /// Fresh parameters: Glorot-uniform weights and kernels, zero biases,
    /// N(0, 0.1) embeddings. Every tensor's RNG stream is derived from
    /// (seed, tensor name), so construction order is irrelevant.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let emb = |rows: usize, name: &str| -> Tensor<S> {
            let mut r = rng::stream(seed, &["init", name]);
            embedding(rows, d, &mut r)
        };
        let affine = |dout: usize, din: usize, name: &str| -> Affine<S> {
            let mut r = rng::stream(seed, &["init", name, "w"]);
            Affine {
                w: glorot(&[dout, din], din, dout, &mut r),
                b: zeros_grad(&[dout]),
            }
        };

        let dual = cfg.mode == Mode::Dual;
        Ok(ModelParams {
            word_embed: emb(cfg.word_vocab, "word_embed"),
            word_pos: emb(cfg.max_src_positions, "word_pos"),
            phone_embed: dual.then(|| emb(cfg.phone_vocab.expect("validated"), "phone_embed")),
            phone_pos: dual.then(|| emb(cfg.max_phone_positions, "phone_pos")),
            word_enc: ladder(cfg, seed, "word_enc"),
            phone_enc: if dual { ladder(cfg, seed, "phone_enc") } else { Vec::new() },
            tgt_embed: emb(cfg.target_vocab, "tgt_embed"),
            tgt_pos: emb(cfg.max_tgt_positions, "tgt_pos"),
            dec_conv: (0..cfg.dec_layers)
                .map(|i| conv_block(d, d, cfg.dec_kernel, seed, &format!("dec_conv.{i}")))
                .collect(),
            dec_attn: (0..cfg.dec_layers)
                .map(|i| affine(d, d, &format!("dec_attn.{i}")))
                .collect(),
            dual_fuse: dual.then(|| affine(d, 2 * d, "dual_fuse")),
            out: affine(cfg.target_vocab, d, "out"),
        })
    }

    /// All-zero tensors with the exact shapes of [`ModelParams::init`]:
    /// the allocation step of checkpoint loading and optimizer-velocity
    /// setup, where real values are filled in afterwards.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let zero_block = |cin: usize, cout: usize, width: usize| ConvBlock {
            kernels: zeros_grad(&[2 * cout, cin, width]),
            bias: zeros_grad(&[2 * cout]),
            proj: (cin != cout).then(|| zeros_grad(&[cout, cin])),
        };
        let zero_ladder = || {
            let mut blocks = Vec::new();
            let mut cin = d;
            for l in &cfg.enc_layers {
                blocks.push(zero_block(cin, l.channels, l.kernel));
                cin = l.channels;
            }
            blocks
        };
        let zero_affine = |dout: usize, din: usize| Affine {
            w: zeros_grad(&[dout, din]),
            b: zeros_grad(&[dout]),
        };

        let dual = cfg.mode == Mode::Dual;
        Ok(ModelParams {
            word_embed: zeros_grad(&[cfg.word_vocab, d]),
            word_pos: zeros_grad(&[cfg.max_src_positions, d]),
            phone_embed: dual.then(|| zeros_grad(&[cfg.phone_vocab.expect("validated"), d])),
            phone_pos: dual.then(|| zeros_grad(&[cfg.max_phone_positions, d])),
            word_enc: zero_ladder(),
            phone_enc: if dual { zero_ladder() } else { Vec::new() },
            tgt_embed: zeros_grad(&[cfg.target_vocab, d]),
            tgt_pos: zeros_grad(&[cfg.max_tgt_positions, d]),
            dec_conv: (0..cfg.dec_layers)
                .map(|_| zero_block(d, d, cfg.dec_kernel))
                .collect(),
            dec_attn: (0..cfg.dec_layers).map(|_| zero_affine(d, d)).collect(),
            dual_fuse: dual.then(|| zero_affine(d, 2 * d)),
            out: zero_affine(cfg.target_vocab, d),
        })
    }

    /// Visits every tensor with its canonical name, in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(&str, &Tensor<S>)) {
        let blocks = |f: &mut dyn FnMut(&str, &Tensor<S>), prefix: &str, bs: &[ConvBlock<S>]| {
            for (i, b) in bs.iter().enumerate() {
                f(&format!("{prefix}.{i}.kernels"), &b.kernels);
                f(&format!("{prefix}.{i}.bias"), &b.bias);
                if let Some(p) = &b.proj {
                    f(&format!("{prefix}.{i}.proj"), p);
                }
            }
        };
        f("word_embed", &self.word_embed);
        f("word_pos", &self.word_pos);
        if let Some(t) = &self.phone_embed {
            f("phone_embed", t);
        }
        if let Some(t) = &self.phone_pos {
            f("phone_pos", t);
        }
        blocks(&mut f, "word_enc", &self.word_enc);
        blocks(&mut f, "phone_enc", &self.phone_enc);
        f("tgt_embed", &self.tgt_embed);
        f("tgt_pos", &self.tgt_pos);
        blocks(&mut f, "dec_conv", &self.dec_conv);
        for (i, a) in self.dec_attn.iter().enumerate() {
            f(&format!("dec_attn.{i}.w"), &a.w);
            f(&format!("dec_attn.{i}.b"), &a.b);
        }
        if let Some(a) = &self.dual_fuse {
            f("dual_fuse.w", &a.w);
            f("dual_fuse.b", &a.b);
        }
        f("out.w", &self.out.w);
        f("out.b", &self.out.b);
    }

    /// Like [`ModelParams::visit`] with mutable access, same order.
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<S>)) {
        let blocks =
            |f: &mut dyn FnMut(&str, &mut Tensor<S>), prefix: &str, bs: &mut [ConvBlock<S>]| {
                for (i, b) in bs.iter_mut().enumerate() {
                    f(&format!("{prefix}.{i}.kernels"), &mut b.kernels);
                    f(&format!("{prefix}.{i}.bias"), &mut b.bias);
                    if let Some(p) = &mut b.proj {
                        f(&format!("{prefix}.{i}.proj"), p);
                    }
                }
            };
        f("word_embed", &mut self.word_embed);
        f("word_pos", &mut self.word_pos);
        if let Some(t) = &mut self.phone_embed {
            f("phone_embed", t);
        }
        if let Some(t) = &mut self.phone_pos {
            f("phone_pos", t);
        }
        blocks(&mut f, "word_enc", &mut self.word_enc);
        blocks(&mut f, "phone_enc", &mut self.phone_enc);
        f("tgt_embed", &mut self.tgt_embed);
        f("tgt_pos", &mut self.tgt_pos);
        blocks(&mut f, "dec_conv", &mut self.dec_conv);
        for (i, a) in self.dec_attn.iter_mut().enumerate() {
            f(&format!("dec_attn.{i}.w"), &mut a.w);
            f(&format!("dec_attn.{i}.b"), &mut a.b);
        }
        if let Some(a) = &mut self.dual_fuse {
            f("dual_fuse.w", &mut a.w);
            f("dual_fuse.b", &mut a.b);
        }
        f("out.w", &mut self.out.w);
        f("out.b", &mut self.out.b);
    }

    /// Tensors in visit order, cloned into a flat list.
    pub fn to_flat(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        self.visit(|name, t| out.push((name.to_string(), t.clone())));
        out
    }

    /// Total number of scalar parameters actually allocated.
    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(|_, t| n += t.len());
        n
    }

    /// Element-wise precision conversion, preserving names and flags.
    pub fn cast<T: Scalar>(&self) -> ModelParams<T> {
        ModelParams {
            word_embed: self.word_embed.cast(),
            word_pos: self.word_pos.cast(),
            phone_embed: self.phone_embed.as_ref().map(Tensor::cast),
            phone_pos: self.phone_pos.as_ref().map(Tensor::cast),
            word_enc: self.word_enc.iter().map(cast_block).collect(),
            phone_enc: self.phone_enc.iter().map(cast_block).collect(),
            tgt_embed: self.tgt_embed.cast(),
            tgt_pos: self.tgt_pos.cast(),
            dec_conv: self.dec_conv.iter().map(cast_block).collect(),
            dec_attn: self.dec_attn.iter().map(cast_affine).collect(),
            dual_fuse: self.dual_fuse.as_ref().map(cast_affine),
            out: cast_affine(&self.out),
        }
    }
}

fn cast_block<S: Scalar, T: Scalar>(b: &ConvBlock<S>) -> ConvBlock<T> {
    ConvBlock {
        kernels: b.kernels.cast(),
        bias: b.bias.cast(),
        proj: b.proj.as_ref().map(Tensor::cast),
    }
}

fn cast_affine<S: Scalar, T: Scalar>(a: &Affine<S>) -> Affine<T> {
    Affine {
        w: a.w.cast(),
        b: a.b.cast(),
    }
}
