//! The training loop: teacher-forced cross-entropy over token-budget
//! batches, Nesterov momentum, per-epoch validation with best-checkpoint
//! selection, optional early stopping, and rollback on divergence.

use rand::Rng;

use numkit::{Graph, NesterovSgd, NodeRef, NumError, Tensor};
use seq2seq::{
    example_loss, register_params, Checkpoint, EncodedExample, ModelConfig, ModelError,
    ModelParams, OptimState, VocabRef,
};

use crate::batch::{epoch_order, make_batches};
use crate::error::{Result, TrainError};

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    /// Number of epochs to run. Zero is allowed and performs no updates,
    /// which makes "finetune for 0 epochs" an exact identity on the model.
    pub epochs: u32,
    pub lr: f64,
    pub momentum: f64,
    /// Upper bound on the total token cost of one batch
    /// (see [`crate::batch::token_cost`]).
    pub token_budget: usize,
    /// Stop after this many consecutive epochs without a new best
    /// validation loss. `None` disables early stopping.
    pub patience: Option<u32>,
    /// Seed for everything stochastic in the run: batch order and dropout.
    pub seed: u64,
}

impl TrainPlan {
    /// Defaults for training from scratch.
    pub fn base() -> Self {
        TrainPlan {
            epochs: 60,
            lr: 0.1,
            momentum: 0.99,
            token_budget: 4000,
            patience: Some(10),
            seed: 0,
        }
    }

    /// Defaults for finetuning an existing model on in-domain data.
    pub fn finetune() -> Self {
        TrainPlan {
            epochs: 15,
            ..Self::base()
        }
    }

    /// Defaults for training from scratch on a small in-domain set alone
    /// (the ablation that skips the base corpus).
    pub fn only_finetune() -> Self {
        TrainPlan {
            epochs: 75,
            ..Self::base()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(TrainError::BadPlan(msg.to_string()));
        if !self.lr.is_finite() || self.lr < 0.0 {
            return bad("learning rate must be finite and non-negative");
        }
        if !self.momentum.is_finite() || !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.token_budget == 0 {
            return bad("token budget must be positive");
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1 when set");
        }
        Ok(())
    }
}

/// Losses recorded at the end of one epoch. Both are means over predicted
/// tokens (every target token plus the end-of-sequence prediction).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: u32,
    pub train_loss: f64,
    pub valid_loss: f64,
}

/// Why the run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    /// All planned epochs ran.
    Completed,
    /// Validation loss failed to improve for the configured patience.
    EarlyStopped,
    /// The model produced non-finite values during this 1-based epoch. The
    /// returned checkpoint is the state after the last epoch that finished
    /// cleanly (or the initial state if none did).
    Diverged { epoch: u32 },
}

/// The result of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    /// The selected model: lowest validation loss seen, or the last good
    /// state if the run diverged.
    pub checkpoint: Checkpoint,
    pub stop: StopReason,
    /// One entry per epoch that finished cleanly.
    pub log: Vec<EpochStats>,
}

/// Renders the epoch log as tab-separated `epoch<TAB>train<TAB>valid`
/// lines, one per epoch, suitable for a log file.
pub fn render_log(log: &[EpochStats]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for e in log {
        writeln!(out, "{}\t{:.6}\t{:.6}", e.epoch, e.train_loss, e.valid_loss).unwrap();
    }
    out
}

/// Mean per-token cross-entropy of `params` over `set`, in eval mode
/// (no dropout, no encoder dropout).
pub fn evaluate(
    cfg: &ModelConfig,
    params: &ModelParams<f32>,
    set: &[EncodedExample],
) -> Result<f64> {
    if set.is_empty() {
        return Err(TrainError::EmptyCorpus("validation"));
    }
    // Never drawn from: eval mode takes no random decisions.
    let mut rng = numkit::rng::stream(0, &["eval"]);
    let mut total = 0.0f64;
    let mut tokens = 0usize;
    for ex in set {
        let mut g: Graph<f32> = Graph::new();
        let nodes = register_params(&mut g, params, false)?;
        let (loss_sum, n) = example_loss(&mut g, &nodes, cfg, ex, false, &mut rng)?;
        total += g.value(loss_sum).data()[0] as f64;
        tokens += n;
    }
    Ok(total / tokens as f64)
}

/// Trains `init` on `train_set`, validating on `valid_set` after every
/// epoch. Deterministic in `(init, corpora, plan)`.
///
/// The returned checkpoint holds the parameters with the lowest validation
/// loss (earliest epoch on ties) together with the optimizer state from the
/// same point, so training can resume where the model was best. If an
/// update or a forward pass produces non-finite values, the run stops and
/// returns the state after the last clean epoch instead.
pub fn train(
    cfg: &ModelConfig,
    init: ModelParams<f32>,
    train_set: &[EncodedExample],
    valid_set: &[EncodedExample],
    plan: &TrainPlan,
    vocab_refs: Vec<VocabRef>,
) -> Result<TrainOutcome> {
    plan.validate()?;
    cfg.validate().map_err(ModelError::from)?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyCorpus("training"));
    }
    if valid_set.is_empty() {
        return Err(TrainError::EmptyCorpus("validation"));
    }

    let names: Vec<String> = init.to_flat().into_iter().map(|(n, _)| n).collect();
    let mut flat: Vec<Tensor<f32>> = init.to_flat().into_iter().map(|(_, t)| t).collect();
    let shapes: Vec<Vec<usize>> = flat.iter().map(|t| t.shape().to_vec()).collect();
    let mut opt = NesterovSgd::<f32>::new(plan.lr, plan.momentum, &shapes)?;

    let batches = make_batches(train_set, plan.token_budget)?;

    // Snapshots are (params, velocity, epoch, valid_loss).
    type Snapshot = (Vec<Tensor<f32>>, Vec<Tensor<f32>>, u32, f64);
    let mut best: Option<Snapshot> = None;
    let mut last_good: Snapshot = (flat.clone(), opt.velocity().to_vec(), 0, f64::INFINITY);
    let mut log: Vec<EpochStats> = Vec::new();
    let mut stop = StopReason::Completed;
    let mut epochs_since_best = 0u32;

    'epochs: for epoch in 1..=plan.epochs {
        let mut rng = numkit::rng::stream(plan.seed, &["train", &epoch.to_string()]);
        let mut ce_total = 0.0f64;
        let mut token_total = 0usize;

        for &b in &epoch_order(batches.len(), plan.seed, epoch) {
            opt.lookahead(&mut flat)?;
            let shifted = rebuild(cfg, &flat);
            let (grads, ce_sum, tokens) =
                match batch_backward(cfg, &shifted, train_set, &batches[b], &mut rng) {
                    Ok(out) => out,
                    Err(e) if is_divergence(&e) => {
                        flat = last_good.0.clone();
                        stop = StopReason::Diverged { epoch };
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
            if let Err(e) = opt.step(&mut flat, &grads) {
                let e = TrainError::from(e);
                if is_divergence(&e) {
                    flat = last_good.0.clone();
                    stop = StopReason::Diverged { epoch };
                    break 'epochs;
                }
                return Err(e);
            }
            ce_total += ce_sum;
            token_total += tokens;
        }

        let current = rebuild(cfg, &flat);
        let valid_loss = match evaluate(cfg, &current, valid_set) {
            Ok(v) => v,
            Err(e) if is_divergence(&e) => {
                flat = last_good.0.clone();
                stop = StopReason::Diverged { epoch };
                break 'epochs;
            }
            Err(e) => return Err(e),
        };
        let train_loss = ce_total / token_total as f64;
        log.push(EpochStats {
            epoch,
            train_loss,
            valid_loss,
        });
        last_good = (flat.clone(), opt.velocity().to_vec(), epoch, valid_loss);

        let improved = best.as_ref().map_or(true, |(.., b)| valid_loss < *b);
        if improved {
            best = Some((flat.clone(), opt.velocity().to_vec(), epoch, valid_loss));
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if plan.patience.is_some_and(|p| epochs_since_best >= p) {
                stop = StopReason::EarlyStopped;
                break 'epochs;
            }
        }
    }

    let (sel_flat, sel_vel, sel_epoch, sel_valid) = match (&stop, best) {
        // On divergence the best snapshot may predate parameter corruption,
        // but "resume from here" semantics want the most recent clean state.
        (StopReason::Diverged { .. }, _) => last_good,
        (_, Some(snapshot)) => snapshot,
        // Zero-epoch run: the checkpoint is the input state, measured once.
        (_, None) => {
            let valid = evaluate(cfg, &rebuild(cfg, &flat), valid_set)?;
            (flat, opt.velocity().to_vec(), 0, valid)
        }
    };

    let velocity = names
        .iter()
        .cloned()
        .zip(sel_vel.into_iter().map(Tensor::detached))
        .collect();
    let checkpoint = Checkpoint {
        config: cfg.clone(),
        params: rebuild(cfg, &sel_flat),
        vocab_refs,
        optim: Some(OptimState {
            lr: plan.lr,
            momentum: plan.momentum,
            epoch: sel_epoch,
            best_valid: sel_valid,
            velocity,
        }),
    };
    Ok(TrainOutcome {
        checkpoint,
        stop,
        log,
    })
}

/// Continues training from `base` on new data with a fresh optimizer.
///
/// Token ids in the finetuning corpus must mean the same words as in the
/// base model, so every vocabulary the base checkpoint references must
/// reappear in `vocab_refs` with an identical content hash. Pass
/// `allow_vocab_change` to skip that guard deliberately.
pub fn finetune(
    base: &Checkpoint,
    train_set: &[EncodedExample],
    valid_set: &[EncodedExample],
    plan: &TrainPlan,
    vocab_refs: Vec<VocabRef>,
    allow_vocab_change: bool,
) -> Result<TrainOutcome> {
    if !allow_vocab_change {
        for base_ref in &base.vocab_refs {
            let matched = vocab_refs
                .iter()
                .any(|v| v.role == base_ref.role && v.sha256 == base_ref.sha256);
            if !matched {
                return Err(TrainError::VocabMismatch {
                    role: base_ref.role.clone(),
                });
            }
        }
    }
    train(
        &base.config,
        base.params.clone(),
        train_set,
        valid_set,
        plan,
        vocab_refs,
    )
}

/// One optimizer update's worth of work: builds a fresh graph over the
/// batch, sums the per-example token-sum losses, normalizes by the batch's
/// predicted-token count, and backpropagates. Returns gradients in
/// parameter visit order plus the batch's summed cross-entropy and token
/// count.
fn batch_backward<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    params: &ModelParams<f32>,
    set: &[EncodedExample],
    batch: &[usize],
    rng: &mut R,
) -> Result<(Vec<Tensor<f32>>, f64, usize)> {
    let mut g: Graph<f32> = Graph::new();
    let nodes = register_params(&mut g, params, true)?;
    let handles = nodes.flat();

    let mut acc: Option<NodeRef> = None;
    let mut tokens = 0usize;
    for &i in batch {
        let (loss_sum, n) = example_loss(&mut g, &nodes, cfg, &set[i], true, rng)?;
        tokens += n;
        acc = Some(match acc {
            None => loss_sum,
            Some(a) => g.add(a, loss_sum)?,
        });
    }
    let total = acc.expect("batches are never empty");
    let ce_sum = g.value(total).data()[0] as f64;
    let objective = g.scale(total, 1.0 / tokens as f32)?;
    g.backward(objective)?;

    let grads = handles.iter().map(|&h| g.grad_or_zeros(h)).collect();
    Ok((grads, ce_sum, tokens))
}

/// Reassembles structured parameters from the flat master copy.
fn rebuild(cfg: &ModelConfig, flat: &[Tensor<f32>]) -> ModelParams<f32> {
    let mut params = ModelParams::zeros(cfg).expect("config was validated");
    let mut i = 0;
    params.visit_mut(|_, t| {
        *t = flat[i].clone().with_grad();
        i += 1;
    });
    assert_eq!(i, flat.len(), "flat parameter count mismatch");
    params
}

/// Whether an error means the numbers blew up (as opposed to a structural
/// problem that retrying cannot fix).
fn is_divergence(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::Numeric(NumError::NonFinite { .. })
            | TrainError::Model(ModelError::Numeric(NumError::NonFinite { .. }))
    )
}
