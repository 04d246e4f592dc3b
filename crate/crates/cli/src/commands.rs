//! The subcommand implementations. Each validates its configuration keys,
//! does the work, writes outputs atomically, and records a manifest next
//! to the primary output.

use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::RngCore;

use augment::{augment_corpus, AltSource, AugmentError, AugmentPolicy, NBestSource};
use decoding::{
    beam_search, default_max_len, read_nbest, render_nbest, sample_decode, sample_sequence,
    write_nbest, ModelDecoder,
};
use evalkit::{chunk_recall_at_k, render_machine, render_table, TestPair};
use numkit::rng::stream;
use seq2seq::checkpoint::sha256_file;
use seq2seq::{
    encode_source, Checkpoint, DecoderSession, Mode, ModelConfig, ModelParams, SourceTokens,
    VocabRef,
};
use textprep::{
    phonemize_lenient, prepare_pairs, read_corpus, tokenize_transcript, write_corpus, Lexicon,
    TableG2p, Vocab,
};
use training::{render_log, StopReason, TrainPlan};

use crate::channel::{synth_corpus, Channel};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{write_atomic, write_manifest};
use crate::prepared::{encode_examples, read_prepared, source_tokens, write_prepared};

/// Echoes the effective configuration — the promised run log entry.
fn announce(command: &str, cfg: &RunConfig) {
    print!("{}", cfg.echo().lines().fold(String::new(), |mut s, l| {
        s.push_str(command);
        s.push_str(" config ");
        s.push_str(l);
        s.push('\n');
        s
    }));
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    Ok(Vocab::load(path)?)
}

/// Builds the model configuration for a preset name, sized to the actual
/// vocabularies, with the dropout knobs overridable.
fn model_config(
    cfg: &RunConfig,
    words: usize,
    target: usize,
    phones: Option<usize>,
) -> Result<ModelConfig> {
    let preset = cfg.get("model").unwrap_or("desk_single");
    let need_phones = || {
        phones.ok_or_else(|| {
            CliError::validation(format!("model {preset:?} requires phones_vocab"))
        })
    };
    let mut mc = match preset {
        "desk_single" => ModelConfig::desk_single(words, target),
        "desk_dual" => ModelConfig::desk_dual(words, target, need_phones()?),
        "paper_single" => {
            let mut m = ModelConfig::paper_single();
            m.word_vocab = words;
            m.target_vocab = target;
            m
        }
        "paper_dual" => {
            let mut m = ModelConfig::paper_dual();
            m.word_vocab = words;
            m.target_vocab = target;
            m.phone_vocab = Some(need_phones()?);
            m
        }
        other => {
            return Err(CliError::validation(format!(
                "unknown model preset {other:?}; expected desk_single, desk_dual, \
                 paper_single, or paper_dual"
            )))
        }
    };
    mc.dropout = cfg.get_or("dropout", mc.dropout)?;
    mc.encoder_dropout = cfg.get_or("encoder_dropout", mc.encoder_dropout)?;
    mc.validate()?;
    Ok(mc)
}

/// Overlays plan keys onto a default plan.
fn train_plan(cfg: &RunConfig, default: TrainPlan) -> Result<TrainPlan> {
    let patience = match cfg.get("patience") {
        None => default.patience,
        Some("none") => None,
        Some(raw) => Some(raw.parse().map_err(|_| {
            CliError::validation(format!("patience must be a count or `none`, got {raw:?}"))
        })?),
    };
    let plan = TrainPlan {
        epochs: cfg.get_or("epochs", default.epochs)?,
        lr: cfg.get_or("lr", default.lr)?,
        momentum: cfg.get_or("momentum", default.momentum)?,
        token_budget: cfg.get_or("token_budget", default.token_budget)?,
        patience,
        seed: cfg.get_or("seed", default.seed)?,
    };
    Ok(plan)
}

struct VocabPaths {
    words: PathBuf,
    phones: Option<PathBuf>,
    target: PathBuf,
}

impl VocabPaths {
    fn from_config(cfg: &RunConfig, dual: bool) -> Result<Self> {
        Ok(VocabPaths {
            words: cfg.require_path("words_vocab")?,
            phones: if dual {
                Some(cfg.require_path("phones_vocab")?)
            } else {
                cfg.get_path("phones_vocab")
            },
            target: cfg.require_path("target_vocab")?,
        })
    }

    fn refs(&self) -> Result<Vec<VocabRef>> {
        let mut refs = vec![VocabRef::for_file("words", &self.words)?];
        if let Some(p) = &self.phones {
            refs.push(VocabRef::for_file("phones", p)?);
        }
        refs.push(VocabRef::for_file("target", &self.target)?);
        Ok(refs)
    }

    fn inputs(&self) -> Vec<&Path> {
        let mut v = vec![self.words.as_path()];
        if let Some(p) = &self.phones {
            v.push(p.as_path());
        }
        v.push(self.target.as_path());
        v
    }
}

/// Loads the vocabularies a checkpoint was trained with, from the paths it
/// recorded, refusing files whose content hash no longer matches.
fn checkpoint_vocabs(ckpt: &Checkpoint) -> Result<(Vocab, Option<Vocab>, Vocab)> {
    let find = |role: &str| -> Result<&VocabRef> {
        ckpt.vocab_refs
            .iter()
            .find(|r| r.role == role)
            .ok_or_else(|| {
                CliError::validation(format!("checkpoint records no {role:?} vocabulary"))
            })
    };
    let verified = |role: &str| -> Result<Vocab> {
        let r = find(role)?;
        let path = Path::new(&r.path);
        let digest = sha256_file(path)?;
        if digest != r.sha256 {
            return Err(CliError::validation(format!(
                "vocabulary {} has changed since the checkpoint was written",
                r.path
            )));
        }
        load_vocab(path)
    };
    let phones = if ckpt.config.mode == Mode::Dual {
        Some(verified("phones")?)
    } else {
        None
    };
    Ok((verified("words")?, phones, verified("target")?))
}

/// The longest hypothesis worth decoding for a source of `n` words: the
/// usual 2n+5 headroom, clipped to what the position table can hold.
fn decode_cap(cfg: &ModelConfig, n_words: usize, override_len: Option<usize>) -> usize {
    let table = cfg.max_tgt_positions - 1; // BOS occupies one position
    override_len.unwrap_or_else(|| default_max_len(n_words)).min(table)
}

pub fn cmd_synthcorpus(cfg: &RunConfig) -> Result<()> {
    cfg.check_keys(&["channel", "size", "seed", "out"])?;
    announce("synthcorpus", cfg);
    let channel_path = cfg.require_path("channel")?;
    let out = cfg.require_path("out")?;
    let size: usize = cfg.get_or("size", 0)?;
    if size == 0 {
        return Err(CliError::validation("size must be a positive count"));
    }
    let seed: u64 = cfg.get_or("seed", 0)?;

    let channel = Channel::read(&channel_path)?;
    let utts = synth_corpus(&channel, size, seed)?;
    write_corpus(&out, &utts)?;
    write_manifest(&out, "synthcorpus", cfg, &[&channel_path])?;
    println!("synthcorpus wrote {} utterances to {}", utts.len(), out.display());
    Ok(())
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<()> {
    cfg.check_keys(&["input", "lexicon", "out_dir", "min_count"])?;
    announce("preprocess", cfg);
    let input = cfg.require_path("input")?;
    let out_dir = cfg.require_path("out_dir")?;
    let min_count: usize = cfg.get_or("min_count", 1)?;

    let raws = read_corpus(&input)?;
    let lex = match cfg.get_path("lexicon") {
        Some(p) => Lexicon::from_file(&p)?,
        None => Lexicon::new(),
    };
    let (pairs, report) = prepare_pairs(&raws, &lex, &TableG2p);

    let words = Vocab::build(
        pairs.iter().flat_map(|p| p.true_words.iter().map(String::as_str)),
        min_count,
    )?;
    let phones = Vocab::build(
        pairs.iter().flat_map(|p| p.true_phones.iter().map(String::as_str)),
        min_count,
    )?;
    // The target side must be able to emit clean words as well as errors,
    // so its vocabulary unions both sides of the corpus.
    let target = Vocab::build(
        pairs.iter().flat_map(|p| {
            p.true_words
                .iter()
                .chain(p.recognized_words.iter())
                .map(String::as_str)
        }),
        min_count,
    )?;

    std::fs::create_dir_all(&out_dir)?;
    let prepared_path = out_dir.join("prepared.tsv");
    let prepared: Vec<_> = pairs
        .into_iter()
        .map(|p| crate::prepared::PreparedUtterance {
            id: p.id,
            words: p.true_words,
            phones: p.true_phones,
            recognized: p.recognized_words,
        })
        .collect();
    write_prepared(&prepared_path, &prepared)?;
    words.save(&out_dir.join("words.vocab"))?;
    phones.save(&out_dir.join("phones.vocab"))?;
    target.save(&out_dir.join("target.vocab"))?;

    let mut inputs = vec![input.as_path()];
    let lex_path = cfg.get_path("lexicon");
    if let Some(p) = &lex_path {
        inputs.push(p.as_path());
    }
    write_manifest(&prepared_path, "preprocess", cfg, &inputs)?;
    println!(
        "preprocess kept {} of {} utterances ({:.1}% removed); vocab sizes: {} words, {} phones, {} target",
        report.total - report.removed,
        report.total,
        report.percent_removed(),
        words.len(),
        phones.len(),
        target.len(),
    );
    Ok(())
}

const PLAN_KEYS: [&str; 6] = ["epochs", "lr", "momentum", "token_budget", "patience", "seed"];

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let mut allowed = vec![
        "train", "valid", "words_vocab", "phones_vocab", "target_vocab", "model", "dropout",
        "encoder_dropout", "out",
    ];
    allowed.extend(PLAN_KEYS);
    cfg.check_keys(&allowed)?;
    announce("train", cfg);

    let preset = cfg.get("model").unwrap_or("desk_single");
    let dual = preset.ends_with("dual");
    let paths = VocabPaths::from_config(cfg, dual)?;
    let words = load_vocab(&paths.words)?;
    let phones = match (dual, &paths.phones) {
        (true, Some(p)) => Some(load_vocab(p)?),
        _ => None,
    };
    let target = load_vocab(&paths.target)?;
    let mc = model_config(cfg, words.len(), target.len(), phones.as_ref().map(Vocab::len))?;
    let plan = train_plan(cfg, TrainPlan::base())?;
    let out = cfg.require_path("out")?;

    let train_path = cfg.require_path("train")?;
    let valid_path = cfg.require_path("valid")?;
    let encode = |path: &Path| -> Result<Vec<seq2seq::EncodedExample>> {
        encode_examples(
            &read_prepared(path)?,
            &words,
            phones.as_ref(),
            &target,
            mc.max_src_positions,
            mc.max_phone_positions,
            mc.max_tgt_positions,
        )
    };
    let train_set = encode(&train_path)?;
    let valid_set = encode(&valid_path)?;

    let init = ModelParams::init(&mc, plan.seed)?;
    let outcome = training::train(&mc, init, &train_set, &valid_set, &plan, paths.refs()?)?;
    let mut inputs = vec![train_path.as_path(), valid_path.as_path()];
    inputs.extend(paths.inputs());
    finish_training_run(cfg, "train", &out, outcome, &inputs)
}

pub fn cmd_finetune(cfg: &RunConfig) -> Result<()> {
    let mut allowed = vec![
        "base", "train", "valid", "words_vocab", "phones_vocab", "target_vocab",
        "allow_vocab_change", "out",
    ];
    allowed.extend(PLAN_KEYS);
    cfg.check_keys(&allowed)?;
    announce("finetune", cfg);

    let base_path = cfg.require_path("base")?;
    let base = Checkpoint::load(&base_path)?;
    let dual = base.config.mode == Mode::Dual;
    let paths = VocabPaths::from_config(cfg, dual)?;
    let words = load_vocab(&paths.words)?;
    let phones = match &paths.phones {
        Some(p) if dual => Some(load_vocab(p)?),
        _ => None,
    };
    let target = load_vocab(&paths.target)?;
    let plan = train_plan(cfg, TrainPlan::finetune())?;
    let allow_vocab_change = cfg.get_flag("allow_vocab_change", false)?;
    let out = cfg.require_path("out")?;

    let mc = &base.config;
    let train_path = cfg.require_path("train")?;
    let valid_path = cfg.require_path("valid")?;
    let encode = |path: &Path| -> Result<Vec<seq2seq::EncodedExample>> {
        encode_examples(
            &read_prepared(path)?,
            &words,
            phones.as_ref(),
            &target,
            mc.max_src_positions,
            mc.max_phone_positions,
            mc.max_tgt_positions,
        )
    };
    let train_set = encode(&train_path)?;
    let valid_set = encode(&valid_path)?;

    let outcome = training::finetune(
        &base,
        &train_set,
        &valid_set,
        &plan,
        paths.refs()?,
        allow_vocab_change,
    )?;
    let mut inputs = vec![base_path.as_path(), train_path.as_path(), valid_path.as_path()];
    inputs.extend(paths.inputs());
    finish_training_run(cfg, "finetune", &out, outcome, &inputs)
}

fn finish_training_run(
    cfg: &RunConfig,
    command: &str,
    out: &Path,
    outcome: training::TrainOutcome,
    inputs: &[&Path],
) -> Result<()> {
    outcome.checkpoint.save(out)?;
    let mut log_path = out.as_os_str().to_owned();
    log_path.push(".log");
    write_atomic(Path::new(&log_path), render_log(&outcome.log).as_bytes())?;
    write_manifest(out, command, cfg, inputs)?;

    let stop = match outcome.stop {
        StopReason::Completed => "completed".to_string(),
        StopReason::EarlyStopped => "stopped early".to_string(),
        StopReason::Diverged { epoch } => format!("diverged during epoch {epoch}"),
    };
    let optim = outcome.checkpoint.optim.as_ref();
    println!(
        "{command} {stop} after {} clean epochs; selected epoch {} (validation loss {:.6}); wrote {}",
        outcome.log.len(),
        optim.map_or(0, |o| o.epoch),
        optim.map_or(f64::NAN, |o| o.best_valid),
        out.display(),
    );
    Ok(())
}

pub fn cmd_decode(cfg: &RunConfig) -> Result<()> {
    cfg.check_keys(&[
        "checkpoint", "input", "out", "mode", "k", "beam", "min_samples", "max_samples",
        "target_unique", "max_len", "seed",
    ])?;
    announce("decode", cfg);
    let ckpt_path = cfg.require_path("checkpoint")?;
    let input = cfg.require_path("input")?;
    let out = cfg.require_path("out")?;
    let mode = cfg.get("mode").unwrap_or("beam");
    let k: usize = cfg.get_or("k", 100)?;
    let beam: usize = cfg.get_or("beam", k)?;
    let min_samples: usize = cfg.get_or("min_samples", 250)?;
    let max_samples: usize = cfg.get_or("max_samples", 1000)?;
    let target_unique: usize = cfg.get_or("target_unique", k)?;
    let max_len_override = match cfg.get("max_len") {
        None => None,
        Some(_) => Some(cfg.get_or("max_len", 0usize)?),
    };
    let seed: u64 = cfg.get_or("seed", 0)?;
    if mode != "beam" && mode != "sample" {
        return Err(CliError::validation(format!(
            "mode must be beam or sample, got {mode:?}"
        )));
    }

    let ckpt = Checkpoint::load(&ckpt_path)?;
    let (words, phones, target) = checkpoint_vocabs(&ckpt)?;
    let utts = read_prepared(&input)?;

    let mut lists = Vec::with_capacity(utts.len());
    for utt in &utts {
        if utt.words.len() > ckpt.config.max_src_positions {
            return Err(CliError::validation(format!(
                "utterance {:?}: word length {} exceeds the model's limit of {}",
                utt.id,
                utt.words.len(),
                ckpt.config.max_src_positions
            )));
        }
        if phones.is_some() && utt.phones.len() > ckpt.config.max_phone_positions {
            return Err(CliError::validation(format!(
                "utterance {:?}: phoneme length {} exceeds the model's limit of {}",
                utt.id,
                utt.phones.len(),
                ckpt.config.max_phone_positions
            )));
        }
        let src = source_tokens(utt, &words, phones.as_ref());
        let enc = encode_source(&ckpt.params, &ckpt.config, &src)?;
        let session = DecoderSession::new(&ckpt.params, &ckpt.config, &enc)?;
        let dec = ModelDecoder::new(session);
        let cap = decode_cap(&ckpt.config, utt.words.len(), max_len_override);
        let seqs = match mode {
            "beam" => beam_search(&dec, beam, k, cap)?,
            _ => {
                let mut rng = stream(seed, &["decode", &utt.id]);
                let (seqs, _) =
                    sample_decode(&dec, min_samples, max_samples, target_unique, cap, &mut rng)?;
                seqs
            }
        };
        lists.push(render_nbest(&utt.id, &seqs, |t| {
            target.decode(t).unwrap_or("<unk>").to_string()
        }));
    }

    let mut bytes = Vec::new();
    write_nbest(&mut bytes, &lists)?;
    write_atomic(&out, &bytes)?;

    let mut inputs = vec![ckpt_path.as_path(), input.as_path()];
    inputs.extend(ckpt.vocab_refs.iter().map(|r| Path::new(&r.path)));
    write_manifest(&out, "decode", cfg, &inputs)?;
    println!(
        "decode ({mode}) wrote {} hypothesis lists to {}",
        lists.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    cfg.check_keys(&["corpus", "nbest", "k", "out"])?;
    announce("evaluate", cfg);
    let corpus_path = cfg.require_path("corpus")?;
    let nbest_path = cfg.require_path("nbest")?;
    let out = cfg.require_path("out")?;
    let k: usize = cfg.get_or("k", 100)?;

    let pairs: Vec<TestPair> = read_prepared(&corpus_path)?
        .into_iter()
        .map(|u| TestPair {
            id: u.id,
            gold: u.words,
            hyp: u.recognized,
        })
        .collect();
    let file = std::fs::File::open(&nbest_path)?;
    let lists = read_nbest(BufReader::new(file))?;
    let report = chunk_recall_at_k(&pairs, &lists, k)?;

    write_atomic(&out, render_machine(&report).as_bytes())?;
    write_manifest(&out, "evaluate", cfg, &[&corpus_path, &nbest_path])?;
    print!("{}", render_table(&report));
    Ok(())
}

/// Draws one ancestral sample from a trained model per replacement.
struct ModelAltSource {
    ckpt: Checkpoint,
    words: Vocab,
    phones: Option<Vocab>,
    target: Vocab,
    lex: Lexicon,
    max_len_override: Option<usize>,
}

impl AltSource for ModelAltSource {
    fn draw(
        &mut self,
        utt: &textprep::RawUtterance,
        rng: &mut dyn RngCore,
    ) -> augment::Result<Vec<String>> {
        let fail = |detail: String| AugmentError::SourceFailed {
            id: utt.id.clone(),
            detail,
        };
        let words = tokenize_transcript(&utt.true_text);
        let src = SourceTokens {
            words: self.words.encode_all(&words),
            phones: self
                .phones
                .as_ref()
                .map(|v| v.encode_all(&phonemize_lenient(&words, &self.lex, &TableG2p))),
        };
        let enc = encode_source(&self.ckpt.params, &self.ckpt.config, &src)
            .map_err(|e| fail(e.to_string()))?;
        let session = DecoderSession::new(&self.ckpt.params, &self.ckpt.config, &enc)
            .map_err(|e| fail(e.to_string()))?;
        let dec = ModelDecoder::new(session);
        let cap = decode_cap(&self.ckpt.config, words.len(), self.max_len_override);
        let ids = sample_sequence(&dec, cap, rng).map_err(|e| fail(e.to_string()))?;
        Ok(ids
            .iter()
            .map(|&t| self.target.decode(t).unwrap_or("<unk>").to_string())
            .collect())
    }
}

pub fn cmd_augment(cfg: &RunConfig) -> Result<()> {
    cfg.check_keys(&[
        "corpus", "out", "rate", "resample", "seed", "epoch", "nbest", "checkpoint", "lexicon",
        "max_len", "sidecar",
    ])?;
    announce("augment", cfg);
    let corpus_path = cfg.require_path("corpus")?;
    let out = cfg.require_path("out")?;
    cfg.require("rate")?;
    let policy = AugmentPolicy {
        rate: cfg.get_or("rate", 0.0)?,
        resample_each_epoch: cfg.get_flag("resample", false)?,
        seed: cfg.get_or("seed", 0)?,
    };
    policy.validate()?;
    let epoch: u32 = cfg.get_or("epoch", 0)?;
    let sidecar = cfg.get_flag("sidecar", true)?;

    let corpus = read_corpus(&corpus_path)?;
    let nbest_path = cfg.get_path("nbest");
    let ckpt_path = cfg.get_path("checkpoint");
    let mut source: Box<dyn AltSource> = match (&nbest_path, &ckpt_path) {
        (Some(p), None) => {
            let file = std::fs::File::open(p)?;
            Box::new(NBestSource::new(&read_nbest(BufReader::new(file))?))
        }
        (None, Some(p)) => {
            let ckpt = Checkpoint::load(p)?;
            let (words, phones, target) = checkpoint_vocabs(&ckpt)?;
            let lex = match cfg.get_path("lexicon") {
                Some(lp) => Lexicon::from_file(&lp)?,
                None => Lexicon::new(),
            };
            let max_len_override = match cfg.get("max_len") {
                None => None,
                Some(_) => Some(cfg.get_or("max_len", 0usize)?),
            };
            Box::new(ModelAltSource {
                ckpt,
                words,
                phones,
                target,
                lex,
                max_len_override,
            })
        }
        _ => {
            return Err(CliError::validation(
                "augment needs exactly one hypothesis source: nbest=FILE or checkpoint=FILE",
            ))
        }
    };

    let view = augment_corpus(&corpus, source.as_mut(), &policy, epoch)?;
    write_corpus(&out, &view.utterances)?;
    if sidecar {
        let mut sidecar_path = out.as_os_str().to_owned();
        sidecar_path.push(".transmuted");
        let body: String = view.transmuted.iter().map(|id| format!("{id}\n")).collect();
        write_atomic(Path::new(&sidecar_path), body.as_bytes())?;
    }

    let mut inputs = vec![corpus_path.as_path()];
    if let Some(p) = &nbest_path {
        inputs.push(p.as_path());
    }
    if let Some(p) = &ckpt_path {
        inputs.push(p.as_path());
    }
    write_manifest(&out, "augment", cfg, &inputs)?;
    println!(
        "augment transmuted {} of {} utterances into {}",
        view.transmuted.len(),
        view.utterances.len(),
        out.display()
    );
    Ok(())
}
