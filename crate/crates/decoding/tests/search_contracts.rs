//! Search-strategy contracts, checked against enumerable toy decoders and
//! a real (tiny) model: exhaustive-enumeration oracles for beam search,
//! binomial oracles for sampled decoding, and the B=1 ⇔ greedy identity.

use std::collections::HashSet;

use proptest::prelude::*;
use rand::Rng;

use decoding::{
    beam_search, sample_decode, sample_sequence, StepDecoder, DecodeError, ModelDecoder,
    ScoredSeq,
};
use seq2seq::{
    encode_source, ConvSpec, DecoderSession, Mode, ModelConfig, ModelParams, SourceTokens, BOS,
    EOS, PAD,
};

const UNK: u32 = 3;

/// Toy decoder defined by an arbitrary prefix → log-probability function.
/// State is the emitted prefix itself.
struct FnToy<F: Fn(&[u32]) -> Vec<f64>> {
    vocab: usize,
    dist: F,
}

impl<F: Fn(&[u32]) -> Vec<f64>> StepDecoder for FnToy<F> {
    type State = Vec<u32>;

    fn vocab(&self) -> usize {
        self.vocab
    }

    fn start(&self) -> Vec<u32> {
        Vec::new()
    }

    fn step(&self, state: &mut Vec<u32>, token: u32) -> decoding::Result<Vec<f64>> {
        if token != BOS {
            state.push(token);
        }
        let d = (self.dist)(state);
        assert_eq!(d.len(), self.vocab);
        Ok(d)
    }
}

/// Log-probabilities putting all mass on `probs` (token, p) pairs.
fn dist_from(vocab: usize, probs: &[(u32, f64)]) -> Vec<f64> {
    let total: f64 = probs.iter().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-12, "probabilities must sum to 1");
    let mut d = vec![f64::NEG_INFINITY; vocab];
    for &(t, p) in probs {
        d[t as usize] = p.ln();
    }
    d
}

/// A reproducible "random model": the step distribution for each prefix
/// is derived by hashing (seed, prefix). PAD and BOS are impossible; EOS
/// can be disallowed to force termination at the length bound.
struct HashToy {
    vocab: usize,
    seed: u64,
    allow_eos: bool,
}

impl HashToy {
    fn dist(&self, prefix: &[u32]) -> Vec<f64> {
        let key: Vec<String> = prefix.iter().map(u32::to_string).collect();
        let refs: Vec<&str> = std::iter::once("toy")
            .chain(key.iter().map(String::as_str))
            .collect();
        let mut rng = numkit::rng::stream(self.seed, &refs);
        let mut logits: Vec<f64> = (0..self.vocab).map(|_| rng.gen_range(-2.0..2.0)).collect();
        logits[PAD as usize] = f64::NEG_INFINITY;
        logits[BOS as usize] = f64::NEG_INFINITY;
        if !self.allow_eos {
            logits[EOS as usize] = f64::NEG_INFINITY;
        }
        numkit::kernels::log_softmax_f64(&logits)
    }
}

impl StepDecoder for HashToy {
    type State = Vec<u32>;

    fn vocab(&self) -> usize {
        self.vocab
    }

    fn start(&self) -> Vec<u32> {
        Vec::new()
    }

    fn step(&self, state: &mut Vec<u32>, token: u32) -> decoding::Result<Vec<f64>> {
        if token != BOS {
            state.push(token);
        }
        Ok(self.dist(state))
    }
}

/// Reference greedy decoder: argmax token each step (lowest id on exact
/// ties), stopping at EOS or `max_len`. Returns (tokens, Σ log p, steps).
fn greedy_reference(toy: &HashToy, max_len: usize) -> (Vec<u32>, f64, usize) {
    let mut tokens: Vec<u32> = Vec::new();
    let mut logp = 0.0;
    for _ in 0..max_len {
        let dist = toy.dist(&tokens);
        let (best, best_lp) = dist
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, lp)| *lp > f64::NEG_INFINITY)
            .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .unwrap();
        logp += best_lp;
        if best as u32 == EOS {
            return (tokens.clone(), logp, tokens.len() + 1);
        }
        tokens.push(best as u32);
    }
    let steps = tokens.len();
    (tokens, logp, steps)
}

/// Every terminated sequence over the non-reserved alphabet up to
/// `max_len`, scored exactly as beam search scores them.
fn exhaustive_ranking(toy: &HashToy, max_len: usize) -> Vec<ScoredSeq> {
    let alphabet: Vec<u32> = (3..toy.vocab as u32).collect();
    let mut all: Vec<ScoredSeq> = Vec::new();
    let mut frontier: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    for depth in 0..=max_len {
        let mut next = Vec::new();
        for (prefix, logp) in frontier {
            let dist = toy.dist(&prefix);
            if depth == max_len {
                // Forced termination: no EOS step in the divisor.
                all.push(ScoredSeq {
                    tokens: prefix.clone(),
                    score: logp / prefix.len() as f64,
                });
                continue;
            }
            all.push(ScoredSeq {
                tokens: prefix.clone(),
                score: (logp + dist[EOS as usize]) / (prefix.len() + 1) as f64,
            });
            for &t in &alphabet {
                let mut seq = prefix.clone();
                seq.push(t);
                next.push((seq, logp + dist[t as usize]));
            }
        }
        frontier = next;
    }
    all.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    all
}

#[test]
fn deterministic_model_yields_one_perfect_hypothesis() {
    let toy = FnToy {
        vocab: 6,
        dist: |prefix: &[u32]| match prefix {
            [] => dist_from(6, &[(4, 1.0)]),
            [4] => dist_from(6, &[(5, 1.0)]),
            _ => dist_from(6, &[(EOS, 1.0)]),
        },
    };
    let out = beam_search(&toy, 8, 8, 20).unwrap();
    assert_eq!(out.len(), 1, "probability-one paths leave nothing to branch");
    assert_eq!(out[0].tokens, vec![4, 5]);
    assert_eq!(out[0].score, 0.0);
}

#[test]
fn wide_beam_ranking_equals_exhaustive_enumeration() {
    // |V| = 4 sampleable symbols (EOS + 3 words), max_len 3, B = 4³: every
    // expansion fits in the beam, so nothing is ever pruned and the result
    // must equal brute-force enumeration of all terminated sequences.
    let toy = HashToy {
        vocab: 6,
        seed: 42,
        allow_eos: true,
    };
    let oracle = exhaustive_ranking(&toy, 3);
    assert_eq!(oracle.len(), 1 + 3 + 9 + 27);

    let got = beam_search(&toy, 64, 64, 3).unwrap();
    assert_eq!(got.len(), 40, "B = 64 keeps every completed hypothesis");
    for (g, o) in got.iter().zip(&oracle) {
        assert_eq!(g.tokens, o.tokens);
        assert_eq!(
            g.score.to_bits(),
            o.score.to_bits(),
            "score of {:?}",
            g.tokens
        );
    }
}

#[test]
fn k_best_is_a_prefix_of_a_larger_k() {
    let toy = HashToy {
        vocab: 8,
        seed: 7,
        allow_eos: true,
    };
    let one = beam_search(&toy, 16, 1, 4).unwrap();
    let many = beam_search(&toy, 16, 16, 4).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0], many[0]);
}

#[test]
fn eosless_models_force_terminate_at_the_length_bound() {
    let toy = HashToy {
        vocab: 8,
        seed: 3,
        allow_eos: false,
    };
    let out = beam_search(&toy, 4, 4, 5).unwrap();
    assert_eq!(out.len(), 4);
    for s in &out {
        assert_eq!(s.tokens.len(), 5, "nothing can finish early without EOS");
        assert!(s.score.is_finite());
    }
}

#[test]
fn beam_parameters_are_validated() {
    let toy = HashToy {
        vocab: 6,
        seed: 1,
        allow_eos: true,
    };
    for (b, k, len) in [(0, 1, 5), (1, 0, 5), (2, 3, 5), (2, 2, 0)] {
        assert!(
            matches!(beam_search(&toy, b, k, len), Err(DecodeError::BadParams(_))),
            "B={b} K={k} max_len={len} should be rejected"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn beam_of_one_is_exactly_greedy(
        seed in 0u64..5000,
        vocab in 5usize..9,
        max_len in 1usize..8,
        allow_eos in any::<bool>(),
    ) {
        let toy = HashToy { vocab, seed, allow_eos };
        let (tokens, logp, steps) = greedy_reference(&toy, max_len);
        let got = beam_search(&toy, 1, 1, max_len).unwrap();
        prop_assert_eq!(got.len(), 1);
        prop_assert_eq!(&got[0].tokens, &tokens);
        prop_assert_eq!(got[0].score.to_bits(), (logp / steps as f64).to_bits());
    }

    #[test]
    fn rankings_satisfy_their_invariants(
        seed in 0u64..5000,
        vocab in 5usize..9,
        beam in 1usize..12,
        max_len in 1usize..7,
    ) {
        let toy = HashToy { vocab, seed, allow_eos: true };
        let k = (beam + 1) / 2;
        let out = beam_search(&toy, beam, k, max_len).unwrap();

        prop_assert!(out.len() <= k);
        prop_assert!(!out.is_empty(), "forced termination guarantees a pool");
        let mut seen = HashSet::new();
        for s in &out {
            prop_assert!(s.tokens.len() <= max_len);
            prop_assert!(s.tokens.iter().all(|&t| t != PAD && t != BOS && t != EOS));
            prop_assert!(s.score.is_finite());
            prop_assert!(seen.insert(s.tokens.clone()), "duplicate sequence");
        }
        for pair in out.windows(2) {
            let ordered = pair[0].score > pair[1].score
                || (pair[0].score == pair[1].score && pair[0].tokens < pair[1].tokens);
            prop_assert!(ordered, "ranking must be score-desc with lexicographic ties");
        }
    }
}

#[test]
fn deterministic_sampler_stops_at_the_minimum() {
    let toy = FnToy {
        vocab: 6,
        dist: |prefix: &[u32]| match prefix {
            [] => dist_from(6, &[(5, 1.0)]),
            _ => dist_from(6, &[(EOS, 1.0)]),
        },
    };
    let mut rng = numkit::rng::stream(1, &["sample"]);
    let (out, stats) = sample_decode(&toy, 250, 1000, 100, 10, &mut rng).unwrap();
    assert_eq!(stats.drawn, 250);
    assert_eq!(stats.unique, 1);
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].tokens, vec![5]);
    assert_eq!(out[0].score, 250.0);
}

#[test]
fn two_equiprobable_sequences_split_the_minimum_batch() {
    let toy = FnToy {
        vocab: 6,
        dist: |prefix: &[u32]| match prefix {
            [] => dist_from(6, &[(4, 0.5), (5, 0.5)]),
            _ => dist_from(6, &[(EOS, 1.0)]),
        },
    };
    let mut rng = numkit::rng::stream(2, &["sample"]);
    let (out, stats) = sample_decode(&toy, 250, 1000, 100, 10, &mut rng).unwrap();
    assert_eq!(stats.drawn, 250);
    assert_eq!(out.len(), 2);
    let total: f64 = out.iter().map(|s| s.score).sum();
    assert_eq!(total, 250.0);
    // Each frequency within 3σ of the binomial mean: 125 ± 3·√(250·¼).
    for s in &out {
        assert!(
            (s.score - 125.0).abs() <= 3.0 * (250.0f64 * 0.25).sqrt(),
            "frequency {} implausible for a fair coin",
            s.score
        );
    }
}

#[test]
fn diverse_models_sample_to_the_cap_and_keep_the_most_frequent() {
    // ~441 near-uniform length-2 sequences: far more than 100 unique after
    // 250 draws, so sampling must continue to exactly 1000.
    let toy = HashToy {
        vocab: 24,
        seed: 9,
        allow_eos: false,
    };
    let mut rng = numkit::rng::stream(3, &["sample"]);
    let (out, stats) = sample_decode(&toy, 250, 1000, 100, 2, &mut rng).unwrap();
    assert_eq!(stats.drawn, 1000);
    assert!(stats.unique > 100);
    assert_eq!(out.len(), 100);
    let kept: f64 = out.iter().map(|s| s.score).sum();
    assert!(kept < 1000.0, "some mass must fall outside the kept 100");
    for s in &out {
        assert_eq!(s.tokens.len(), 2);
        assert!(s.tokens.iter().all(|&t| t != PAD && t != BOS && t != EOS));
    }
    // Frequencies descending; ties broken by first occurrence are still
    // non-increasing in frequency.
    for pair in out.windows(2) {
        assert!(pair[0].score >= pair[1].score);
    }

    // Deterministic given the seed.
    let mut rng2 = numkit::rng::stream(3, &["sample"]);
    let (again, stats2) = sample_decode(&toy, 250, 1000, 100, 2, &mut rng2).unwrap();
    assert_eq!(stats, stats2);
    assert_eq!(out, again);
}

#[test]
fn sampled_frequencies_converge_to_sequence_probabilities() {
    let toy = FnToy {
        vocab: 6,
        dist: |prefix: &[u32]| match prefix {
            [] => dist_from(6, &[(3, 0.5), (4, 0.3), (5, 0.2)]),
            _ => dist_from(6, &[(EOS, 1.0)]),
        },
    };
    let mut rng = numkit::rng::stream(4, &["sample"]);
    let n = 10_000usize;
    let (out, stats) = sample_decode(&toy, n, n, 100, 5, &mut rng).unwrap();
    assert_eq!(stats.drawn, n);
    assert_eq!(out.len(), 3);
    for s in &out {
        let p = match s.tokens[0] {
            3 => 0.5,
            4 => 0.3,
            5 => 0.2,
            t => panic!("unexpected token {t}"),
        };
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let hat = s.score / n as f64;
        assert!(
            (hat - p).abs() <= 3.0 * sigma,
            "sequence starting {} estimated {hat:.4}, true {p}",
            s.tokens[0]
        );
    }
}

#[test]
fn sampling_parameters_are_validated() {
    let toy = HashToy {
        vocab: 6,
        seed: 1,
        allow_eos: true,
    };
    let mut rng = numkit::rng::stream(5, &["sample"]);
    for (min, max, uniq, len) in [(0, 10, 5, 4), (10, 5, 5, 4), (10, 20, 0, 4), (10, 20, 5, 0)] {
        assert!(matches!(
            sample_decode(&toy, min, max, uniq, len, &mut rng),
            Err(DecodeError::BadParams(_))
        ));
    }
}

#[test]
fn model_adapter_masks_and_renormalizes() {
    let cfg = ModelConfig {
        mode: Mode::Single,
        embed_dim: 8,
        word_vocab: 9,
        target_vocab: 8,
        phone_vocab: None,
        max_src_positions: 10,
        max_phone_positions: 10,
        max_tgt_positions: 12,
        enc_layers: vec![ConvSpec { channels: 8, kernel: 3 }; 2],
        dec_layers: 2,
        dec_kernel: 3,
        dropout: 0.0,
        encoder_dropout: 0.0,
    };
    let source = SourceTokens {
        words: vec![4, 6, 5],
        phones: None,
    };

    // All-zero parameters: every remaining token exactly equiprobable.
    let zeros = ModelParams::zeros(&cfg).unwrap();
    let src = encode_source(&zeros, &cfg, &source).unwrap();
    let session = DecoderSession::new(&zeros, &cfg, &src).unwrap();
    let dec = ModelDecoder::new(session);
    assert_eq!(dec.vocab(), 8);
    let mut st = dec.start();
    let lp = dec.step(&mut st, BOS).unwrap();
    assert_eq!(lp[PAD as usize], f64::NEG_INFINITY);
    assert_eq!(lp[BOS as usize], f64::NEG_INFINITY);
    let uniform = (1.0f64 / 6.0).ln();
    for t in [EOS, UNK, 4, 5, 6, 7] {
        assert!((lp[t as usize] - uniform).abs() < 1e-6, "token {t}");
    }

    // Trained-looking parameters: exp(step) matches the full forward
    // pass's probabilities renormalized over non-PAD/BOS tokens.
    let params = ModelParams::init(&cfg, 21).unwrap();
    let src = encode_source(&params, &cfg, &source).unwrap();
    let session = DecoderSession::new(&params, &cfg, &src).unwrap();
    let dec = ModelDecoder::new(session);
    let mut st = dec.start();
    let mut prefix = vec![BOS];
    for &tok in &[BOS, 4u32, 7, 5] {
        let lp = dec.step(&mut st, tok).unwrap();
        if tok != BOS {
            prefix.push(tok);
        }
        let probs = seq2seq::decode_step(&params, &cfg, &source, &prefix).unwrap();
        let allowed: f32 = probs[2..].iter().sum();
        for t in 2..8 {
            let want = (probs[t] / allowed) as f64;
            assert!(
                (lp[t].exp() - want).abs() < 1e-5,
                "token {t} after {prefix:?}: {} vs {want}",
                lp[t].exp()
            );
        }
        let mass: f64 = lp.iter().filter(|l| l.is_finite()).map(|l| l.exp()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }
}

#[test]
fn ancestral_samples_respect_termination_and_masking() {
    let toy = HashToy {
        vocab: 9,
        seed: 17,
        allow_eos: true,
    };
    let mut rng = numkit::rng::stream(6, &["sample"]);
    for _ in 0..200 {
        let seq = sample_sequence(&toy, 6, &mut rng).unwrap();
        assert!(seq.len() <= 6);
        assert!(seq.iter().all(|&t| t != PAD && t != BOS && t != EOS));
    }
}
