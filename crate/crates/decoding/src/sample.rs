//! Sampled N-best decoding: ancestral samples, aggregated by frequency.
//!
//! A batch of `min_samples` sequences is drawn first. If they already
//! collapse onto at most `target_unique` distinct sequences the
//! frequencies are trusted as they are; otherwise sampling continues to
//! `max_samples` draws for better frequency estimates, and the
//! `target_unique` most frequent sequences are kept.

use std::collections::HashMap;

use rand::Rng;
use seq2seq::{BOS, EOS};

use crate::error::{DecodeError, Result};
use crate::nbest::ScoredSeq;
use crate::step::StepDecoder;

/// How a sampling run ended, for logs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStats {
    /// Total sequences drawn.
    pub drawn: usize,
    /// Distinct sequences among them.
    pub unique: usize,
}

/// Draws one ancestral sample: each step samples a token from the step
/// distribution and feeds it back in, until EOS or `max_len` tokens.
/// The returned sequence excludes EOS and never contains PAD or BOS.
pub fn sample_sequence<D: StepDecoder, R: Rng + ?Sized>(
    dec: &D,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<u32>> {
    let mut state = dec.start();
    let mut tokens = Vec::new();
    let mut prev = BOS;
    for _ in 0..max_len {
        let log_probs = dec.step(&mut state, prev)?;
        let t = sample_token(&log_probs, rng);
        if t == EOS {
            break;
        }
        tokens.push(t);
        prev = t;
    }
    Ok(tokens)
}

/// Samples an N-best list. Scores are raw sample frequencies; entries are
/// ordered by descending frequency, ties broken by earlier first
/// occurrence. Deterministic given `rng`.
pub fn sample_decode<D: StepDecoder, R: Rng + ?Sized>(
    dec: &D,
    min_samples: usize,
    max_samples: usize,
    target_unique: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<(Vec<ScoredSeq>, SampleStats)> {
    if min_samples == 0 || target_unique == 0 || max_len == 0 {
        return Err(DecodeError::BadParams(
            "sample counts and max_len must be positive".to_string(),
        ));
    }
    if max_samples < min_samples {
        return Err(DecodeError::BadParams(format!(
            "max_samples {max_samples} is below min_samples {min_samples}"
        )));
    }

    // Sequence → (first-occurrence index, count).
    let mut seen: HashMap<Vec<u32>, (usize, u32)> = HashMap::new();
    let mut drawn = 0usize;
    while drawn < max_samples {
        let seq = sample_sequence(dec, max_len, rng)?;
        drawn += 1;
        let next_index = seen.len();
        seen.entry(seq).or_insert((next_index, 0)).1 += 1;
        // One decision point, after the minimum batch: few enough distinct
        // sequences means the frequencies are already informative. More
        // draws can only add distinct sequences, so the check never
        // becomes true later and sampling runs to the cap.
        if drawn == min_samples && seen.len() <= target_unique {
            break;
        }
    }

    let stats = SampleStats {
        drawn,
        unique: seen.len(),
    };
    let mut entries: Vec<(Vec<u32>, usize, u32)> = seen
        .into_iter()
        .map(|(seq, (first, count))| (seq, first, count))
        .collect();
    entries.sort_unstable_by(|a, b| b.2.cmp(&a.2).then_with(|| a.1.cmp(&b.1)));
    entries.truncate(target_unique);
    let ranked = entries
        .into_iter()
        .map(|(tokens, _, count)| ScoredSeq {
            tokens,
            score: count as f64,
        })
        .collect();
    Ok((ranked, stats))
}

/// Inverse-CDF sampling from a log-probability row. `−∞` entries are
/// unreachable; rounding slack at the tail falls back to the last viable
/// token.
fn sample_token<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> u32 {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_viable = None;
    for (t, &lp) in log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        cum += lp.exp();
        last_viable = Some(t as u32);
        if u < cum {
            return t as u32;
        }
    }
    last_viable.expect("a step distribution must have a viable token")
}
