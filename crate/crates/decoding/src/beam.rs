//! Beam search over a [`StepDecoder`].
//!
//! The beam holds `B` slots. At every position each live hypothesis is
//! expanded over the whole vocabulary and the best candidates by
//! cumulative log-probability fill the open slots; a candidate ending in
//! EOS retires its slot to the completed pool, and the rest stay live. A
//! retired slot is not refilled, so the live beam shrinks as hypotheses
//! complete, at most `B` hypotheses are ever completed, and with `B = 1`
//! the procedure is exactly greedy decoding. Anything still live at the
//! length bound is force-terminated into the pool. Final ranking is by
//! length-normalized score.

use seq2seq::{BOS, EOS};

use crate::error::{DecodeError, Result};
use crate::nbest::ScoredSeq;
use crate::step::StepDecoder;

/// Length bound used when the caller has no tighter one: ASR output
/// rarely exceeds twice the source length, plus slack for short sources.
pub fn default_max_len(source_len: usize) -> usize {
    2 * source_len + 5
}

struct Live<S> {
    state: S,
    tokens: Vec<u32>,
    logp: f64,
}

/// Decodes the `k` best hypotheses using a beam of `beam` slots
/// (`beam ≥ k`) and at most `max_len` emitted tokens per hypothesis.
///
/// Returns sequences ranked by descending `Σ log p / steps`, where steps
/// counts emitted tokens plus the EOS step for hypotheses that ended in
/// EOS (force-terminated ones have no EOS step). Ties rank in
/// lexicographic token order. Sequences never contain PAD, BOS, or EOS.
pub fn beam_search<D: StepDecoder>(
    dec: &D,
    beam: usize,
    k: usize,
    max_len: usize,
) -> Result<Vec<ScoredSeq>> {
    if beam == 0 || k == 0 {
        return Err(DecodeError::BadParams(
            "beam width and k must be positive".to_string(),
        ));
    }
    if beam < k {
        return Err(DecodeError::BadParams(format!(
            "beam width {beam} cannot return k = {k} hypotheses"
        )));
    }
    if max_len == 0 {
        return Err(DecodeError::BadParams(
            "max_len must be positive".to_string(),
        ));
    }

    let mut live = vec![Live {
        state: dec.start(),
        tokens: Vec::new(),
        logp: 0.0,
    }];
    // (tokens, Σ log p, steps including any EOS step)
    let mut pool: Vec<(Vec<u32>, f64, usize)> = Vec::new();

    for pos in 0..max_len {
        // Advance every live hypothesis one step.
        let mut dists = Vec::with_capacity(live.len());
        for h in live.iter_mut() {
            let prev = if pos == 0 { BOS } else { *h.tokens.last().unwrap() };
            dists.push(dec.step(&mut h.state, prev)?);
        }

        // All viable continuations: (parent, token, cumulative log p).
        let mut cand: Vec<(usize, u32, f64)> = Vec::new();
        for (i, dist) in dists.iter().enumerate() {
            for (t, &lp) in dist.iter().enumerate() {
                if lp > f64::NEG_INFINITY {
                    cand.push((i, t as u32, live[i].logp + lp));
                }
            }
        }
        cand.sort_unstable_by(|a, b| {
            b.2.total_cmp(&a.2).then_with(|| {
                let seq_a = live[a.0].tokens.iter().copied().chain([a.1]);
                let seq_b = live[b.0].tokens.iter().copied().chain([b.1]);
                seq_a.cmp(seq_b)
            })
        });
        cand.truncate(beam - pool.len());

        let mut next = Vec::with_capacity(cand.len());
        for (parent, token, logp) in cand {
            let p = &live[parent];
            if token == EOS {
                pool.push((p.tokens.clone(), logp, p.tokens.len() + 1));
            } else {
                let mut tokens = p.tokens.clone();
                tokens.push(token);
                next.push(Live {
                    state: p.state.clone(),
                    tokens,
                    logp,
                });
            }
        }
        live = next;
        if live.is_empty() {
            break;
        }
    }

    // Whatever survived to the length bound counts as completed, without
    // an EOS step.
    for h in live {
        let steps = h.tokens.len();
        pool.push((h.tokens, h.logp, steps));
    }

    let mut ranked: Vec<ScoredSeq> = pool
        .into_iter()
        .map(|(tokens, logp, steps)| ScoredSeq {
            tokens,
            score: logp / steps as f64,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    ranked.truncate(k);
    Ok(ranked)
}
