//! Token-budget batching.
//!
//! Batches are bounded by total *token cost* rather than example count, so
//! long utterances do not blow up the memory footprint of a single update.
//! Examples are length-sorted before packing, which keeps batchmates at
//! similar lengths; the batch *contents* are therefore fixed for a corpus,
//! and only the order in which batches are visited changes from epoch to
//! epoch (see [`epoch_order`]).

use rand::seq::SliceRandom;
use seq2seq::EncodedExample;

use crate::error::{Result, TrainError};

/// The number of embedded positions an example occupies: source words,
/// source phonemes (if any), and the target including its end-of-sequence
/// prediction. This is the quantity the batch budget bounds.
pub fn token_cost(ex: &EncodedExample) -> usize {
    ex.source.words.len()
        + ex.source.phones.as_ref().map_or(0, Vec::len)
        + ex.target.len()
        + 1
}

/// Packs `set` into batches of at most `budget` total token cost.
///
/// Examples are sorted by descending cost (ties by corpus position) and
/// packed greedily, so each batch holds examples of similar length. Returns
/// indices into `set`; every index appears in exactly one batch. Fails if
/// any single example exceeds the budget on its own.
pub fn make_batches(set: &[EncodedExample], budget: usize) -> Result<Vec<Vec<usize>>> {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(token_cost(&set[i])), i));

    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let mut current_cost = 0usize;
    for i in order {
        let cost = token_cost(&set[i]);
        if cost > budget {
            return Err(TrainError::OverBudget {
                index: i,
                cost,
                budget,
            });
        }
        if current_cost + cost > budget {
            batches.push(std::mem::take(&mut current));
            current_cost = 0;
        }
        current.push(i);
        current_cost += cost;
    }
    if !current.is_empty() {
        batches.push(current);
    }
    Ok(batches)
}

/// The order in which to visit `n_batches` batches during `epoch`
/// (1-based). Deterministic in `(seed, epoch)` and independent of any other
/// randomness in the run.
pub fn epoch_order(n_batches: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_batches).collect();
    let mut rng = numkit::rng::stream(seed, &["batch-order", &epoch.to_string()]);
    order.shuffle(&mut rng);
    order
}
