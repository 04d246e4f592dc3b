//! Deterministic random-stream derivation.
//!
//! Everything stochastic in the workspace (dropout, sampling, shuffling,
//! corpus synthesis) draws from a ChaCha stream seeded by hashing a global
//! seed together with a list of string tags (e.g. the utterance id, an
//! epoch number). Deriving independent streams this way makes results
//! independent of processing order: decoding utterances serially, in
//! shuffled order, or concurrently produces identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive a named substream of `seed`. Identical `(seed, tags)` always
/// yield the same stream; any difference in any tag yields an unrelated one.
pub fn stream(seed: u64, tags: &[&str]) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for tag in tags {
        // Length-prefix each tag so ["ab","c"] and ["a","bc"] differ.
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}
