//! Word-level alignment: error-chunk extraction and edit distance.
//!
//! An error chunk is a maximal run of words that the longest common
//! subsequence alignment leaves unmatched, pairing the gold-side leftover
//! with the hyp-side leftover at the same gap. Deleting a word leaves a
//! chunk with an empty hyp span; inserting one leaves an empty gold span;
//! both spans empty cannot occur.

use std::fmt;

/// One unmatched region of a gold/hyp alignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ErrorChunk {
    /// Index in the gold sequence where the gold span starts (for a pure
    /// insertion, the index the hyp words were inserted before).
    pub gold_pos: usize,
    /// Gold words covered by the chunk (empty for a pure insertion).
    pub gold: Vec<String>,
    /// Hyp words covered by the chunk (empty for a pure deletion).
    pub hyp: Vec<String>,
}

impl fmt::Display for ErrorChunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{} : {}}}", self.gold.join(" "), self.hyp.join(" "))
    }
}

/// Aligns `gold` and `hyp` by their longest common subsequence and
/// returns the unmatched regions as chunks, left to right.
///
/// When several subsequences tie for the longest, matches are taken as
/// early (leftmost) as possible; remaining skip ties consume the gold
/// side first. Identical sequences produce no chunks.
pub fn extract_error_chunks(gold: &[String], hyp: &[String]) -> Vec<ErrorChunk> {
    let n = gold.len();
    let m = hyp.len();

    // lcs[i][j] = LCS length of gold[i..] vs hyp[j..].
    let mut lcs = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if gold[i] == hyp[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }

    // Matching equal front words never shortens an LCS, so the leftmost
    // alignment falls out of a single forward walk.
    let mut matches: Vec<(usize, usize)> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if gold[i] == hyp[j] {
            matches.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let mut chunks = Vec::new();
    let (mut gi, mut hj) = (0, 0);
    let push_gap = |gi: usize, mi: usize, hj: usize, mj: usize, out: &mut Vec<ErrorChunk>| {
        if mi > gi || mj > hj {
            out.push(ErrorChunk {
                gold_pos: gi,
                gold: gold[gi..mi].to_vec(),
                hyp: hyp[hj..mj].to_vec(),
            });
        }
    };
    for &(mi, mj) in &matches {
        push_gap(gi, mi, hj, mj, &mut chunks);
        gi = mi + 1;
        hj = mj + 1;
    }
    push_gap(gi, n, hj, m, &mut chunks);
    chunks
}

/// Unit-cost Levenshtein distance between word sequences.
pub fn edit_distance(a: &[String], b: &[String]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, wa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, wb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(wa != wb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate: edit distance divided by the gold length.
/// Errors on an empty gold sequence.
pub fn wer(gold: &[String], hyp: &[String]) -> crate::Result<f64> {
    if gold.is_empty() {
        return Err(crate::EvalError::EmptyGold);
    }
    Ok(edit_distance(gold, hyp) as f64 / gold.len() as f64)
}
