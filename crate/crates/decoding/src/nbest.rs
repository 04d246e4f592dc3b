//! N-best lists and their file format.
//!
//! One line per hypothesis: `id<TAB>rank<TAB>score<TAB>words`, ranks
//! 1-based and contiguous per utterance, scores printed with 6 decimal
//! places, words space-separated (empty for the empty hypothesis).

use std::collections::HashSet;
use std::io;

use crate::error::{DecodeError, Result};

/// A ranked token sequence straight out of a search strategy: score is a
/// length-normalized log-probability (beam) or a sample frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSeq {
    pub tokens: Vec<u32>,
    pub score: f64,
}

/// One hypothesis as words.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestEntry {
    pub words: Vec<String>,
    pub score: f64,
}

/// All hypotheses kept for one source utterance, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub id: String,
    pub entries: Vec<NBestEntry>,
}

impl NBestList {
    /// Checks the structural invariants: at most `k` entries, sequences
    /// pairwise distinct, scores non-increasing.
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.entries.len() > k {
            return Err(DecodeError::BadParams(format!(
                "utterance {}: {} entries exceed k = {k}",
                self.id,
                self.entries.len()
            )));
        }
        let mut seen: HashSet<&[String]> = HashSet::new();
        for e in &self.entries {
            if !seen.insert(&e.words) {
                return Err(DecodeError::BadParams(format!(
                    "utterance {}: duplicate hypothesis {:?}",
                    self.id,
                    e.words.join(" ")
                )));
            }
        }
        for pair in self.entries.windows(2) {
            if pair[1].score > pair[0].score {
                return Err(DecodeError::BadParams(format!(
                    "utterance {}: scores are not non-increasing",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Turns ranked token sequences into an [`NBestList`] using a token →
/// word mapping.
pub fn render_nbest(
    id: &str,
    seqs: &[ScoredSeq],
    word_of: impl Fn(u32) -> String,
) -> NBestList {
    NBestList {
        id: id.to_string(),
        entries: seqs
            .iter()
            .map(|s| NBestEntry {
                words: s.tokens.iter().map(|&t| word_of(t)).collect(),
                score: s.score,
            })
            .collect(),
    }
}

/// Writes lists in file order.
pub fn write_nbest<W: io::Write>(w: &mut W, lists: &[NBestList]) -> io::Result<()> {
    for list in lists {
        for (i, e) in list.entries.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{:.6}\t{}",
                list.id,
                i + 1,
                e.score,
                e.words.join(" ")
            )?;
        }
    }
    Ok(())
}

/// Reads an N-best file back. Lines for one utterance must be contiguous
/// and ranked 1, 2, 3, … in order.
pub fn read_nbest<R: io::BufRead>(r: R) -> Result<Vec<NBestList>> {
    let bad = |line: usize, detail: String| DecodeError::BadFile { line, detail };
    let mut lists: Vec<NBestList> = Vec::new();
    let mut done: HashSet<String> = HashSet::new();

    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| bad(line_no, e.to_string()))?;
        let mut fields = line.splitn(4, '\t');
        let (Some(id), Some(rank), Some(score), Some(words)) = (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) else {
            return Err(bad(
                line_no,
                "expected id<TAB>rank<TAB>score<TAB>words".to_string(),
            ));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| bad(line_no, format!("bad rank {rank:?}")))?;
        let score: f64 = score
            .parse()
            .map_err(|_| bad(line_no, format!("bad score {score:?}")))?;
        let words: Vec<String> = words.split_whitespace().map(str::to_string).collect();

        let entry = NBestEntry { words, score };
        match lists.last_mut() {
            Some(last) if last.id == id => {
                if rank != last.entries.len() + 1 {
                    return Err(bad(
                        line_no,
                        format!("rank {rank} out of order for utterance {id:?}"),
                    ));
                }
                last.entries.push(entry);
            }
            _ => {
                if !done.insert(id.to_string()) {
                    return Err(bad(
                        line_no,
                        format!("utterance {id:?} reappears after other utterances"),
                    ));
                }
                if rank != 1 {
                    return Err(bad(
                        line_no,
                        format!("utterance {id:?} starts at rank {rank}"),
                    ));
                }
                lists.push(NBestList {
                    id: id.to_string(),
                    entries: vec![entry],
                });
            }
        }
    }
    Ok(lists)
}
