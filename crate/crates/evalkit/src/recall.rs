//! Recall metrics over N-best hypothesis lists.
//!
//! The questions these answer: of the errors the reference system actually
//! made, how many does some hypothesis in the top K reproduce exactly
//! (chunk recall), and for how many utterances does the top K contain the
//! reference output verbatim (utterance recall)?

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use decoding::NBestList;

use crate::align::extract_error_chunks;
use crate::{EvalError, Result};

/// One evaluation utterance: the clean text and the reference system's
/// actual output for it, both as word sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestPair {
    pub id: String,
    pub gold: Vec<String>,
    pub hyp: Vec<String>,
}

/// Counts backing the recall percentages for one evaluation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecallReport {
    /// How many hypotheses per utterance were considered.
    pub k: usize,
    pub chunks_total: usize,
    pub chunks_recalled: usize,
    pub utterances_total: usize,
    pub utterances_recalled: usize,
}

impl RecallReport {
    /// Percentage of reference error chunks reproduced somewhere in the
    /// top K. An error-free test set has nothing to miss, so it scores
    /// 100.
    pub fn chunk_recall_pct(&self) -> f64 {
        if self.chunks_total == 0 {
            100.0
        } else {
            100.0 * self.chunks_recalled as f64 / self.chunks_total as f64
        }
    }

    /// Percentage of utterances whose reference output appears verbatim
    /// in the top K.
    pub fn utterance_recall_pct(&self) -> f64 {
        100.0 * self.utterances_recalled as f64 / self.utterances_total as f64
    }
}

/// Measures how much of the reference behaviour the hypothesis lists
/// capture, considering the top `k` entries of each.
///
/// A chunk counts as recalled when some top-`k` hypothesis, aligned
/// against the same gold text, yields the identical chunk: same gold
/// position, same gold words, same hyp words. Every occurrence in the
/// reference counts separately. An utterance counts as recalled when a
/// top-`k` hypothesis equals the reference output word for word.
///
/// Every pair must have a hypothesis list with a matching id.
pub fn chunk_recall_at_k(
    pairs: &[TestPair],
    lists: &[NBestList],
    k: usize,
) -> Result<RecallReport> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let by_id: HashMap<&str, &NBestList> =
        lists.iter().map(|l| (l.id.as_str(), l)).collect();

    let mut report = RecallReport {
        k,
        chunks_total: 0,
        chunks_recalled: 0,
        utterances_total: pairs.len(),
        utterances_recalled: 0,
    };
    for pair in pairs {
        let list = by_id
            .get(pair.id.as_str())
            .ok_or_else(|| EvalError::MissingNBest { id: pair.id.clone() })?;
        let top = &list.entries[..k.min(list.entries.len())];

        let mut seen = HashSet::new();
        let mut verbatim = false;
        for entry in top {
            seen.extend(extract_error_chunks(&pair.gold, &entry.words));
            verbatim |= entry.words == pair.hyp;
        }
        if verbatim {
            report.utterances_recalled += 1;
        }
        for chunk in extract_error_chunks(&pair.gold, &pair.hyp) {
            report.chunks_total += 1;
            if seen.contains(&chunk) {
                report.chunks_recalled += 1;
            }
        }
    }
    Ok(report)
}

/// Percentage of utterances whose reference output appears verbatim in
/// the top `k` hypotheses.
pub fn utterance_recall_at_k(
    pairs: &[TestPair],
    lists: &[NBestList],
    k: usize,
) -> Result<f64> {
    chunk_recall_at_k(pairs, lists, k).map(|r| r.utterance_recall_pct())
}

/// Renders a report as an aligned, human-readable table.
pub fn render_table(report: &RecallReport) -> String {
    let mut out = String::new();
    let rows = [
        ("k".to_string(), report.k.to_string()),
        (
            format!("chunk recall @ {}", report.k),
            format!(
                "{:.2}%  ({}/{})",
                report.chunk_recall_pct(),
                report.chunks_recalled,
                report.chunks_total
            ),
        ),
        (
            format!("utterance recall @ {}", report.k),
            format!(
                "{:.2}%  ({}/{})",
                report.utterance_recall_pct(),
                report.utterances_recalled,
                report.utterances_total
            ),
        ),
    ];
    let width = rows.iter().map(|(name, _)| name.len()).max().unwrap();
    for (name, value) in &rows {
        writeln!(out, "{name:width$}  {value}").unwrap();
    }
    out
}

/// Renders a report as machine-readable `metric<TAB>value` lines.
pub fn render_machine(report: &RecallReport) -> String {
    let mut out = String::new();
    writeln!(out, "k\t{}", report.k).unwrap();
    writeln!(out, "chunks_total\t{}", report.chunks_total).unwrap();
    writeln!(out, "chunks_recalled\t{}", report.chunks_recalled).unwrap();
    writeln!(out, "chunk_recall_pct\t{:.6}", report.chunk_recall_pct()).unwrap();
    writeln!(out, "utterances_total\t{}", report.utterances_total).unwrap();
    writeln!(out, "utterances_recalled\t{}", report.utterances_recalled).unwrap();
    writeln!(
        out,
        "utterance_recall_pct\t{:.6}",
        report.utterance_recall_pct()
    )
    .unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use decoding::NBestEntry;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn list(id: &str, hyps: &[&str]) -> NBestList {
        NBestList {
            id: id.to_string(),
            entries: hyps
                .iter()
                .enumerate()
                .map(|(i, h)| NBestEntry {
                    words: words(h),
                    score: -(i as f64),
                })
                .collect(),
        }
    }

    #[test]
    fn verbatim_hypotheses_recall_everything() {
        let pairs = vec![
            TestPair { id: "u1".into(), gold: words("a b c"), hyp: words("a x c") },
            TestPair { id: "u2".into(), gold: words("d e"), hyp: words("d e f") },
        ];
        let lists = vec![list("u1", &["a x c"]), list("u2", &["d e f"])];
        let r = chunk_recall_at_k(&pairs, &lists, 1).unwrap();
        assert_eq!((r.chunks_total, r.chunks_recalled), (2, 2));
        assert_eq!((r.utterances_total, r.utterances_recalled), (2, 2));
        assert_eq!(r.chunk_recall_pct(), 100.0);
        assert_eq!(r.utterance_recall_pct(), 100.0);
    }

    #[test]
    fn error_free_references_score_full_chunk_recall() {
        let pairs = vec![TestPair {
            id: "u1".into(),
            gold: words("a b"),
            hyp: words("a b"),
        }];
        let lists = vec![list("u1", &["a z"])];
        let r = chunk_recall_at_k(&pairs, &lists, 1).unwrap();
        assert_eq!(r.chunks_total, 0);
        assert_eq!(r.chunk_recall_pct(), 100.0);
        assert_eq!(r.utterances_recalled, 0);
    }

    #[test]
    fn missing_list_and_degenerate_parameters_error() {
        let pairs = vec![TestPair {
            id: "u9".into(),
            gold: words("a"),
            hyp: words("b"),
        }];
        let err = chunk_recall_at_k(&pairs, &[], 1).unwrap_err();
        assert!(matches!(err, EvalError::MissingNBest { id } if id == "u9"));
        assert!(matches!(
            chunk_recall_at_k(&pairs, &[], 0),
            Err(EvalError::ZeroK)
        ));
        assert!(matches!(
            chunk_recall_at_k(&[], &[], 1),
            Err(EvalError::EmptyTestSet)
        ));
    }

    #[test]
    fn renderings_expose_the_same_numbers() {
        let r = RecallReport {
            k: 5,
            chunks_total: 8,
            chunks_recalled: 6,
            utterances_total: 4,
            utterances_recalled: 1,
        };
        let table = render_table(&r);
        assert!(table.contains("chunk recall @ 5"));
        assert!(table.contains("75.00%  (6/8)"));
        assert!(table.contains("25.00%  (1/4)"));
        let machine = render_machine(&r);
        assert!(machine.contains("chunk_recall_pct\t75.000000\n"));
        assert!(machine.contains("utterance_recall_pct\t25.000000\n"));
        assert!(machine.contains("k\t5\n"));
        for line in machine.lines() {
            assert_eq!(line.split('\t').count(), 2);
        }
    }
}
