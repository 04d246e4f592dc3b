//! Parallel corpus loading, preparation, and degenerate-example filtering.

use crate::error::{Result, TextError};
use crate::g2p::G2p;
use crate::lexicon::{phonemize_lenient, Lexicon};
use crate::tokenize::tokenize_transcript;
use std::collections::HashSet;
use std::path::Path;

/// One line of a corpus file, before any processing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawUtterance {
    pub id: String,
    pub true_text: String,
    pub recognized_text: Option<String>,
}

/// A fully prepared example: tokenized words on both sides plus the phoneme
/// rendering of the true side.
#[derive(Debug, Clone, PartialEq)]
pub struct UtterancePair {
    pub id: String,
    pub true_words: Vec<String>,
    pub true_phones: Vec<String>,
    /// Empty at pure inference time (no reference transcript).
    pub recognized_words: Vec<String>,
}

/// How much the degenerate-example filter removed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterReport {
    pub total: usize,
    pub removed: usize,
}

impl FilterReport {
    pub fn percent_removed(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.removed as f64 / self.total as f64
        }
    }
}

/// Reads `id<TAB>true_text[<TAB>recognized_text]` lines. Blank lines are
/// ignored; duplicate ids are an error because downstream outputs key on
/// them.
pub fn read_corpus(path: &Path) -> Result<Vec<RawUtterance>> {
    let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let id = fields.next().unwrap_or_default();
        let true_text = fields.next().ok_or_else(|| TextError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            detail: "expected `id<TAB>true_text[<TAB>recognized_text]`".into(),
        })?;
        if id.is_empty() {
            return Err(TextError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: "empty utterance id".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(TextError::DuplicateId(id.to_string()));
        }
        out.push(RawUtterance {
            id: id.to_string(),
            true_text: true_text.to_string(),
            recognized_text: fields.next().map(str::to_string),
        });
    }
    Ok(out)
}

/// Renders an utterance as its corpus file line (no trailing newline).
pub fn render_line(utt: &RawUtterance) -> String {
    match &utt.recognized_text {
        Some(rec) => format!("{}\t{}\t{}", utt.id, utt.true_text, rec),
        None => format!("{}\t{}", utt.id, utt.true_text),
    }
}

/// Writes a corpus file atomically (temp file + rename).
pub fn write_corpus(path: &Path, utts: &[RawUtterance]) -> Result<()> {
    let mut text = String::new();
    for u in utts {
        text.push_str(&render_line(u));
        text.push('\n');
    }
    let io_err = |source| TextError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, text).map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Tokenizes and phonemizes raw utterances, then filters degenerate pairs
/// (empty word or phoneme side on the true text). Returns survivors in
/// input order plus the removal report.
pub fn prepare_pairs(
    raws: &[RawUtterance],
    lex: &Lexicon,
    fallback: &dyn G2p,
) -> (Vec<UtterancePair>, FilterReport) {
    let pairs: Vec<UtterancePair> = raws
        .iter()
        .map(|r| {
            let true_words = tokenize_transcript(&r.true_text);
            let true_phones = phonemize_lenient(&true_words, lex, fallback);
            let recognized_words = r
                .recognized_text
                .as_deref()
                .map(tokenize_transcript)
                .unwrap_or_default();
            UtterancePair {
                id: r.id.clone(),
                true_words,
                true_phones,
                recognized_words,
            }
        })
        .collect();
    filter_pairs(pairs)
}

/// Drops pairs whose true side has zero words or zero phonemes. Survivors
/// pass through untouched, in order.
pub fn filter_pairs(pairs: Vec<UtterancePair>) -> (Vec<UtterancePair>, FilterReport) {
    let total = pairs.len();
    let kept: Vec<UtterancePair> = pairs
        .into_iter()
        .filter(|p| !p.true_words.is_empty() && !p.true_phones.is_empty())
        .collect();
    let report = FilterReport {
        total,
        removed: total - kept.len(),
    };
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::g2p::TableG2p;
    use std::io::Write;

    fn pair(id: &str, words: &[&str], phones: &[&str]) -> UtterancePair {
        UtterancePair {
            id: id.into(),
            true_words: words.iter().map(|s| s.to_string()).collect(),
            true_phones: phones.iter().map(|s| s.to_string()).collect(),
            recognized_words: Vec::new(),
        }
    }

    #[test]
    fn reads_two_and_three_field_lines() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "utt1\tDo you take Tylenol?\tdo you take колено").unwrap();
        writeln!(f, "utt2\tyes").unwrap();
        let raws = read_corpus(f.path()).unwrap();
        assert_eq!(raws.len(), 2);
        assert!(raws[0].recognized_text.is_some());
        assert_eq!(raws[1].recognized_text, None);
    }

    #[test]
    fn writing_and_rereading_is_lossless() {
        let utts = vec![
            RawUtterance {
                id: "u1".into(),
                true_text: "do you take tylenol".into(),
                recognized_text: Some("do you take tile at all".into()),
            },
            RawUtterance {
                id: "u2".into(),
                true_text: "yes".into(),
                recognized_text: None,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        write_corpus(&path, &utts).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), utts);
        assert_eq!(
            std::fs::read_to_string(&path).unwrap(),
            "u1\tdo you take tylenol\tdo you take tile at all\nu2\tyes\n"
        );
        assert_eq!(render_line(&utts[1]), "u2\tyes");
    }

    #[test]
    fn rejects_duplicate_ids_and_missing_fields() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "utt1\ta").unwrap();
        writeln!(f, "utt1\tb").unwrap();
        assert!(matches!(
            read_corpus(f.path()),
            Err(TextError::DuplicateId(id)) if id == "utt1"
        ));

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "lonely-id-no-text").unwrap();
        assert!(read_corpus(g.path()).is_err());
    }

    #[test]
    fn annotation_only_utterance_is_removed() {
        let raws = vec![
            RawUtterance {
                id: "a".into(),
                true_text: "[laughter]".into(),
                recognized_text: None,
            },
            RawUtterance {
                id: "b".into(),
                true_text: "yes".into(),
                recognized_text: Some("yes".into()),
            },
        ];
        let (pairs, report) = prepare_pairs(&raws, &Lexicon::new(), &TableG2p);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].id, "b");
        assert_eq!(report, FilterReport { total: 2, removed: 1 });
    }

    #[test]
    fn zero_phoneme_pair_is_removed() {
        // All-digit text tokenizes fine but phonemizes to nothing.
        let raws = vec![RawUtterance {
            id: "n".into(),
            true_text: "100 200".into(),
            recognized_text: None,
        }];
        let (pairs, report) = prepare_pairs(&raws, &Lexicon::new(), &TableG2p);
        assert!(pairs.is_empty());
        assert_eq!(report.removed, 1);
    }

    #[test]
    fn survivors_are_untouched_and_ordered() {
        let keep1 = pair("k1", &["a"], &["AE"]);
        let gone = pair("g", &[], &[]);
        let keep2 = pair("k2", &["b"], &["B"]);
        let (kept, _) = filter_pairs(vec![keep1.clone(), gone, keep2.clone()]);
        assert_eq!(kept, vec![keep1, keep2]);
    }

    #[test]
    fn report_percentage_matches_counts() {
        let mut pairs: Vec<UtterancePair> = (0..978)
            .map(|i| pair(&format!("u{i}"), &["ok"], &["AO", "K"]))
            .collect();
        pairs.extend((0..22).map(|i| pair(&format!("d{i}"), &[], &[])));
        let (kept, report) = filter_pairs(pairs);
        assert_eq!(kept.len(), 978);
        assert_eq!(report.total, 1000);
        assert_eq!(report.removed, 22);
        assert!((report.percent_removed() - 2.2).abs() < 1e-12);
    }

    #[test]
    fn full_preparation_pipeline() {
        let mut lex = Lexicon::new();
        lex.add("tylenol", vec!["T".into(), "AY".into(), "L".into()]).unwrap();
        let raws = vec![RawUtterance {
            id: "u".into(),
            true_text: "Take TYLENOL! [noise]".into(),
            recognized_text: Some("take tile at all".into()),
        }];
        let (pairs, _) = prepare_pairs(&raws, &lex, &TableG2p);
        assert_eq!(pairs[0].true_words, ["take", "tylenol"]);
        // "take" goes through the fallback table letter by letter;
        // "tylenol" comes from the lexicon.
        assert_eq!(pairs[0].true_phones, ["T", "AE", "K", "EH", "T", "AY", "L"]);
        assert_eq!(pairs[0].recognized_words, ["take", "tile", "at", "all"]);
    }
}
