//! The prepared-corpus file: tokenized utterances ready for training and
//! decoding.
//!
//! One example per line, `id<TAB>words<TAB>phones<TAB>recognized`, each
//! field after the id a space-joined token sequence (`recognized` may be
//! empty for inference-only corpora). This is the output of `preprocess`
//! and the input of `train`, `decode`, and `evaluate`.

use std::path::Path;

use seq2seq::{EncodedExample, SourceTokens};
use textprep::Vocab;

use crate::error::{CliError, Result};
use crate::manifest::write_atomic;

/// One tokenized utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedUtterance {
    pub id: String,
    pub words: Vec<String>,
    pub phones: Vec<String>,
    /// Empty when the corpus has no reference transcript.
    pub recognized: Vec<String>,
}

pub fn write_prepared(path: &Path, utts: &[PreparedUtterance]) -> Result<()> {
    let mut text = String::new();
    for u in utts {
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            u.id,
            u.words.join(" "),
            u.phones.join(" "),
            u.recognized.join(" ")
        ));
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_prepared(path: &Path) -> Result<Vec<PreparedUtterance>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::validation(format!("cannot read corpus {}: {e}", path.display()))
    })?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 || fields[0].is_empty() {
            return Err(CliError::validation(format!(
                "{}:{}: expected `id<TAB>words<TAB>phones<TAB>recognized`",
                path.display(),
                lineno + 1
            )));
        }
        let split = |s: &str| -> Vec<String> {
            s.split_whitespace().map(str::to_string).collect()
        };
        out.push(PreparedUtterance {
            id: fields[0].to_string(),
            words: split(fields[1]),
            phones: split(fields[2]),
            recognized: split(fields[3]),
        });
    }
    Ok(out)
}

/// Token-encodes the source side of one utterance. Phones are included
/// only when a phoneme vocabulary is supplied (dual-encoder models).
pub fn source_tokens(
    utt: &PreparedUtterance,
    words: &Vocab,
    phones: Option<&Vocab>,
) -> SourceTokens {
    SourceTokens {
        words: words.encode_all(&utt.words),
        phones: phones.map(|v| v.encode_all(&utt.phones)),
    }
}

/// Token-encodes utterances into training examples (target = recognized
/// side). Utterances longer than the model's position tables are
/// rejected by name so the failure is actionable.
pub fn encode_examples(
    utts: &[PreparedUtterance],
    words: &Vocab,
    phones: Option<&Vocab>,
    target: &Vocab,
    max_src: usize,
    max_phones: usize,
    max_tgt: usize,
) -> Result<Vec<EncodedExample>> {
    let mut out = Vec::with_capacity(utts.len());
    for u in utts {
        let over = |what: &str, n: usize, max: usize| {
            CliError::validation(format!(
                "utterance {:?}: {what} length {n} exceeds the model's limit of {max}",
                u.id
            ))
        };
        if u.words.len() > max_src {
            return Err(over("word", u.words.len(), max_src));
        }
        if phones.is_some() && u.phones.len() > max_phones {
            return Err(over("phoneme", u.phones.len(), max_phones));
        }
        // The loss appends EOS, so the target needs one slot of headroom.
        if u.recognized.len() + 1 > max_tgt {
            return Err(over("target", u.recognized.len(), max_tgt - 1));
        }
        out.push(EncodedExample {
            source: source_tokens(u, words, phones),
            target: target.encode_all(&u.recognized),
        });
    }
    Ok(out)
}
