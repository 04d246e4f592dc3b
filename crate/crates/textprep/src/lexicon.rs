//! Pronunciation lexicon: word → ordered pronunciation variants.

use crate::error::{Result, TextError};
use crate::g2p::G2p;
use std::collections::{BTreeSet, HashMap};
use std::path::Path;

/// Word → ordered list of pronunciations, plus the phoneme inventory they
/// draw from. Every pronunciation is nonempty by construction.
#[derive(Debug, Default, Clone)]
pub struct Lexicon {
    entries: HashMap<String, Vec<Vec<String>>>,
    inventory: BTreeSet<String>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a pronunciation variant for `word`. Variants keep insertion
    /// order; the first one added is the one [`Lexicon::first`] returns.
    pub fn add(&mut self, word: &str, phones: Vec<String>) -> Result<()> {
        if phones.is_empty() {
            return Err(TextError::ZeroPhonemes(word.to_string()));
        }
        self.inventory.extend(phones.iter().cloned());
        self.entries.entry(word.to_string()).or_default().push(phones);
        Ok(())
    }

    /// First (preferred) pronunciation of `word`, if the lexicon has one.
    pub fn first(&self, word: &str) -> Option<&[String]> {
        self.entries.get(word).map(|v| v[0].as_slice())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All phoneme symbols used by any pronunciation, sorted.
    pub fn inventory(&self) -> impl Iterator<Item = &str> {
        self.inventory.iter().map(|s| s.as_str())
    }

    /// Parses `word<TAB>ph1 ph2 ...` lines. Blank lines are ignored;
    /// duplicate words accumulate ordered variants.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lex = Lexicon::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (word, phones) = line.split_once('\t').ok_or_else(|| TextError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: "expected `word<TAB>phones`".into(),
            })?;
            let phones: Vec<String> = phones.split_whitespace().map(str::to_string).collect();
            if word.is_empty() || phones.is_empty() {
                return Err(TextError::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    detail: "empty word or pronunciation".into(),
                });
            }
            lex.add(word, phones)?;
        }
        Ok(lex)
    }
}

/// Concatenated phonemization of `words`: the first lexicon pronunciation
/// when present, otherwise the fallback converter's output. Errors if any
/// word produces zero phonemes — that signals a malformed token.
pub fn phonemize(words: &[String], lex: &Lexicon, fallback: &dyn G2p) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for w in words {
        let phones: Vec<String> = match lex.first(w) {
            Some(p) => p.to_vec(),
            None => fallback.phones(w),
        };
        if phones.is_empty() {
            return Err(TextError::ZeroPhonemes(w.clone()));
        }
        out.extend(phones);
    }
    Ok(out)
}

/// Like [`phonemize`] but tolerant: a word that produces zero phonemes
/// simply contributes nothing. Corpus preparation uses this so one stray
/// digit string does not reject an otherwise fine utterance; utterances
/// with no phonemes at all are caught by the corpus filter.
pub fn phonemize_lenient(words: &[String], lex: &Lexicon, fallback: &dyn G2p) -> Vec<String> {
    let mut out = Vec::new();
    for w in words {
        match lex.first(w) {
            Some(p) => out.extend(p.to_vec()),
            None => out.extend(fallback.phones(w)),
        }
    }
    out
}
