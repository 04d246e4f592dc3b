//! Frequency-ordered vocabularies with fixed reserved indices.

use crate::error::{Result, TextError};
use std::collections::HashMap;
use std::path::Path;

/// Token ↔ index bijection with four reserved entries at fixed positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

impl Vocab {
    /// Builds from token counts: keeps tokens with count ≥ `min_count`,
    /// ordered by descending count with alphabetical tie-breaks, after the
    /// four reserved entries. Errors on an empty corpus.
    pub fn build<'a, I>(tokens: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut saw_any = false;
        for t in tokens {
            saw_any = true;
            *counts.entry(t).or_insert(0) += 1;
        }
        if !saw_any {
            return Err(TextError::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && !RESERVED.contains(&t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut v = Self::reserved_only();
        for (t, _) in kept {
            v.push(t.to_string());
        }
        Ok(v)
    }

    fn reserved_only() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for r in RESERVED {
            v.push(r.to_string());
        }
        v
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    /// Index of `token`, or [`UNK`] when absent.
    pub fn encode(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn encode_all(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }

    /// Token at `idx`, if in range.
    pub fn decode(&self, idx: u32) -> Option<&str> {
        self.tokens.get(idx as usize).map(|s| s.as_str())
    }

    /// Total size including the four reserved entries.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Writes one token per line, excluding the reserved entries, so the
    /// file index of a line is its vocabulary index minus four.
    pub fn save(&self, path: &Path) -> Result<()> {
        let body: String = self.tokens[RESERVED.len()..]
            .iter()
            .map(|t| format!("{t}\n"))
            .collect();
        std::fs::write(path, body).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut v = Self::reserved_only();
        for (lineno, line) in text.lines().enumerate() {
            let bad = |detail: &str| TextError::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                detail: detail.into(),
            };
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(bad("token is empty or contains whitespace"));
            }
            if v.contains(line) {
                return Err(bad("duplicate token"));
            }
            v.push(line.to_string());
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn reserved_entries_sit_at_fixed_indices() {
        let v = Vocab::build(toks("a a b"), 1).unwrap();
        assert_eq!(v.decode(PAD), Some("<pad>"));
        assert_eq!(v.decode(BOS), Some("<bos>"));
        assert_eq!(v.decode(EOS), Some("<eos>"));
        assert_eq!(v.decode(UNK), Some("<unk>"));
        assert_eq!(v.len(), 6);
        assert!(v.contains("a") && v.contains("b"));
    }

    #[test]
    fn min_count_drops_rare_tokens_to_unk() {
        let v = Vocab::build(toks("a a b"), 2).unwrap();
        assert_eq!(v.encode("a"), 4);
        assert_eq!(v.encode("b"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn ordering_is_count_then_alphabetical() {
        let v = Vocab::build(toks("b b c a a z"), 1).unwrap();
        // a and b tie at 2 → alphabetical; c and z tie at 1 → alphabetical.
        assert_eq!(v.decode(4), Some("a"));
        assert_eq!(v.decode(5), Some("b"));
        assert_eq!(v.decode(6), Some("c"));
        assert_eq!(v.decode(7), Some("z"));
    }

    #[test]
    fn deterministic_across_builds() {
        let a = Vocab::build(toks("x y z x q q"), 1).unwrap();
        let b = Vocab::build(toks("x y z x q q"), 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(Vocab::build([], 1), Err(TextError::EmptyCorpus)));
    }

    #[test]
    fn encode_decode_round_trip() {
        let v = Vocab::build(toks("foo bar baz foo"), 1).unwrap();
        for idx in 0..v.len() as u32 {
            let tok = v.decode(idx).unwrap().to_string();
            assert_eq!(v.encode(&tok), idx);
        }
        assert_eq!(v.encode("never-seen"), UNK);
        assert_eq!(v.decode(999), None);
    }

    #[test]
    fn file_round_trip_preserves_indices() {
        let v = Vocab::build(toks("foo bar baz foo"), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("words.vocab");
        v.save(&path).unwrap();
        let loaded = Vocab::load(&path).unwrap();
        assert_eq!(v, loaded);
        // Reserved entries are not in the file.
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), v.len() - 4);
        assert!(!text.contains("<pad>"));
    }

    #[test]
    fn load_rejects_duplicates_and_whitespace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.vocab");
        std::fs::write(&path, "a\na\n").unwrap();
        assert!(Vocab::load(&path).is_err());
        std::fs::write(&path, "a b\n").unwrap();
        assert!(Vocab::load(&path).is_err());
    }
}
