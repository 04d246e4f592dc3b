//! Word tokenization: lowercase, strip punctuation, split on whitespace.

use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

fn is_punct(c: char) -> bool {
    c.general_category_group() == GeneralCategoryGroup::Punctuation
}

/// Lowercases, deletes punctuation, and splits on whitespace runs.
///
/// Every Unicode punctuation character is deleted (not replaced by a space),
/// with one exception: an ASCII apostrophe whose immediate neighbours within
/// the chunk are both non-punctuation survives, so contractions like `don't`
/// stay intact while quoting apostrophes disappear. The result may be empty;
/// degenerate examples are handled by the corpus filter, not here.
pub fn tokenize(raw: &str) -> Vec<String> {
    let lowered = raw.to_lowercase();
    let mut words = Vec::new();
    for chunk in lowered.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut word = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if !is_punct(c) {
                word.push(c);
            } else if c == '\'' {
                let prev_ok = i > 0 && !is_punct(chars[i - 1]);
                let next_ok = i + 1 < chars.len() && !is_punct(chars[i + 1]);
                if prev_ok && next_ok {
                    word.push(c);
                }
            }
        }
        if !word.is_empty() {
            words.push(word);
        }
    }
    words
}

/// Like [`tokenize`], but first drops annotation tokens — whitespace-separated
/// chunks fully enclosed in `[...]` or `<...>`, the usual transcript notation
/// for noise, laughter, and silence marks.
pub fn tokenize_transcript(raw: &str) -> Vec<String> {
    let kept: Vec<&str> = raw
        .split_whitespace()
        .filter(|chunk| !is_annotation(chunk))
        .collect();
    tokenize(&kept.join(" "))
}

fn is_annotation(chunk: &str) -> bool {
    (chunk.starts_with('[') && chunk.ends_with(']'))
        || (chunk.starts_with('<') && chunk.ends_with('>'))
}
