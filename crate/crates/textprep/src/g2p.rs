//! Fallback grapheme-to-phoneme conversion for out-of-lexicon words.

/// A deterministic word → phoneme-sequence converter.
///
/// Implementations must be pure: the same word always yields the same
/// phoneme sequence. A word may legitimately produce no phonemes (e.g. it
/// consists entirely of digits); callers decide whether that is an error.
pub trait G2p {
    fn phones(&self, word: &str) -> Vec<String>;
}

/// Table-driven English-oriented letter/digraph converter.
///
/// The longest table entry wins at each position (digraphs before single
/// letters), scanning left to right. Characters without a table entry —
/// digits, stray symbols, accented letters — contribute nothing. The symbol
/// set is an uppercase ARPAbet-style inventory, matching what pronunciation
/// lexicons typically use, so lexicon and fallback outputs mix cleanly.
#[derive(Debug, Default, Clone, Copy)]
pub struct TableG2p;

/// Digraphs, checked before single letters. Order within the table is
/// irrelevant; greedy longest-match-first scanning is what matters.
const DIGRAPHS: &[(&str, &[&str])] = &[
    ("ai", &["EY"]),
    ("ar", &["AA", "R"]),
    ("ay", &["EY"]),
    ("ch", &["CH"]),
    ("ck", &["K"]),
    ("ea", &["IY"]),
    ("ee", &["IY"]),
    ("er", &["ER"]),
    ("gh", &["G"]),
    ("ir", &["ER"]),
    ("ng", &["NG"]),
    ("oa", &["OW"]),
    ("oi", &["OY"]),
    ("oo", &["UW"]),
    ("or", &["AO", "R"]),
    ("ou", &["AW"]),
    ("ow", &["AW"]),
    ("oy", &["OY"]),
    ("ph", &["F"]),
    ("qu", &["K", "W"]),
    ("sh", &["SH"]),
    ("th", &["TH"]),
    ("ur", &["ER"]),
    ("wh", &["W"]),
];

const LETTERS: &[(char, &[&str])] = &[
    ('a', &["AE"]),
    ('b', &["B"]),
    ('c', &["K"]),
    ('d', &["D"]),
    ('e', &["EH"]),
    ('f', &["F"]),
    ('g', &["G"]),
    ('h', &["HH"]),
    ('i', &["IH"]),
    ('j', &["JH"]),
    ('k', &["K"]),
    ('l', &["L"]),
    ('m', &["M"]),
    ('n', &["N"]),
    ('o', &["AO"]),
    ('p', &["P"]),
    ('q', &["K"]),
    ('r', &["R"]),
    ('s', &["S"]),
    ('t', &["T"]),
    ('u', &["AH"]),
    ('v', &["V"]),
    ('w', &["W"]),
    ('x', &["K", "S"]),
    ('y', &["Y"]),
    ('z', &["Z"]),
];

impl G2p for TableG2p {
    fn phones(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            if i + 1 < chars.len() {
                let pair: String = chars[i..i + 2].iter().collect();
                if let Some((_, phones)) = DIGRAPHS.iter().find(|(d, _)| *d == pair) {
                    out.extend(phones.iter().map(|p| p.to_string()));
                    i += 2;
                    continue;
                }
            }
            if let Some((_, phones)) = LETTERS.iter().find(|(l, _)| *l == chars[i]) {
                out.extend(phones.iter().map(|p| p.to_string()));
            }
            i += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digraphs_beat_single_letters() {
        let g = TableG2p;
        assert_eq!(g.phones("ship"), ["SH", "IH", "P"]);
        assert_eq!(g.phones("thing"), ["TH", "IH", "NG"]);
    }

    #[test]
    fn scans_left_to_right_greedily() {
        let g = TableG2p;
        // "oo" consumes both o's; the following "r" is a lone letter.
        assert_eq!(g.phones("oor"), ["UW", "R"]);
    }

    #[test]
    fn every_ascii_letter_maps() {
        let g = TableG2p;
        for c in 'a'..='z' {
            assert!(!g.phones(&c.to_string()).is_empty(), "letter {c}");
        }
    }

    #[test]
    fn unmapped_characters_contribute_nothing() {
        let g = TableG2p;
        assert_eq!(g.phones("100"), Vec::<String>::new());
        assert_eq!(g.phones("a1b"), ["AE", "B"]);
        assert_eq!(g.phones("don't"), ["D", "AO", "N", "T"]);
    }

    #[test]
    fn deterministic_across_calls() {
        let g = TableG2p;
        assert_eq!(g.phones("zzyq"), g.phones("zzyq"));
        assert_eq!(g.phones("zzyq"), ["Z", "Z", "Y", "K"]);
    }
}
