//! Synthetic noisy channels: enumerable word-level corruption models used
//! to manufacture parallel corpora whose exact output distribution is
//! known.
//!
//! A channel file holds a pool of clean sentences and per-token corruption
//! rules, one directive per line (`#` comments and blank lines ignored):
//!
//! ```text
//! SRC do you take any other medications
//! SUB medications→medicine+cations 0.4
//! CSUB the pain→pane 0.5
//! DEL do 0.3
//! INS uh 0.1
//! ```
//!
//! Processing is independent per source position, left to right. For the
//! token at position i: first the token is deleted with its `DEL`
//! probability; otherwise one substitution is drawn among the applicable
//! rules — `CSUB` rules whose `left` equals the *source* token at i−1,
//! plus the token's `SUB` rules — or the token is kept with the leftover
//! probability. Afterwards, at most one `INS` token is emitted with its
//! rule probability. Substitution targets may be multi-word, written with
//! `+` separators. Conditioning context on the source (never the output)
//! keeps positions independent, so the exact output distribution is the
//! product of small per-position distributions and can be enumerated.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore};

use numkit::rng::stream;
use textprep::RawUtterance;

use crate::error::{CliError, Result};

const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
struct SubRule {
    dst: Vec<String>,
    p: f64,
}

/// A parsed channel: sentence pool plus corruption rules.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Channel {
    sources: Vec<Vec<String>>,
    del: HashMap<String, f64>,
    sub: HashMap<String, Vec<SubRule>>,
    /// Keyed by (left context token, source token).
    csub: HashMap<(String, String), Vec<SubRule>>,
    ins: Vec<(String, f64)>,
}

impl Channel {
    pub fn parse(text: &str) -> Result<Channel> {
        let mut ch = Channel::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            ch.parse_line(line).map_err(|e| {
                CliError::validation(format!("channel line {}: {e}", lineno + 1))
            })?;
        }
        ch.validate_masses()?;
        Ok(ch)
    }

    pub fn read(path: &Path) -> Result<Channel> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::validation(format!("cannot read channel {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    fn parse_line(&mut self, line: &str) -> std::result::Result<(), String> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "SRC" => {
                if fields.len() < 2 {
                    return Err("SRC needs at least one word".into());
                }
                self.sources.push(fields[1..].iter().map(|s| s.to_string()).collect());
            }
            "DEL" => {
                let [tok, p] = two(&fields, "DEL tok p")?;
                let p = prob(p)?;
                if self.del.insert(tok.to_string(), p).is_some() {
                    return Err(format!("duplicate DEL rule for {tok:?}"));
                }
            }
            "INS" => {
                let [tok, p] = two(&fields, "INS tok p")?;
                let p = prob(p)?;
                if self.ins.iter().any(|(t, _)| t == tok) {
                    return Err(format!("duplicate INS rule for {tok:?}"));
                }
                self.ins.push((tok.to_string(), p));
            }
            "SUB" => {
                let [pair, p] = two(&fields, "SUB src→dst p")?;
                let (src, dst) = arrow(pair)?;
                let rules = self.sub.entry(src.clone()).or_default();
                if rules.iter().any(|r| r.dst == dst) {
                    return Err(format!("duplicate SUB rule for {src:?}"));
                }
                rules.push(SubRule { dst, p: prob(p)? });
            }
            "CSUB" => {
                if fields.len() != 4 {
                    return Err("expected `CSUB left src→dst p`".into());
                }
                let (src, dst) = arrow(fields[2])?;
                let key = (fields[1].to_string(), src);
                let rules = self.csub.entry(key.clone()).or_default();
                if rules.iter().any(|r| r.dst == dst) {
                    return Err(format!("duplicate CSUB rule for {:?} {:?}", key.0, key.1));
                }
                rules.push(SubRule { dst, p: prob(fields[3])? });
            }
            other => return Err(format!("unknown directive {other:?}")),
        }
        Ok(())
    }

    /// Probability-mass sanity: each token's substitution alternatives
    /// (with any single context) and the insertion alternatives must fit
    /// inside one unit of probability.
    fn validate_masses(&self) -> Result<()> {
        let bad = |what: String| Err(CliError::validation(what));
        let sub_mass = |src: &str| -> f64 {
            self.sub.get(src).map_or(0.0, |rs| rs.iter().map(|r| r.p).sum())
        };
        for src in self.sub.keys() {
            if sub_mass(src) > 1.0 + MASS_TOL {
                return bad(format!("SUB rules for {src:?} have total probability > 1"));
            }
        }
        for ((left, src), rules) in &self.csub {
            let mass: f64 = rules.iter().map(|r| r.p).sum();
            if mass + sub_mass(src) > 1.0 + MASS_TOL {
                return bad(format!(
                    "substitution rules for {src:?} after {left:?} have total probability > 1"
                ));
            }
        }
        let ins_mass: f64 = self.ins.iter().map(|(_, p)| p).sum();
        if ins_mass > 1.0 + MASS_TOL {
            return bad("INS rules have total probability > 1".into());
        }
        Ok(())
    }

    pub fn sources(&self) -> &[Vec<String>] {
        &self.sources
    }

    /// The substitution alternatives for one source position: context
    /// rules first, then context-free ones, in file order.
    fn applicable_subs(&self, left: Option<&str>, tok: &str) -> Vec<&SubRule> {
        let mut subs = Vec::new();
        if let Some(l) = left {
            if let Some(rules) = self.csub.get(&(l.to_string(), tok.to_string())) {
                subs.extend(rules.iter());
            }
        }
        if let Some(rules) = self.sub.get(tok) {
            subs.extend(rules.iter());
        }
        subs
    }

    /// Corrupts one sentence. Draws, per position: a deletion uniform
    /// (when a DEL rule applies), a substitution uniform (when any rule
    /// applies), an insertion uniform (when INS rules exist).
    pub fn apply(&self, words: &[String], rng: &mut dyn RngCore) -> Vec<String> {
        let mut out = Vec::new();
        for (i, tok) in words.iter().enumerate() {
            let left = i.checked_sub(1).map(|j| words[j].as_str());
            let p_del = self.del.get(tok).copied().unwrap_or(0.0);
            let deleted = p_del > 0.0 && rng.gen::<f64>() < p_del;
            if !deleted {
                let subs = self.applicable_subs(left, tok);
                let mut replaced = false;
                if !subs.is_empty() {
                    let u: f64 = rng.gen();
                    let mut cum = 0.0;
                    for rule in &subs {
                        cum += rule.p;
                        if u < cum {
                            out.extend(rule.dst.iter().cloned());
                            replaced = true;
                            break;
                        }
                    }
                }
                if !replaced {
                    out.push(tok.clone());
                }
            }
            if !self.ins.is_empty() {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                for (t, p) in &self.ins {
                    cum += p;
                    if u < cum {
                        out.push(t.clone());
                        break;
                    }
                }
            }
        }
        out
    }

    /// The exact output distribution for one sentence: every producible
    /// word sequence with its probability, most probable first (ties in
    /// lexicographic order). Probabilities sum to 1.
    pub fn enumerate(&self, words: &[String]) -> Vec<(Vec<String>, f64)> {
        let mut acc: HashMap<Vec<String>, f64> = HashMap::new();
        acc.insert(Vec::new(), 1.0);
        for (i, tok) in words.iter().enumerate() {
            let left = i.checked_sub(1).map(|j| words[j].as_str());
            let frag = self.fragment(left, tok);
            let mut next: HashMap<Vec<String>, f64> = HashMap::new();
            for (prefix, pp) in &acc {
                for (suffix, sp) in &frag {
                    let mut seq = prefix.clone();
                    seq.extend(suffix.iter().cloned());
                    *next.entry(seq).or_insert(0.0) += pp * sp;
                }
            }
            acc = next;
        }
        let mut out: Vec<(Vec<String>, f64)> = acc.into_iter().collect();
        out.sort_unstable_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    /// The distribution of output fragments for a single source position.
    fn fragment(&self, left: Option<&str>, tok: &str) -> Vec<(Vec<String>, f64)> {
        let p_del = self.del.get(tok).copied().unwrap_or(0.0);
        let subs = self.applicable_subs(left, tok);
        let mut base: Vec<(Vec<String>, f64)> = Vec::new();
        if p_del > 0.0 {
            base.push((Vec::new(), p_del));
        }
        let mut sub_mass = 0.0;
        for rule in &subs {
            base.push((rule.dst.clone(), (1.0 - p_del) * rule.p));
            sub_mass += rule.p;
        }
        let keep = (1.0 - p_del) * (1.0 - sub_mass);
        if keep > 0.0 {
            base.push((vec![tok.to_string()], keep));
        }

        let mut ins: Vec<(Vec<String>, f64)> = Vec::new();
        let ins_mass: f64 = self.ins.iter().map(|(_, p)| p).sum();
        if ins_mass < 1.0 {
            ins.push((Vec::new(), 1.0 - ins_mass));
        }
        for (t, p) in &self.ins {
            ins.push((vec![t.clone()], *p));
        }

        let mut merged: HashMap<Vec<String>, f64> = HashMap::new();
        for (b, bp) in &base {
            for (s, sp) in &ins {
                let mut seq = b.clone();
                seq.extend(s.iter().cloned());
                *merged.entry(seq).or_insert(0.0) += bp * sp;
            }
        }
        merged.into_iter().filter(|(_, p)| *p > 0.0).collect()
    }
}

fn two<'a>(fields: &[&'a str], usage: &str) -> std::result::Result<[&'a str; 2], String> {
    if fields.len() != 3 {
        return Err(format!("expected `{usage}`"));
    }
    Ok([fields[1], fields[2]])
}

fn prob(s: &str) -> std::result::Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("bad probability {s:?}"))?;
    if !(p.is_finite() && 0.0 < p && p <= 1.0) {
        return Err(format!("probability {s} is not in (0, 1]"));
    }
    Ok(p)
}

fn arrow(pair: &str) -> std::result::Result<(String, Vec<String>), String> {
    let (src, dst) = pair
        .split_once('→')
        .or_else(|| pair.split_once("->"))
        .ok_or_else(|| format!("{pair:?} is missing the src→dst arrow"))?;
    if src.is_empty() {
        return Err(format!("{pair:?} has an empty source token"));
    }
    let dst: Vec<String> = dst.split('+').map(str::to_string).collect();
    if dst.iter().any(String::is_empty) {
        return Err(format!("{pair:?} has an empty target word"));
    }
    Ok((src.to_string(), dst))
}

/// Generates a parallel corpus by drawing sentences uniformly from the
/// channel's pool and corrupting each with its own RNG stream. Ids are
/// `synth-NNNNNN` in generation order.
pub fn synth_corpus(channel: &Channel, size: usize, seed: u64) -> Result<Vec<RawUtterance>> {
    if channel.sources().is_empty() {
        return Err(CliError::validation(
            "channel has no SRC sentences to draw from",
        ));
    }
    let mut out = Vec::with_capacity(size);
    for i in 0..size {
        let mut rng = stream(seed, &["synthcorpus", &i.to_string()]);
        let sentence = &channel.sources()[rng.gen_range(0..channel.sources().len())];
        let recognized = channel.apply(sentence, &mut rng);
        out.push(RawUtterance {
            id: format!("synth-{i:06}"),
            true_text: sentence.join(" "),
            recognized_text: Some(recognized.join(" ")),
        });
    }
    Ok(out)
}

/// Renders the enumerated distribution for debugging and oracle files.
pub fn render_distribution(dist: &[(Vec<String>, f64)]) -> String {
    let mut out = String::new();
    for (seq, p) in dist {
        writeln!(out, "{:.9}\t{}", p, seq.join(" ")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn find(dist: &[(Vec<String>, f64)], seq: &str) -> f64 {
        let target = words(seq);
        dist.iter()
            .find(|(s, _)| *s == target)
            .map(|(_, p)| *p)
            .unwrap_or_else(|| panic!("{seq:?} not in distribution"))
    }

    #[test]
    fn parses_every_directive() {
        let ch = Channel::parse(
            "# demo\n\
             SRC do you take any other medications\n\
             SUB medications→medicine+cations 0.4\n\
             SUB medications->meds 0.1\n\
             CSUB the pain→pane 0.5\n\
             DEL do 0.3\n\
             INS uh 0.1\n",
        )
        .unwrap();
        assert_eq!(ch.sources().len(), 1);
        assert_eq!(ch.sub["medications"].len(), 2);
        assert_eq!(ch.sub["medications"][0].dst, words("medicine cations"));
        assert_eq!(ch.csub[&("the".to_string(), "pain".to_string())].len(), 1);
        assert_eq!(ch.del["do"], 0.3);
        assert_eq!(ch.ins, vec![("uh".to_string(), 0.1)]);
    }

    #[test]
    fn rejects_malformed_and_overweight_rules() {
        for bad in [
            "FROB a 0.1",
            "SUB a 0.1",
            "SUB a→b nope",
            "SUB a→b 0",
            "SUB a→b 1.5",
            "SUB →b 0.1",
            "SUB a→ 0.1",
            "DEL a 0.5\nDEL a 0.4",
            "SUB a→b 0.6\nSUB a→b 0.3",
            "SUB a→b 0.6\nSUB a→c 0.5",
            "CSUB l a→b 0.6\nSUB a→c 0.5",
            "INS u 0.7\nINS v 0.4",
            "SRC",
        ] {
            let err = Channel::parse(bad).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad:?} should fail validation");
        }
        // Context rules with disjoint contexts don't stack.
        Channel::parse("CSUB l a→b 0.6\nCSUB m a→c 0.6").unwrap();
    }

    #[test]
    fn enumerates_a_single_substitution() {
        let ch = Channel::parse("SUB b→x 0.5").unwrap();
        let dist = ch.enumerate(&words("a b"));
        assert_eq!(dist.len(), 2);
        assert!((find(&dist, "a b") - 0.5).abs() < 1e-12);
        assert!((find(&dist, "a x") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn merges_coinciding_outputs() {
        // "b" can arise two ways: delete the a then insert a b
        // (0.5 · 0.5 = 0.25), or substitute a→b and insert nothing
        // (0.5 · 0.25 … the substitution draw happens on the kept token).
        let ch = Channel::parse("DEL a 0.5\nINS b 0.5\nSUB a→b 0.5").unwrap();
        let dist = ch.enumerate(&words("a"));
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((find(&dist, "b") - 0.375).abs() < 1e-12);
        assert!((find(&dist, "") - 0.25).abs() < 1e-12);
        assert!((find(&dist, "a") - 0.125).abs() < 1e-12);
        assert!((find(&dist, "b b") - 0.125).abs() < 1e-12);
        assert!((find(&dist, "a b") - 0.125).abs() < 1e-12);
    }

    #[test]
    fn context_rules_condition_on_the_source_token() {
        let ch = Channel::parse("CSUB the pain→pane 1.0\nSUB the→duh 0.5").unwrap();
        // After the source word "the", pain always becomes pane — even if
        // "the" itself was substituted away in the output.
        let dist = ch.enumerate(&words("the pain"));
        assert_eq!(dist.len(), 2);
        assert!((find(&dist, "the pane") - 0.5).abs() < 1e-12);
        assert!((find(&dist, "duh pane") - 0.5).abs() < 1e-12);
        // Without the context, the rule is silent.
        let dist = ch.enumerate(&words("pain"));
        assert_eq!(dist.len(), 1);
        assert!((find(&dist, "pain") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_sentence_passes_through() {
        let ch = Channel::parse("SUB a→b 0.5\nINS u 0.5").unwrap();
        let dist = ch.enumerate(&[]);
        assert_eq!(dist, vec![(vec![], 1.0)]);
        let mut rng = stream(0, &["t"]);
        assert!(ch.apply(&[], &mut rng).is_empty());
    }

    #[test]
    fn sampling_matches_enumeration() {
        let ch = Channel::parse(
            "SUB b→x 0.3\nSUB b→y+z 0.2\nDEL a 0.25\nINS uh 0.1\nCSUB a b→q 0.2",
        )
        .unwrap();
        let sentence = words("a b c");
        let dist = ch.enumerate(&sentence);
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);

        let n = 40_000usize;
        let mut counts: HashMap<Vec<String>, usize> = HashMap::new();
        for i in 0..n {
            let mut rng = stream(17, &["mc", &i.to_string()]);
            *counts.entry(ch.apply(&sentence, &mut rng)).or_insert(0) += 1;
        }
        // Every sampled output is in the enumerated support, and every
        // enumerated probability is matched within 4 sigma.
        for seq in counts.keys() {
            assert!(dist.iter().any(|(s, _)| s == seq), "{seq:?} not enumerated");
        }
        for (seq, p) in &dist {
            let observed = counts.get(seq).copied().unwrap_or(0) as f64;
            let expected = p * n as f64;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (observed - expected).abs() <= 4.0 * sigma + 1.0,
                "{seq:?}: observed {observed}, expected {expected:.1} ± {sigma:.1}"
            );
        }
    }

    #[test]
    fn corpus_generation_is_deterministic_and_sized() {
        let ch = Channel::parse("SRC a b\nSRC c d e\nSUB a→x 0.5").unwrap();
        let first = synth_corpus(&ch, 50, 3).unwrap();
        assert_eq!(first.len(), 50);
        assert_eq!(first[0].id, "synth-000000");
        assert_eq!(synth_corpus(&ch, 50, 3).unwrap(), first);
        assert_ne!(synth_corpus(&ch, 50, 4).unwrap(), first);
        // Both pool sentences appear.
        assert!(first.iter().any(|u| u.true_text == "a b"));
        assert!(first.iter().any(|u| u.true_text == "c d e"));
        // No SRC sentences → validation error.
        let empty = Channel::parse("SUB a→b 0.5").unwrap();
        assert_eq!(synth_corpus(&empty, 5, 0).unwrap_err().exit_code(), 2);
    }
}
