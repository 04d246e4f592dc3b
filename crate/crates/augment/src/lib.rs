//! Train-time corpus transmutation: randomly replacing clean-text examples
//! with hallucinated ASR output so downstream consumers see realistic
//! errors.
//!
//! Each example is independently replaced with probability
//! [`AugmentPolicy::rate`]; the replacement is one alternative drawn from
//! an [`AltSource`] (ancestral model sample or a precomputed N-best list).
//! Replaced examples get the drawn text in their recognized field; ids and
//! true text are never touched, and non-replaced examples pass through
//! byte-identical. Randomness comes from per-example streams, so a view is
//! a pure function of (corpus, policy, epoch) and examples could be
//! processed in any order.

use std::collections::HashMap;

use rand::{Rng, RngCore};

use decoding::NBestList;
use numkit::rng::stream;
use textprep::RawUtterance;

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("sample rate {0} is not in [0, 1]")]
    BadRate(f64),

    #[error("no errorful alternatives available for utterance {id:?}")]
    NoHypotheses { id: String },

    /// For [`AltSource`] implementations whose draws can fail for reasons
    /// beyond missing data (a model error, an I/O problem, …).
    #[error("drawing an alternative for utterance {id:?} failed: {detail}")]
    SourceFailed { id: String, detail: String },
}

pub type Result<T> = std::result::Result<T, AugmentError>;

/// How aggressively and how often to transmute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    /// Probability that any given example is replaced.
    pub rate: f64,
    /// Redraw the selection and the alternatives on every epoch; when
    /// off, every epoch sees the same view.
    pub resample_each_epoch: bool,
    pub seed: u64,
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(AugmentError::BadRate(self.rate));
        }
        Ok(())
    }
}

/// Something that can draw one errorful alternative for an utterance.
pub trait AltSource {
    fn draw(&mut self, utt: &RawUtterance, rng: &mut dyn RngCore) -> Result<Vec<String>>;
}

/// Draws uniformly from precomputed N-best lists, keyed by utterance id.
pub struct NBestSource {
    by_id: HashMap<String, Vec<Vec<String>>>,
}

impl NBestSource {
    pub fn new(lists: &[NBestList]) -> Self {
        let by_id = lists
            .iter()
            .map(|l| {
                let hyps = l.entries.iter().map(|e| e.words.clone()).collect();
                (l.id.clone(), hyps)
            })
            .collect();
        NBestSource { by_id }
    }
}

impl AltSource for NBestSource {
    fn draw(&mut self, utt: &RawUtterance, rng: &mut dyn RngCore) -> Result<Vec<String>> {
        let missing = || AugmentError::NoHypotheses { id: utt.id.clone() };
        let hyps = self.by_id.get(&utt.id).ok_or_else(missing)?;
        if hyps.is_empty() {
            return Err(missing());
        }
        Ok(hyps[rng.gen_range(0..hyps.len())].clone())
    }
}

/// With probability `rate`, replaces the utterance's recognized text with
/// one drawn alternative; otherwise returns it unchanged. The boolean
/// reports whether a replacement happened. The source is only consulted
/// when a replacement is actually drawn.
pub fn transmute(
    utt: &RawUtterance,
    source: &mut dyn AltSource,
    rate: f64,
    rng: &mut dyn RngCore,
) -> Result<(RawUtterance, bool)> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(AugmentError::BadRate(rate));
    }
    if rng.gen_range(0.0..1.0) >= rate {
        return Ok((utt.clone(), false));
    }
    let words = source.draw(utt, rng)?;
    Ok((
        RawUtterance {
            id: utt.id.clone(),
            true_text: utt.true_text.clone(),
            recognized_text: Some(words.join(" ")),
        },
        true,
    ))
}

/// One epoch's view of an augmented corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochView {
    /// The corpus with this epoch's transmutations applied, input order.
    pub utterances: Vec<RawUtterance>,
    /// Ids of the replaced examples, in corpus order (the sidecar).
    pub transmuted: Vec<String>,
}

/// Produces the view of `corpus` for the given epoch. Every example uses
/// its own RNG stream derived from the policy seed and its id — plus the
/// epoch when per-epoch resampling is on, so successive epochs redraw
/// both the selection and the alternatives.
pub fn augment_corpus(
    corpus: &[RawUtterance],
    source: &mut dyn AltSource,
    policy: &AugmentPolicy,
    epoch: u32,
) -> Result<EpochView> {
    policy.validate()?;
    let epoch_tag = epoch.to_string();
    let mut view = EpochView {
        utterances: Vec::with_capacity(corpus.len()),
        transmuted: Vec::new(),
    };
    for utt in corpus {
        let mut rng = if policy.resample_each_epoch {
            stream(policy.seed, &["augment", &epoch_tag, &utt.id])
        } else {
            stream(policy.seed, &["augment", &utt.id])
        };
        let (out, replaced) = transmute(utt, source, policy.rate, &mut rng)?;
        if replaced {
            view.transmuted.push(out.id.clone());
        }
        view.utterances.push(out);
    }
    Ok(view)
}

#[cfg(test)]
mod tests {
    use super::*;
    use decoding::NBestEntry;

    fn utt(id: &str, text: &str) -> RawUtterance {
        RawUtterance {
            id: id.into(),
            true_text: text.into(),
            recognized_text: None,
        }
    }

    /// Errors on every draw; proves the rate gate short-circuits.
    struct NoSource;
    impl AltSource for NoSource {
        fn draw(&mut self, utt: &RawUtterance, _: &mut dyn RngCore) -> Result<Vec<String>> {
            Err(AugmentError::NoHypotheses { id: utt.id.clone() })
        }
    }

    /// Always returns the same words.
    struct Fixed(Vec<String>);
    impl AltSource for Fixed {
        fn draw(&mut self, _: &RawUtterance, _: &mut dyn RngCore) -> Result<Vec<String>> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn rate_zero_never_consults_the_source() {
        let corpus: Vec<_> = (0..100).map(|i| utt(&format!("u{i}"), "hello there")).collect();
        let policy = AugmentPolicy { rate: 0.0, resample_each_epoch: true, seed: 1 };
        let view = augment_corpus(&corpus, &mut NoSource, &policy, 0).unwrap();
        assert_eq!(view.utterances, corpus);
        assert!(view.transmuted.is_empty());
    }

    #[test]
    fn rate_one_replaces_everything() {
        let corpus = vec![utt("a", "x y"), utt("b", "z")];
        let policy = AugmentPolicy { rate: 1.0, resample_each_epoch: false, seed: 1 };
        let mut src = Fixed(vec!["oops".into()]);
        let view = augment_corpus(&corpus, &mut src, &policy, 0).unwrap();
        assert_eq!(view.transmuted, ["a", "b"]);
        for (out, orig) in view.utterances.iter().zip(&corpus) {
            assert_eq!(out.id, orig.id);
            assert_eq!(out.true_text, orig.true_text);
            assert_eq!(out.recognized_text.as_deref(), Some("oops"));
        }
    }

    #[test]
    fn invalid_rates_are_rejected() {
        let policy = AugmentPolicy { rate: 1.5, resample_each_epoch: false, seed: 0 };
        assert!(matches!(policy.validate(), Err(AugmentError::BadRate(_))));
        let mut rng = stream(0, &["t"]);
        let err = transmute(&utt("a", "x"), &mut NoSource, -0.1, &mut rng).unwrap_err();
        assert!(matches!(err, AugmentError::BadRate(_)));
    }

    #[test]
    fn missing_hypotheses_surface_by_id() {
        let corpus = vec![utt("present", "x"), utt("absent", "y")];
        let lists = vec![NBestList {
            id: "present".into(),
            entries: vec![NBestEntry { words: vec!["x".into()], score: 0.0 }],
        }];
        let policy = AugmentPolicy { rate: 1.0, resample_each_epoch: false, seed: 3 };
        let err = augment_corpus(&corpus, &mut NBestSource::new(&lists), &policy, 0).unwrap_err();
        assert!(matches!(err, AugmentError::NoHypotheses { id } if id == "absent"));
    }

    #[test]
    fn empty_corpus_yields_an_empty_view() {
        let policy = AugmentPolicy { rate: 0.5, resample_each_epoch: true, seed: 9 };
        let view = augment_corpus(&[], &mut NoSource, &policy, 7).unwrap();
        assert!(view.utterances.is_empty());
        assert!(view.transmuted.is_empty());
    }
}
