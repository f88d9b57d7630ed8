//! Synthetic corpora for experiments and benchmarks.
//!
//! The main generator is an affect-conditioned bigram process with two
//! topic-emotion regimes over one shared vocabulary. Every utterance picks a
//! regime, opens with an emotion word from that regime's dictionary entries
//! (so keyword spotting can identify the regime causally), and then walks a
//! regime-specific bigram chain over content and neutral words. A model that
//! exploits the spotted affect categories has a genuine edge over one that
//! must rediscover the regime from raw context alone.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Utterance;

/// Shared function words; none of them match the starter lexicon.
pub const NEUTRAL_WORDS: [&str; 30] = [
    "the", "a", "it", "is", "was", "and", "to", "of", "in", "we", "i", "you", "they", "said",
    "told", "saw", "went", "day", "time", "thing", "place", "people", "home", "town", "again",
    "then", "about", "really", "very", "there",
];

/// Positive-regime emotion markers; every one matches `PositiveEmotion` in
/// the starter lexicon.
pub const POSITIVE_MARKERS: [&str; 12] = [
    "happy", "joy", "love", "glad", "smile", "laugh", "hope", "sweet", "peace", "fun", "good",
    "wonderful",
];

/// Negative-regime emotion markers; each matches `NegativeEmotion` (some
/// with an anger/sadness/anxiety subcategory too) in the starter lexicon.
pub const NEGATIVE_MARKERS: [&str; 12] = [
    "sad", "angry", "hate", "fear", "war", "fight", "worry", "afraid", "awful", "terrible",
    "hurt", "bad",
];

/// Positive-topic content words; deliberately absent from the lexicon.
pub const POSITIVE_CONTENT: [&str; 20] = [
    "picnic", "party", "garden", "music", "beach", "holiday", "gift", "cake", "song", "summer",
    "flowers", "puppy", "dance", "parade", "circus", "carnival", "orchard", "meadow", "honey",
    "rainbow",
];

/// Negative-topic content words; also absent from the lexicon.
pub const NEGATIVE_CONTENT: [&str; 20] = [
    "storm", "debt", "mud", "rust", "smoke", "prison", "taxes", "winter", "traffic", "repair",
    "hospital", "funeral", "ashes", "rubble", "sirens", "drought", "famine", "plague", "thorns",
    "fog",
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Regime {
    Positive,
    Negative,
}

impl Regime {
    fn markers(self) -> &'static [&'static str] {
        match self {
            Regime::Positive => &POSITIVE_MARKERS,
            Regime::Negative => &NEGATIVE_MARKERS,
        }
    }

    fn content(self) -> &'static [&'static str] {
        match self {
            Regime::Positive => &POSITIVE_CONTENT,
            Regime::Negative => &NEGATIVE_CONTENT,
        }
    }
}

/// Generate utterances from the two-regime bigram process until at least
/// `n_tokens` word tokens have been produced. Deterministic per seed.
///
/// Per utterance: the first token is a regime marker. Afterwards, the next
/// token depends on the class of the previous one. Content words form a
/// ring per regime (content word `k` prefers `k+1`), so predicting the next
/// content word well requires both the previous word and the regime.
/// Lengths run 8..=16 tokens.
pub fn affect_bigram_corpus(n_tokens: usize, seed: u64) -> Vec<Utterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut utterances = Vec::new();
    let mut total = 0usize;
    while total < n_tokens {
        let regime = if rng.gen_bool(0.5) {
            Regime::Positive
        } else {
            Regime::Negative
        };
        let len = rng.gen_range(8..=16);
        let mut tokens: Vec<String> = Vec::with_capacity(len);
        tokens.push(pick(regime.markers(), &mut rng));
        let mut ring_pos: Option<usize> = None;
        while tokens.len() < len {
            let prev_class = classify(regime, tokens.last().expect("non-empty"));
            let roll: f64 = rng.gen();
            let next = match prev_class {
                WordClass::Neutral => {
                    if roll < 0.45 {
                        next_content(regime, &mut ring_pos, &mut rng)
                    } else if roll < 0.80 {
                        pick(&NEUTRAL_WORDS, &mut rng)
                    } else {
                        pick(regime.markers(), &mut rng)
                    }
                }
                WordClass::Content => {
                    if roll < 0.50 {
                        next_content(regime, &mut ring_pos, &mut rng)
                    } else if roll < 0.90 {
                        pick(&NEUTRAL_WORDS, &mut rng)
                    } else {
                        pick(regime.markers(), &mut rng)
                    }
                }
                WordClass::Marker => {
                    if roll < 0.60 {
                        next_content(regime, &mut ring_pos, &mut rng)
                    } else {
                        pick(&NEUTRAL_WORDS, &mut rng)
                    }
                }
            };
            tokens.push(next);
        }
        total += tokens.len();
        utterances.push(Utterance::new(tokens).expect("synthetic tokens are valid"));
    }
    utterances
}

enum WordClass {
    Neutral,
    Content,
    Marker,
}

fn classify(regime: Regime, word: &str) -> WordClass {
    if regime.content().contains(&word) {
        WordClass::Content
    } else if regime.markers().contains(&word) {
        WordClass::Marker
    } else {
        WordClass::Neutral
    }
}

fn pick<R: Rng>(words: &[&str], rng: &mut R) -> String {
    words[rng.gen_range(0..words.len())].to_string()
}

/// Ring transition: continue from the previous content position, or enter
/// the ring uniformly on first use within the utterance.
fn next_content<R: Rng>(regime: Regime, ring_pos: &mut Option<usize>, rng: &mut R) -> String {
    let content = regime.content();
    let next = match *ring_pos {
        Some(k) => (k + 1) % content.len(),
        None => rng.gen_range(0..content.len()),
    };
    *ring_pos = Some(next);
    content[next].to_string()
}

/// A fixed ten-utterance corpus over a tiny vocabulary, for memorization
/// runs. `reversed` flips the dominant word order so two variants share a
/// vocabulary but disagree on bigram statistics.
pub fn toy_corpus(reversed: bool) -> Vec<Utterance> {
    let lines = [
        "the cat sat on the mat",
        "the dog ran in the park",
        "a bird sang in the tree",
        "the cat saw the bird",
        "the dog saw the cat",
        "a child fed the bird",
        "the child ran to the park",
        "a cat slept on the mat",
        "the bird flew to the tree",
        "the child sat in the park",
    ];
    lines
        .iter()
        .map(|l| {
            let mut tokens: Vec<String> = l.split_whitespace().map(str::to_string).collect();
            if reversed {
                tokens.reverse();
            }
            Utterance::new(tokens).expect("toy tokens are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{AffectCategory, AffectLexicon};

    fn starter_lexicon() -> AffectLexicon {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/affect_lexicon.tsv");
        AffectLexicon::load(path).unwrap()
    }

    #[test]
    fn corpus_reaches_requested_size_and_is_deterministic() {
        let a = affect_bigram_corpus(5_000, 11);
        let b = affect_bigram_corpus(5_000, 11);
        let total: usize = a.iter().map(Utterance::len).sum();
        assert!(total >= 5_000);
        assert_eq!(a, b);
        let c = affect_bigram_corpus(5_000, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn markers_match_their_regime_categories() {
        let lex = starter_lexicon();
        for w in POSITIVE_MARKERS {
            let cats = lex.match_token(w);
            assert!(
                cats.contains(AffectCategory::PositiveEmotion),
                "{w} should be PositiveEmotion"
            );
            assert!(
                !cats.contains(AffectCategory::NegativeEmotion),
                "{w} should not be NegativeEmotion"
            );
        }
        for w in NEGATIVE_MARKERS {
            let cats = lex.match_token(w);
            assert!(
                cats.contains(AffectCategory::NegativeEmotion),
                "{w} should be NegativeEmotion"
            );
            assert!(
                !cats.contains(AffectCategory::PositiveEmotion),
                "{w} should not be PositiveEmotion"
            );
        }
    }

    #[test]
    fn neutral_and_content_words_are_uncolored() {
        let lex = starter_lexicon();
        for w in NEUTRAL_WORDS
            .iter()
            .chain(POSITIVE_CONTENT.iter())
            .chain(NEGATIVE_CONTENT.iter())
        {
            assert!(
                lex.match_token(w).is_empty(),
                "`{w}` unexpectedly matches the lexicon"
            );
        }
    }

    #[test]
    fn every_utterance_opens_with_a_marker() {
        let all_markers: Vec<&str> = POSITIVE_MARKERS
            .iter()
            .chain(NEGATIVE_MARKERS.iter())
            .copied()
            .collect();
        for u in affect_bigram_corpus(2_000, 3) {
            assert!(all_markers.contains(&u.tokens()[0].as_str()));
            assert!(u.len() >= 8 && u.len() <= 16);
        }
    }

    #[test]
    fn regimes_do_not_mix_within_an_utterance() {
        for u in affect_bigram_corpus(3_000, 5) {
            let pos = u.tokens().iter().any(|t| {
                POSITIVE_MARKERS.contains(&t.as_str()) || POSITIVE_CONTENT.contains(&t.as_str())
            });
            let neg = u.tokens().iter().any(|t| {
                NEGATIVE_MARKERS.contains(&t.as_str()) || NEGATIVE_CONTENT.contains(&t.as_str())
            });
            assert!(!(pos && neg), "mixed regime in {:?}", u.tokens());
        }
    }

    #[test]
    fn toy_corpus_variants_share_a_vocabulary() {
        let fwd = toy_corpus(false);
        let rev = toy_corpus(true);
        assert_eq!(fwd.len(), 10);
        let vocab_of = |utts: &[Utterance]| {
            let mut words: Vec<String> = utts
                .iter()
                .flat_map(|u| u.tokens().iter().cloned())
                .collect();
            words.sort();
            words.dedup();
            words
        };
        assert_eq!(vocab_of(&fwd), vocab_of(&rev));
        assert!(vocab_of(&fwd).len() <= 30);
    }
}
