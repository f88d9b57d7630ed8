//! Corpus ingestion, vocabulary, deterministic splits, and unrolled
//! minibatch assembly with causally aligned affect vectors.
//!
//! Corpus files are UTF-8 text, one utterance per line, whitespace-separated
//! lowercase tokens. Each token stream terminates every utterance with
//! `<eos>`; out-of-vocabulary words encode to `<unk>`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lexicon::{AffectLexicon, AffectVector, CategorySet};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";
pub const UNK_ID: usize = 0;
pub const EOS_ID: usize = 1;

/// The default train/valid/test ratio.
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.75, 0.15, 0.10);

/// One utterance: a non-empty sequence of lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    tokens: Vec<String>,
}

impl Utterance {
    pub fn new(tokens: Vec<String>) -> Result<Utterance> {
        if tokens.is_empty() {
            return Err(Error::InvalidInput("empty utterance".into()));
        }
        if tokens.iter().any(|t| t.chars().any(char::is_whitespace)) {
            return Err(Error::InvalidInput(
                "utterance token contains whitespace".into(),
            ));
        }
        Ok(Utterance { tokens })
    }

    pub fn from_line(line: &str) -> Result<Utterance> {
        Utterance::new(
            line.split_whitespace()
                .map(|t| t.to_lowercase())
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: utterances are non-empty
    }
}

/// Read a corpus file: one utterance per line, blank lines skipped.
pub fn load_utterances(path: impl AsRef<Path>) -> Result<Vec<Utterance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let utterances: Vec<Utterance> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(Utterance::from_line)
        .collect::<Result<_>>()?;
    if utterances.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: corpus file has no utterances",
            path.display()
        )));
    }
    Ok(utterances)
}

/// Word ↔ dense-id mapping with reserved `<unk>` (0) and `<eos>` (1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from utterances, keeping the `max_size - 2` most frequent words
    /// after the two reserved entries. Frequency ties break by lexicographic
    /// word order so builds are deterministic across platforms.
    pub fn build(utterances: &[Utterance], max_size: usize) -> Result<Vocabulary> {
        if max_size < 2 {
            return Err(Error::InvalidInput(format!(
                "vocabulary max_size {max_size} cannot hold the reserved <unk>/<eos> entries"
            )));
        }
        if utterances.is_empty() {
            return Err(Error::InvalidInput("no utterances".into()));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for u in utterances {
            for t in u.tokens() {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - 2);

        Vocabulary::from_words(
            std::iter::once(UNK.to_string())
                .chain(std::iter::once(EOS.to_string()))
                .chain(ranked.into_iter().map(|(w, _)| w.to_string())),
        )
    }

    /// Build from an explicit id-ordered word list (checkpoint loading).
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Result<Vocabulary> {
        let words: Vec<String> = words.into_iter().collect();
        if words.len() < 2 || words[UNK_ID] != UNK || words[EOS_ID] != EOS {
            return Err(Error::InvalidInput(
                "vocabulary must start with <unk>, <eos>".into(),
            ));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!("duplicate vocabulary word `{w}`")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved entries are always present
    }

    pub fn encode(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn decode(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// One subset's parallel streams: token ids and the raw tokens they came
/// from. Raw tokens are kept because affect extraction must see the original
/// word even when it encodes to `<unk>`.
#[derive(Debug, Clone, Default)]
pub struct SplitPart {
    pub ids: Vec<usize>,
    pub raw: Vec<String>,
}

impl SplitPart {
    fn push_utterance(&mut self, u: &Utterance, vocab: &Vocabulary) {
        for t in u.tokens() {
            self.ids.push(vocab.encode(t));
            self.raw.push(t.clone());
        }
        self.ids.push(EOS_ID);
        self.raw.push(EOS.to_string());
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Encode a whole utterance list as a single evaluation stream.
pub fn part_from_utterances(utterances: &[Utterance], vocab: &Vocabulary) -> SplitPart {
    let mut part = SplitPart::default();
    for u in utterances {
        part.push_utterance(u, vocab);
    }
    part
}

/// Train/valid/test streams plus the utterance counts that produced them.
#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: SplitPart,
    pub valid: SplitPart,
    pub test: SplitPart,
    pub counts: (usize, usize, usize),
}

/// Partition sizes: floor each share, then hand out the remainder by
/// descending fractional part (ties to the earlier subset).
fn partition_counts(n: usize, ratios: (f64, f64, f64)) -> (usize, usize, usize) {
    let shares = [ratios.0, ratios.1, ratios.2];
    let exact: Vec<f64> = shares.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    (counts[0], counts[1], counts[2])
}

/// Deterministically shuffle utterances by seed, then cut contiguous
/// train/valid/test groups. Utterances are never split across subsets.
pub fn split_corpus(
    utterances: &[Utterance],
    vocab: &Vocabulary,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<CorpusSplit> {
    if utterances.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 utterances to split, got {}",
            utterances.len()
        )));
    }
    let (a, b, c) = ratios;
    if a <= 0.0 || b <= 0.0 || c <= 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "split ratios must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }

    let mut order: Vec<usize> = (0..utterances.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let counts = partition_counts(utterances.len(), ratios);
    let mut split = CorpusSplit {
        train: SplitPart::default(),
        valid: SplitPart::default(),
        test: SplitPart::default(),
        counts,
    };
    for (rank, &ui) in order.iter().enumerate() {
        let part = if rank < counts.0 {
            &mut split.train
        } else if rank < counts.0 + counts.1 {
            &mut split.valid
        } else {
            &mut split.test
        };
        part.push_utterance(&utterances[ui], vocab);
    }
    Ok(split)
}

/// Running affect context for one utterance stream: categories accumulate
/// over observed tokens and reset after `<eos>`.
#[derive(Debug, Clone, Default)]
pub struct AffectAccumulator {
    set: CategorySet,
}

impl AffectAccumulator {
    pub fn new() -> AffectAccumulator {
        AffectAccumulator::default()
    }

    /// The affect descriptor of the tokens observed so far in the current
    /// utterance.
    pub fn current(&self) -> AffectVector {
        AffectVector::from(self.set)
    }

    pub fn observe(&mut self, lexicon: &AffectLexicon, token: &str) {
        if token == EOS {
            self.set = CategorySet::EMPTY;
        } else {
            self.set = self.set.union(lexicon.match_token(token));
        }
    }
}

/// For every stream position `p`, the affect vector conditioning the
/// prediction of the token at `p`: extracted from the tokens of the same
/// utterance strictly before `p` (all-zero at every utterance start).
pub fn causal_affect_stream<S: AsRef<str>>(
    raw: &[S],
    lexicon: &AffectLexicon,
) -> Vec<AffectVector> {
    let mut acc = AffectAccumulator::new();
    let mut out = Vec::with_capacity(raw.len());
    for t in raw {
        out.push(acc.current());
        acc.observe(lexicon, t.as_ref());
    }
    out
}

/// One unrolled training window: `inputs[b][t]` predicts `targets[b][t]`
/// conditioned on `affect[b][t]`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    pub affect: Vec<Vec<AffectVector>>,
}

impl Batch {
    pub fn batch_size(&self) -> usize {
        self.inputs.len()
    }

    pub fn unroll(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

/// Reshape a part's stream into `batch_size` contiguous lanes of
/// `len / batch_size` tokens (trailing remainder dropped from the inputs)
/// and cut the lanes into windows of `unroll` steps. Targets follow inputs
/// in the original stream, so the last target of a lane is the next lane's
/// first token (or the first remainder token for the final lane). Affect
/// vectors follow the causal rule above, computed against the original
/// stream so utterances spanning a window boundary keep their accumulated
/// context.
pub fn make_batches(
    part: &SplitPart,
    lexicon: &AffectLexicon,
    batch_size: usize,
    unroll: usize,
) -> Result<Vec<Batch>> {
    if batch_size == 0 || unroll == 0 {
        return Err(Error::InvalidInput(
            "batch_size and unroll must be positive".into(),
        ));
    }
    let needed = batch_size * unroll + 1;
    if part.len() < needed {
        return Err(Error::InvalidInput(format!(
            "stream of {} tokens too short for one window of batch_size {batch_size} × unroll {unroll} (+1 target), need {needed}",
            part.len()
        )));
    }
    let affect_stream = causal_affect_stream(&part.raw, lexicon);

    let lane_len = part.len() / batch_size;
    let lane_start = |b: usize| b * lane_len;
    // The last lane's final target sits one past its segment; that index
    // only exists when the reshape left a remainder.
    let n_windows = if part.len() > batch_size * lane_len {
        lane_len / unroll
    } else {
        (lane_len - 1) / unroll
    };

    let mut batches = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let mut batch = Batch {
            inputs: Vec::with_capacity(batch_size),
            targets: Vec::with_capacity(batch_size),
            affect: Vec::with_capacity(batch_size),
        };
        for b in 0..batch_size {
            let base = lane_start(b) + w * unroll;
            batch
                .inputs
                .push(part.ids[base..base + unroll].to_vec());
            batch
                .targets
                .push(part.ids[base + 1..base + unroll + 1].to_vec());
            batch
                .affect
                .push(affect_stream[base + 1..base + unroll + 1].to_vec());
        }
        batches.push(batch);
    }
    Ok(batches)
}
