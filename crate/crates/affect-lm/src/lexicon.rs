//! Affect dictionary loading and keyword spotting.
//!
//! The lexicon file format is UTF-8 text, one entry per line:
//!
//! ```text
//! pattern<TAB>Category[,Category...]
//! ```
//!
//! Patterns are lowercase, contain no whitespace, and may end in a single `*`
//! meaning prefix match (`fight*` matches `fight`, `fights`, `fighting`).
//! Lines starting with `#` are comments; blank lines are skipped. Duplicate
//! patterns merge by unioning their category sets. An exact pattern takes
//! precedence over prefix patterns for the same token.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// The five affect categories, with fixed indices used everywhere downstream
/// (conditioning vector layout, embedding export, checkpoint metadata).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AffectCategory {
    PositiveEmotion = 0,
    Angry = 1,
    Sad = 2,
    Anxious = 3,
    NegativeEmotion = 4,
}

impl AffectCategory {
    pub const ALL: [AffectCategory; 5] = [
        AffectCategory::PositiveEmotion,
        AffectCategory::Angry,
        AffectCategory::Sad,
        AffectCategory::Anxious,
        AffectCategory::NegativeEmotion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<AffectCategory> {
        Self::ALL.get(idx).copied()
    }

    /// Exact enum name as used in lexicon files.
    pub fn name(self) -> &'static str {
        match self {
            AffectCategory::PositiveEmotion => "PositiveEmotion",
            AffectCategory::Angry => "Angry",
            AffectCategory::Sad => "Sad",
            AffectCategory::Anxious => "Anxious",
            AffectCategory::NegativeEmotion => "NegativeEmotion",
        }
    }

    pub fn from_name(name: &str) -> Option<AffectCategory> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl fmt::Display for AffectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A set of affect categories, stored as a five-bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct CategorySet(u8);

impl CategorySet {
    pub const EMPTY: CategorySet = CategorySet(0);

    pub fn single(cat: AffectCategory) -> CategorySet {
        CategorySet(1 << cat.index())
    }

    pub fn insert(&mut self, cat: AffectCategory) {
        self.0 |= 1 << cat.index();
    }

    pub fn union(self, other: CategorySet) -> CategorySet {
        CategorySet(self.0 | other.0)
    }

    pub fn contains(self, cat: AffectCategory) -> bool {
        self.0 & (1 << cat.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = AffectCategory> {
        AffectCategory::ALL
            .into_iter()
            .filter(move |c| self.contains(*c))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }
}

impl FromIterator<AffectCategory> for CategorySet {
    fn from_iter<I: IntoIterator<Item = AffectCategory>>(iter: I) -> Self {
        let mut set = CategorySet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Display for CategorySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for c in self.iter() {
            if !first {
                f.write_str(",")?;
            }
            f.write_str(c.name())?;
            first = false;
        }
        Ok(())
    }
}

/// Binary affect descriptor: one presence flag per category. This is the
/// conditioning input `e` of the model; all-zero means neutral context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct AffectVector {
    flags: [bool; 5],
}

impl AffectVector {
    pub fn zero() -> AffectVector {
        AffectVector::default()
    }

    pub fn one_hot(cat: AffectCategory) -> AffectVector {
        let mut v = AffectVector::default();
        v.flags[cat.index()] = true;
        v
    }

    pub fn get(self, cat: AffectCategory) -> bool {
        self.flags[cat.index()]
    }

    pub fn is_neutral(self) -> bool {
        self.flags.iter().all(|f| !f)
    }

    /// The vector as model inputs (0.0 / 1.0), in category index order.
    pub fn to_reals(self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (o, f) in out.iter_mut().zip(self.flags) {
            *o = if f { 1.0 } else { 0.0 };
        }
        out
    }
}

impl From<CategorySet> for AffectVector {
    fn from(set: CategorySet) -> AffectVector {
        let mut v = AffectVector::default();
        for c in set.iter() {
            v.flags[c.index()] = true;
        }
        v
    }
}

impl fmt::Display for AffectVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[pos:{} angry:{} sad:{} anxious:{} neg:{}]",
            self.flags[0] as u8,
            self.flags[1] as u8,
            self.flags[2] as u8,
            self.flags[3] as u8,
            self.flags[4] as u8
        )
    }
}

/// One dictionary entry: a stem (wildcard already stripped) and its categories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconPattern {
    pub stem: String,
    pub wildcard: bool,
    pub categories: CategorySet,
}

impl LexiconPattern {
    pub fn matches(&self, token: &str) -> bool {
        if self.wildcard {
            token.starts_with(self.stem.as_str())
        } else {
            token == self.stem
        }
    }
}

/// An affect dictionary with exact and prefix indexes built at load time.
/// Immutable after load; safe to share across threads.
#[derive(Debug, Clone, Default)]
pub struct AffectLexicon {
    exact: HashMap<String, CategorySet>,
    // Prefix patterns bucketed by first byte; stems are non-empty so the
    // first byte always exists.
    prefix_buckets: HashMap<u8, Vec<(String, CategorySet)>>,
    entries: Vec<LexiconPattern>,
}

impl AffectLexicon {
    /// Build a lexicon from `(pattern, categories)` pairs, where a trailing
    /// `*` in the pattern marks a prefix match. Duplicate patterns merge.
    pub fn from_patterns<I>(patterns: I) -> Result<AffectLexicon>
    where
        I: IntoIterator<Item = (String, CategorySet)>,
    {
        let mut merged: HashMap<(String, bool), CategorySet> = HashMap::new();
        for (raw, cats) in patterns {
            let (stem, wildcard) = parse_pattern(&raw)?;
            if cats.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "pattern `{raw}` has no categories"
                )));
            }
            let entry = merged.entry((stem, wildcard)).or_insert(CategorySet::EMPTY);
            *entry = entry.union(cats);
        }

        let mut entries: Vec<LexiconPattern> = merged
            .into_iter()
            .map(|((stem, wildcard), categories)| LexiconPattern {
                stem,
                wildcard,
                categories,
            })
            .collect();
        entries.sort_by(|a, b| (&a.stem, a.wildcard).cmp(&(&b.stem, b.wildcard)));

        let mut lex = AffectLexicon::default();
        for e in &entries {
            if e.wildcard {
                lex.prefix_buckets
                    .entry(e.stem.as_bytes()[0])
                    .or_default()
                    .push((e.stem.clone(), e.categories));
            } else {
                lex.exact.insert(e.stem.clone(), e.categories);
            }
        }
        lex.entries = entries;
        Ok(lex)
    }

    /// Load a lexicon file in the TSV format described at module level.
    pub fn load(path: impl AsRef<Path>) -> Result<AffectLexicon> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<AffectLexicon> {
        let mut patterns = Vec::new();
        let mut saw_entry = false;
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            saw_entry = true;
            let err = |msg: String| Error::LexiconParse {
                path: path.to_path_buf(),
                line: lineno,
                msg,
            };
            let (pattern, cats) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `pattern<TAB>categories`".into()))?;
            if pattern.is_empty() {
                return Err(err("empty pattern".into()));
            }
            let mut set = CategorySet::EMPTY;
            for name in cats.split(',') {
                let name = name.trim();
                let cat = AffectCategory::from_name(name)
                    .ok_or_else(|| err(format!("unknown category name `{name}`")))?;
                set.insert(cat);
            }
            // Validate pattern shape here so errors carry the line number.
            if let Err(e) = parse_pattern(pattern) {
                return Err(err(e.to_string()));
            }
            patterns.push((pattern.to_string(), set));
        }
        if !saw_entry {
            return Err(Error::InvalidInput(format!(
                "{}: lexicon file has no entries",
                path.display()
            )));
        }
        Self::from_patterns(patterns)
    }

    /// All entries, wildcards and exacts alike, in a stable order. Exposed so
    /// callers (and tests) can run their own scans.
    pub fn entries(&self) -> &[LexiconPattern] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Categories for a single lowercase token. An exact entry wins outright;
    /// otherwise every prefix entry that matches contributes to the union.
    pub fn match_token(&self, token: &str) -> CategorySet {
        if let Some(cats) = self.exact.get(token) {
            return *cats;
        }
        let Some(first) = token.as_bytes().first() else {
            return CategorySet::EMPTY;
        };
        let mut out = CategorySet::EMPTY;
        if let Some(bucket) = self.prefix_buckets.get(first) {
            for (stem, cats) in bucket {
                if token.starts_with(stem.as_str()) {
                    out = out.union(*cats);
                }
            }
        }
        out
    }

    /// Binary affect descriptor of a token sequence: a category is present
    /// iff at least one token matches it. Empty input gives the neutral
    /// (all-zero) vector.
    pub fn extract_affect<S: AsRef<str>>(&self, tokens: &[S]) -> AffectVector {
        let mut set = CategorySet::EMPTY;
        for t in tokens {
            set = set.union(self.match_token(t.as_ref()));
        }
        AffectVector::from(set)
    }

    /// Fraction of tokens with a non-empty match, over the whole stream.
    pub fn colored_fraction<S: AsRef<str>>(&self, corpus: &[S]) -> Result<f64> {
        if corpus.is_empty() {
            return Err(Error::InvalidInput(
                "colored_fraction: empty corpus".into(),
            ));
        }
        let colored = corpus
            .iter()
            .filter(|t| !self.match_token(t.as_ref()).is_empty())
            .count();
        Ok(colored as f64 / corpus.len() as f64)
    }
}

fn parse_pattern(raw: &str) -> Result<(String, bool)> {
    let bad = |msg: &str| Error::InvalidInput(format!("pattern `{raw}`: {msg}"));
    if raw.is_empty() {
        return Err(bad("empty pattern"));
    }
    if raw.chars().any(char::is_whitespace) {
        return Err(bad("whitespace not allowed"));
    }
    let (stem, wildcard) = match raw.strip_suffix('*') {
        Some(stem) => (stem, true),
        None => (raw, false),
    };
    if stem.is_empty() {
        return Err(bad("wildcard with empty stem"));
    }
    if stem.contains('*') {
        return Err(bad("`*` allowed only as final character"));
    }
    if stem.chars().any(|c| c.is_uppercase()) {
        return Err(bad("patterns must be lowercase"));
    }
    Ok((stem.to_string(), wildcard))
}
