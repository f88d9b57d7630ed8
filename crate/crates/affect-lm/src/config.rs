//! Flat `key = value` configuration files for training and adaptation.
//!
//! Lines are `key = value`, `#` starts a comment, blank lines are skipped.
//! Unknown keys are rejected so typos surface immediately.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::DEFAULT_SPLIT;
use crate::error::{Error, Result};

/// The seed-stage validation grid for the affect strength.
pub const SEED_BETA_GRID: [f64; 7] = [1.0, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0];
/// The adaptation-stage validation grid.
pub const ADAPT_BETA_GRID: [f64; 4] = [1.0, 1.5, 1.75, 2.0];
/// Constant learning rate used during adaptation.
pub const ADAPT_LR: f64 = 0.25;

/// Everything a training run needs. Defaults mirror the reference recipe:
/// vocabulary 10000, 2 LSTM layers of 200 units, MLP hidden 100, unroll 20,
/// minibatch 20, 13 epochs at LR 1.0 flat for 4 epochs then halved each
/// epoch, gradient clip 5.0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
    pub out_dir: PathBuf,
    pub vocab_size: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub flat_epochs: usize,
    pub lr_decay: f64,
    pub beta_grid: Vec<f64>,
    pub batch_size: usize,
    pub unroll: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub split: (f64, f64, f64),
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            corpus: PathBuf::new(),
            lexicon: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            vocab_size: 10_000,
            lstm_layers: 2,
            lstm_hidden: 200,
            mlp_hidden: 100,
            epochs: 13,
            base_lr: 1.0,
            flat_epochs: 4,
            lr_decay: 0.5,
            beta_grid: SEED_BETA_GRID.to_vec(),
            batch_size: 20,
            unroll: 20,
            clip_norm: 5.0,
            seed: 42,
            split: DEFAULT_SPLIT,
        }
    }
}

impl TrainConfig {
    /// Parse a config file on top of the defaults.
    pub fn from_file(path: impl AsRef<Path>) -> Result<TrainConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_kv_lines(text)? {
            self.apply(&key, &value)?;
        }
        Ok(())
    }

    /// Set one key. Used both by the file parser and by CLI flag overrides.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = PathBuf::from(value),
            "lexicon" => self.lexicon = PathBuf::from(value),
            "out" => self.out_dir = PathBuf::from(value),
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "lstm_layers" => self.lstm_layers = parse(key, value)?,
            "lstm_hidden" => self.lstm_hidden = parse(key, value)?,
            "mlp_hidden" => self.mlp_hidden = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "flat_epochs" => self.flat_epochs = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "beta_grid" => self.beta_grid = parse_grid(value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "unroll" => self.unroll = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "split" => self.split = parse_split(value)?,
            other => {
                return Err(Error::Config(format!("unknown key `{other}`")));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.as_os_str().is_empty() {
            return Err(Error::Config("corpus path not set".into()));
        }
        if self.lexicon.as_os_str().is_empty() {
            return Err(Error::Config("lexicon path not set".into()));
        }
        if self.beta_grid.is_empty() {
            return Err(Error::Config("beta_grid must not be empty".into()));
        }
        if self.beta_grid.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Config("beta_grid entries must be finite and >= 0".into()));
        }
        if self.clip_norm <= 0.0 || !self.clip_norm.is_finite() {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.base_lr <= 0.0 || self.lr_decay <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.unroll == 0 {
            return Err(Error::Config("epochs, batch_size, unroll must be positive".into()));
        }
        Ok(())
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let grid = self
            .beta_grid
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(f, "corpus = {}", self.corpus.display())?;
        writeln!(f, "lexicon = {}", self.lexicon.display())?;
        writeln!(f, "out = {}", self.out_dir.display())?;
        writeln!(f, "vocab_size = {}", self.vocab_size)?;
        writeln!(f, "lstm_layers = {}", self.lstm_layers)?;
        writeln!(f, "lstm_hidden = {}", self.lstm_hidden)?;
        writeln!(f, "mlp_hidden = {}", self.mlp_hidden)?;
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "base_lr = {}", self.base_lr)?;
        writeln!(f, "flat_epochs = {}", self.flat_epochs)?;
        writeln!(f, "lr_decay = {}", self.lr_decay)?;
        writeln!(f, "beta_grid = {grid}")?;
        writeln!(f, "batch_size = {}", self.batch_size)?;
        writeln!(f, "unroll = {}", self.unroll)?;
        writeln!(f, "clip_norm = {}", self.clip_norm)?;
        writeln!(f, "seed = {}", self.seed)?;
        write!(
            f,
            "split = {},{},{}",
            self.split.0, self.split.1, self.split.2
        )
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for key `{key}`")))
}

pub(crate) fn parse_grid(value: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad beta grid entry `{s}`")))
        })
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(Error::Config("empty beta grid".into()));
    }
    Ok(grid)
}

fn parse_split(value: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad split entry `{s}`")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Config("split needs exactly three ratios".into()));
    }
    Ok((parts[0], parts[1], parts[2]))
}

/// `key = value` lines, in file order. Duplicate keys keep the last value.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if let Some(&idx) = seen.get(&key) {
            out[idx].1 = value;
        } else {
            seen.insert(key.clone(), out.len());
            out.push((key, value));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_recipe() {
        let c = TrainConfig::default();
        assert_eq!(c.vocab_size, 10_000);
        assert_eq!(c.lstm_layers, 2);
        assert_eq!(c.lstm_hidden, 200);
        assert_eq!(c.mlp_hidden, 100);
        assert_eq!(c.epochs, 13);
        assert_eq!(c.base_lr, 1.0);
        assert_eq!(c.flat_epochs, 4);
        assert_eq!(c.lr_decay, 0.5);
        assert_eq!(c.batch_size, 20);
        assert_eq!(c.unroll, 20);
        assert_eq!(c.clip_norm, 5.0);
        assert_eq!(c.beta_grid, vec![1.0, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0]);
        assert_eq!(ADAPT_BETA_GRID.to_vec(), vec![1.0, 1.5, 1.75, 2.0]);
        assert_eq!(ADAPT_LR, 0.25);
    }

    #[test]
    fn parses_keys_comments_and_overrides() {
        let mut c = TrainConfig::default();
        c.apply_text(
            "# comment\n\ncorpus = /tmp/c.txt\nlexicon=/tmp/l.tsv\nepochs = 3\nbeta_grid = 1.0, 2.0\nepochs = 5\n",
        )
        .unwrap();
        assert_eq!(c.corpus, PathBuf::from("/tmp/c.txt"));
        assert_eq!(c.epochs, 5);
        assert_eq!(c.beta_grid, vec![1.0, 2.0]);
    }

    #[test]
    fn unknown_key_and_bad_value_are_errors() {
        let mut c = TrainConfig::default();
        assert!(c.apply_text("epoch = 3\n").is_err());
        assert!(c.apply_text("epochs = many\n").is_err());
        assert!(c.apply_text("no equals sign").is_err());
    }

    #[test]
    fn display_roundtrips_through_parser() {
        let mut c = TrainConfig::default();
        c.apply_text("corpus = a.txt\nlexicon = b.tsv\nbeta_grid = 0.5,1.25\nseed = 7\n")
            .unwrap();
        let rendered = c.to_string();
        let mut back = TrainConfig::default();
        back.apply_text(&rendered).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn validation_catches_missing_paths_and_bad_grid() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_err());
        c.apply_text("corpus = a\nlexicon = b\n").unwrap();
        assert!(c.validate().is_ok());
        c.beta_grid.clear();
        assert!(c.validate().is_err());
    }
}
