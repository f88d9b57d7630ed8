//! Bit-exact binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic    4 bytes  "AFLM"
//! version  u32      1
//! dims     6 × u32  V, lstm_layers, lstm_hidden, mlp_hidden, affect_dim, output_dim
//! arrays   f64…     embedding, then per layer (w_ih, w_hh, bias),
//!                   mlp (w1, b1, w2, b2), u, vmat, b
//! beta     f64      trained affect strength
//! vocab    V ×      u32 byte length + UTF-8 bytes, in id order
//! ```
//!
//! Saving, loading, and saving again reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelParams};

const MAGIC: &[u8; 4] = b"AFLM";
const VERSION: u32 = 1;

/// A trained model: weights, dimensions, trained beta, and the vocabulary
/// the weights were trained against.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub hyper: Hyperparams,
    pub params: ModelParams,
    pub vocab: Vocabulary,
}

impl Checkpoint {
    pub fn new(hyper: Hyperparams, params: ModelParams, vocab: Vocabulary) -> Result<Checkpoint> {
        hyper.validate()?;
        if !params.matches(&hyper) {
            return Err(Error::Checkpoint(
                "parameters do not match hyperparameters".into(),
            ));
        }
        if vocab.len() != hyper.vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} words, dims say {}",
                vocab.len(),
                hyper.vocab_size
            )));
        }
        Ok(Checkpoint {
            hyper,
            params,
            vocab,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for dim in [
            self.hyper.vocab_size,
            self.hyper.lstm_layers,
            self.hyper.lstm_hidden,
            self.hyper.mlp_hidden,
            self.hyper.affect_dim,
            self.hyper.output_dim,
        ] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for (_, slice) in self.params.views() {
            for v in slice {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.hyper.beta.to_le_bytes());
        for word in self.vocab.words() {
            out.extend_from_slice(&(word.len() as u32).to_le_bytes());
            out.extend_from_slice(word.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version} (expected {VERSION})"
            )));
        }
        let vocab_size = r.u32()? as usize;
        let lstm_layers = r.u32()? as usize;
        let lstm_hidden = r.u32()? as usize;
        let mlp_hidden = r.u32()? as usize;
        let affect_dim = r.u32()? as usize;
        let output_dim = r.u32()? as usize;
        let mut hyper = Hyperparams {
            vocab_size,
            lstm_layers,
            lstm_hidden,
            mlp_hidden,
            affect_dim,
            output_dim,
            beta: 0.0,
        };
        hyper.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut params = ModelParams::zeros(&hyper).map_err(|e| Error::Checkpoint(e.to_string()))?;
        for (name, slice) in params.views_mut() {
            for v in slice.iter_mut() {
                *v = r.f64()?;
                if !v.is_finite() {
                    return Err(Error::Checkpoint(format!("non-finite value in {name}")));
                }
            }
        }
        hyper.beta = r.f64()?;
        if !hyper.beta.is_finite() || hyper.beta < 0.0 {
            return Err(Error::Checkpoint(format!("invalid stored beta {}", hyper.beta)));
        }

        let mut words = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let word = std::str::from_utf8(raw)
                .map_err(|_| Error::Checkpoint("vocabulary entry is not UTF-8".into()))?;
            words.push(word.to_string());
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after vocabulary",
                bytes.len() - r.pos
            )));
        }
        let vocab = Vocabulary::from_words(words).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Checkpoint::new(hyper, params, vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated file: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes(raw.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        let raw = self.take(8)?;
        Ok(f64::from_le_bytes(raw.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;

    fn sample_checkpoint() -> Checkpoint {
        let mut hyper = Hyperparams::small(8, 2, 4, 3);
        hyper.beta = 1.75;
        let params = ModelParams::init(&hyper, 42).unwrap();
        let utts: Vec<Utterance> = (0..6)
            .map(|i| Utterance::from_line(&format!("word{i} filler")).unwrap())
            .collect();
        let vocab = Vocabulary::build(&utts, 8).unwrap();
        Checkpoint::new(hyper, params, vocab).unwrap()
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.hyper, ck.hyper);
        assert_eq!(back.params, ck.params);
        assert_eq!(back.vocab.words(), ck.vocab.words());
    }

    #[test]
    fn save_load_save_files_match() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let ck = sample_checkpoint();
        ck.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let ck = sample_checkpoint();
        let bytes = ck.to_bytes();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());

        let truncated = &bytes[..bytes.len() - 3];
        assert!(Checkpoint::from_bytes(truncated).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(Checkpoint::from_bytes(&trailing).is_err());

        let mut bad_version = bytes;
        bad_version[4] = 9;
        assert!(Checkpoint::from_bytes(&bad_version).is_err());
    }

    #[test]
    fn non_finite_weights_are_rejected() {
        let ck = sample_checkpoint();
        let mut bytes = ck.to_bytes();
        // First f64 of the arrays block starts after 4 (magic) + 4 (version)
        // + 24 (dims).
        let nan = f64::NAN.to_le_bytes();
        bytes[32..40].copy_from_slice(&nan);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
