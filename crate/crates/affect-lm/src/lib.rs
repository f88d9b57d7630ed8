//! Affect-conditioned LSTM language modeling.
//!
//! This crate trains, evaluates, and samples from a word-level LSTM language
//! model whose next-word distribution carries an additional affect energy
//! term: `logit_i = U_i·f(c) + beta * V_i·g(e) + b_i`, where `e` is a binary
//! five-category affect descriptor spotted from the context words and `beta`
//! scales how emotionally colored predictions are. Setting `beta = 0` recovers
//! the plain LSTM baseline.
//!
//! The pieces:
//!
//! - [`lexicon`]: affect dictionary loading and keyword spotting.
//! - [`corpus`]: vocabulary, deterministic splits, unrolled minibatches with
//!   causally aligned affect vectors.
//! - [`nncore`]: the dense numeric core (LSTM cell, sigmoid MLP, log-softmax,
//!   hand-written gradients, finite-difference checking).
//! - [`model`]: the probability model, sequence scoring, loss/gradients, and
//!   the binary checkpoint format.
//! - [`train`]: two-stage SGD with the epoch-indexed learning-rate schedule
//!   and beta grid validation.
//! - [`eval`]: perplexity, baseline-vs-conditioned comparison, affect
//!   embedding export.
//! - [`generate`]: ancestral sampling with inferred or pinned affect, plus an
//!   interactive REPL.
//! - [`synthetic`]: affect-conditioned bigram corpora for experiments.
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run --release -p affect-lm --example lexicon_stats
//! cargo run --release -p affect-lm --example train_toy
//! cargo run --release -p affect-lm --example generate_text
//! cargo run --release -p affect-lm --example beta_sweep
//! cargo run --release -p affect-lm --example evaluate_perplexity
//! cargo run --release -p affect-lm --example export_embeddings
//! ```
//!
//! The same functionality is reachable through the thin `affect-lm` binary
//! (`stats`, `train`, `adapt`, `eval`, `compare`, `generate`, `repl`,
//! `export-embeddings` subcommands).

pub mod cli;
pub mod config;
pub mod corpus;
mod error;
pub mod eval;
pub mod generate;
pub mod lexicon;
pub mod model;
pub mod nncore;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
pub use lexicon::{AffectCategory, AffectLexicon, AffectVector, CategorySet};
pub use model::{Checkpoint, Hyperparams, ModelParams};
