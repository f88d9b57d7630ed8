//! Two-stage optimization: seed training with the epoch-indexed
//! learning-rate schedule and beta-grid validation, then adaptation of a
//! seed checkpoint on a target corpus at a constant learning rate.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::{TrainConfig, ADAPT_BETA_GRID, ADAPT_LR};
use crate::corpus::{
    load_utterances, make_batches, split_corpus, Batch, CorpusSplit, SplitPart, Vocabulary,
};
use crate::error::{Error, Result};
use crate::eval::perplexity_of_part;
use crate::lexicon::AffectLexicon;
use crate::model::{loss_and_grads, Checkpoint, GradStore, Hyperparams, ModelParams};

/// Epoch-indexed learning rate: either the staged seed recipe (flat, then
/// halving every epoch) or the constant adaptation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LrSchedule {
    Staged {
        base_lr: f64,
        flat_epochs: usize,
        decay_factor: f64,
        total_epochs: usize,
    },
    Constant {
        lr: f64,
        total_epochs: usize,
    },
}

impl LrSchedule {
    /// The seed recipe: LR 1.0 for four epochs, then halved every epoch,
    /// 13 epochs total.
    pub fn seed_default() -> LrSchedule {
        LrSchedule::Staged {
            base_lr: 1.0,
            flat_epochs: 4,
            decay_factor: 0.5,
            total_epochs: 13,
        }
    }

    /// Constant 0.25, the adaptation recipe.
    pub fn adaptation(total_epochs: usize) -> LrSchedule {
        LrSchedule::Constant {
            lr: ADAPT_LR,
            total_epochs,
        }
    }

    pub fn total_epochs(&self) -> usize {
        match *self {
            LrSchedule::Staged { total_epochs, .. } | LrSchedule::Constant { total_epochs, .. } => {
                total_epochs
            }
        }
    }

    /// Learning rate for a 1-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> Result<f64> {
        if epoch == 0 || epoch > self.total_epochs() {
            return Err(Error::InvalidInput(format!(
                "epoch {epoch} outside schedule of {} epochs",
                self.total_epochs()
            )));
        }
        let lr = match *self {
            LrSchedule::Constant { lr, .. } => lr,
            LrSchedule::Staged {
                base_lr,
                flat_epochs,
                decay_factor,
                ..
            } => {
                if epoch <= flat_epochs {
                    base_lr
                } else {
                    base_lr * decay_factor.powi((epoch - flat_epochs) as i32)
                }
            }
        };
        if lr <= 0.0 || !lr.is_finite() {
            return Err(Error::InvalidInput(format!(
                "schedule produced invalid learning rate {lr} at epoch {epoch}"
            )));
        }
        Ok(lr)
    }
}

/// Euclidean norm over every gradient tensor at once.
pub fn global_grad_norm(grads: &GradStore) -> f64 {
    grads
        .views()
        .iter()
        .map(|(_, s)| s.iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// Clip gradients to `clip_norm` by global norm, then take one SGD step:
/// `θ ← θ − lr·∇θ`.
pub fn sgd_update(
    params: &mut ModelParams,
    grads: &GradStore,
    lr: f64,
    clip_norm: f64,
) -> Result<()> {
    if !lr.is_finite() || lr <= 0.0 {
        return Err(Error::InvalidInput(format!("invalid learning rate {lr}")));
    }
    if !clip_norm.is_finite() || clip_norm <= 0.0 {
        return Err(Error::InvalidInput(format!("invalid clip norm {clip_norm}")));
    }
    let norm = global_grad_norm(grads);
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient norm".into()));
    }
    let scale = if norm > clip_norm { clip_norm / norm } else { 1.0 };
    let step = lr * scale;
    let mut gviews = grads.views();
    for ((pname, pslice), (gname, gslice)) in params.views_mut().into_iter().zip(gviews.drain(..)) {
        if pslice.len() != gslice.len() || pname != gname {
            return Err(Error::DimMismatch(format!(
                "gradient tensor {gname} does not match parameter {pname}"
            )));
        }
        for (p, g) in pslice.iter_mut().zip(gslice) {
            *p -= step * g;
        }
    }
    Ok(())
}

/// One epoch of one run, as written to the structured report.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub beta: f64,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_ppl: f64,
    pub seconds: f64,
}

/// One beta's trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct BetaRun {
    pub beta: f64,
    pub final_valid_ppl: f64,
    pub epochs: Vec<EpochRecord>,
}

/// Everything a training invocation produced, minus the weights themselves
/// (those live in the checkpoint files).
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub runs: Vec<BetaRun>,
    pub selected_beta: f64,
}

impl TrainReport {
    /// One JSON object per epoch per beta.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for run in &self.runs {
            for rec in &run.epochs {
                out.push_str(&serde_json::to_string(rec).expect("record serializes"));
                out.push('\n');
            }
        }
        out
    }
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for run in &self.runs {
            writeln!(f, "beta = {}", run.beta)?;
            writeln!(f, "  epoch      lr   train_loss   valid_ppl   seconds")?;
            for r in &run.epochs {
                writeln!(
                    f,
                    "  {:>5}  {:>6.4}   {:>10.6}  {:>10.4}  {:>8.2}",
                    r.epoch, r.lr, r.train_loss, r.valid_ppl, r.seconds
                )?;
            }
            writeln!(f, "  final validation perplexity: {:.4}", run.final_valid_ppl)?;
        }
        write!(f, "selected beta = {}", self.selected_beta)
    }
}

/// Assembled data shared by every beta of one run.
pub struct TrainData {
    pub vocab: Vocabulary,
    pub split: CorpusSplit,
    pub lexicon: AffectLexicon,
}

/// Load corpus and lexicon, build the vocabulary, and split deterministically.
pub fn prepare_data(config: &TrainConfig) -> Result<TrainData> {
    let utterances = load_utterances(&config.corpus)?;
    let lexicon = AffectLexicon::load(&config.lexicon)?;
    let vocab = Vocabulary::build(&utterances, config.vocab_size)?;
    let split = split_corpus(&utterances, &vocab, config.split, config.seed)?;
    Ok(TrainData {
        vocab,
        split,
        lexicon,
    })
}

/// Train one model from `init` over `batches`, carrying recurrent state
/// across batches within an epoch and resetting it between epochs.
/// Validation perplexity is computed after every epoch with the same beta
/// and context-inferred affect.
#[allow(clippy::too_many_arguments)]
pub fn train_single(
    init: &ModelParams,
    hyper: &Hyperparams,
    batches: &[Batch],
    valid: &SplitPart,
    lexicon: &AffectLexicon,
    schedule: &LrSchedule,
    beta: f64,
    clip_norm: f64,
) -> Result<(ModelParams, Vec<EpochRecord>)> {
    if batches.is_empty() {
        return Err(Error::InvalidInput("no training batches".into()));
    }
    let lanes = batches[0].batch_size();
    let mut params = init.clone();
    let mut records = Vec::with_capacity(schedule.total_epochs());
    for epoch in 1..=schedule.total_epochs() {
        let started = Instant::now();
        let lr = schedule.lr_at(epoch)?;
        let mut states = vec![hyper.zero_state(); lanes];
        let mut loss_sum = 0.0;
        for batch in batches {
            let (loss, grads) = match loss_and_grads(&params, hyper, batch, beta, &mut states) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, beta }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, beta });
            }
            sgd_update(&mut params, &grads, lr, clip_norm)?;
            loss_sum += loss;
        }
        let train_loss = loss_sum / batches.len() as f64;
        let valid_ppl = perplexity_of_part(
            &params,
            hyper,
            valid,
            lexicon,
            beta,
            &format!("beta-{beta}"),
            "valid",
        )?
        .perplexity;
        records.push(EpochRecord {
            beta,
            epoch,
            lr,
            train_loss,
            valid_ppl,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, records))
}

/// A model written out by `train_seed` or `adapt`.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub beta: f64,
    pub final_valid_ppl: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub models: Vec<TrainedModel>,
    /// Path of the selected (best validation perplexity) checkpoint copy.
    pub selected_path: PathBuf,
}

fn beta_file_name(prefix: &str, beta: f64) -> String {
    format!("{prefix}beta-{beta}.ckpt")
}

/// Pick the grid member with the lowest final validation perplexity, ties
/// toward the smaller beta.
fn select_beta(runs: &[BetaRun], grid: &[f64]) -> f64 {
    let mut candidates: Vec<f64> = grid.to_vec();
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();
    let mut best = candidates[0];
    let mut best_ppl = f64::INFINITY;
    for &beta in &candidates {
        let run = runs
            .iter()
            .find(|r| r.beta == beta)
            .expect("every grid beta has a run");
        if run.final_valid_ppl < best_ppl {
            best_ppl = run.final_valid_ppl;
            best = beta;
        }
    }
    best
}

fn write_reports(out_dir: &Path, report: &TrainReport) -> Result<()> {
    let txt = out_dir.join("report.txt");
    fs::write(&txt, format!("{report}\n")).map_err(|e| Error::io(&txt, e))?;
    let jsonl = out_dir.join("report.jsonl");
    fs::write(&jsonl, report.to_jsonl()).map_err(|e| Error::io(&jsonl, e))?;
    Ok(())
}

/// Stage one: train a baseline (beta = 0) plus one model per grid beta from
/// one shared seeded initialization, validate each per epoch, write every
/// checkpoint under `out_dir`, and flag the best grid model as `seed.ckpt`.
pub fn train_seed(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let data = prepare_data(config)?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    let mut hyper = Hyperparams {
        vocab_size: data.vocab.len(),
        lstm_layers: config.lstm_layers,
        lstm_hidden: config.lstm_hidden,
        mlp_hidden: config.mlp_hidden,
        affect_dim: 5,
        output_dim: config.lstm_hidden,
        beta: 0.0,
    };
    hyper.validate()?;
    let schedule = LrSchedule::Staged {
        base_lr: config.base_lr,
        flat_epochs: config.flat_epochs,
        decay_factor: config.lr_decay,
        total_epochs: config.epochs,
    };
    let batches = make_batches(
        &data.split.train,
        &data.lexicon,
        config.batch_size,
        config.unroll,
    )?;
    let init = ModelParams::init(&hyper, config.seed)?;

    // The baseline always trains alongside the grid for paired comparison.
    let mut betas: Vec<f64> = config.beta_grid.clone();
    if !betas.contains(&0.0) {
        betas.push(0.0);
    }
    betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    betas.dedup();

    let mut runs = Vec::new();
    let mut models = Vec::new();
    for &beta in &betas {
        let (params, epochs) = train_single(
            &init,
            &hyper,
            &batches,
            &data.split.valid,
            &data.lexicon,
            &schedule,
            beta,
            config.clip_norm,
        )?;
        let final_valid_ppl = epochs.last().expect("at least one epoch").valid_ppl;
        let mut ck_hyper = hyper;
        ck_hyper.beta = beta;
        let ck = Checkpoint::new(ck_hyper, params, data.vocab.clone())?;
        let name = if beta == 0.0 {
            "baseline.ckpt".to_string()
        } else {
            beta_file_name("", beta)
        };
        let path = config.out_dir.join(name);
        ck.save(&path)?;
        models.push(TrainedModel {
            beta,
            final_valid_ppl,
            path,
        });
        runs.push(BetaRun {
            beta,
            final_valid_ppl,
            epochs,
        });
    }

    let selected_beta = select_beta(&runs, &config.beta_grid);
    let report = TrainReport {
        runs,
        selected_beta,
    };
    write_reports(&config.out_dir, &report)?;

    let best = models
        .iter()
        .find(|m| m.beta == selected_beta)
        .expect("selected model exists");
    let selected_path = config.out_dir.join("seed.ckpt");
    fs::copy(&best.path, &selected_path).map_err(|e| Error::io(&selected_path, e))?;

    Ok(TrainOutcome {
        report,
        models,
        selected_path,
    })
}

/// Stage two: adaptation of a seed checkpoint on a target corpus.
#[derive(Debug, Clone)]
pub struct AdaptConfig {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub lexicon: PathBuf,
    pub out_dir: PathBuf,
    pub lr: f64,
    pub epochs: usize,
    pub beta_grid: Vec<f64>,
    pub batch_size: usize,
    pub unroll: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub split: (f64, f64, f64),
}

impl Default for AdaptConfig {
    fn default() -> AdaptConfig {
        let base = TrainConfig::default();
        AdaptConfig {
            checkpoint: PathBuf::new(),
            corpus: PathBuf::new(),
            lexicon: PathBuf::new(),
            out_dir: PathBuf::from("out"),
            lr: ADAPT_LR,
            epochs: 13,
            beta_grid: ADAPT_BETA_GRID.to_vec(),
            batch_size: base.batch_size,
            unroll: base.unroll,
            clip_norm: base.clip_norm,
            seed: base.seed,
            split: base.split,
        }
    }
}

/// Fine-tune every parameter of the seed checkpoint on the target corpus at
/// a constant learning rate, one run per grid beta, using the checkpoint's
/// vocabulary to encode the corpus. The best run is copied to
/// `adapted.ckpt`.
pub fn adapt(config: &AdaptConfig) -> Result<TrainOutcome> {
    if config.beta_grid.is_empty() {
        return Err(Error::Config("beta_grid must not be empty".into()));
    }
    if config.epochs == 0 {
        return Err(Error::Config("epochs must be positive".into()));
    }
    let seed_ck = Checkpoint::load(&config.checkpoint)?;
    let lexicon = AffectLexicon::load(&config.lexicon)?;
    let utterances = load_utterances(&config.corpus)?;
    let split = split_corpus(&utterances, &seed_ck.vocab, config.split, config.seed)?;
    fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;

    let hyper = seed_ck.hyper;
    let schedule = LrSchedule::Constant {
        lr: config.lr,
        total_epochs: config.epochs,
    };
    let batches = make_batches(&split.train, &lexicon, config.batch_size, config.unroll)?;

    let mut runs = Vec::new();
    let mut models = Vec::new();
    for &beta in &config.beta_grid {
        let (params, epochs) = train_single(
            &seed_ck.params,
            &hyper,
            &batches,
            &split.valid,
            &lexicon,
            &schedule,
            beta,
            config.clip_norm,
        )?;
        let final_valid_ppl = epochs.last().expect("at least one epoch").valid_ppl;
        let mut ck_hyper = hyper;
        ck_hyper.beta = beta;
        let ck = Checkpoint::new(ck_hyper, params, seed_ck.vocab.clone())?;
        let path = config.out_dir.join(beta_file_name("adapted-", beta));
        ck.save(&path)?;
        models.push(TrainedModel {
            beta,
            final_valid_ppl,
            path,
        });
        runs.push(BetaRun {
            beta,
            final_valid_ppl,
            epochs,
        });
    }

    let selected_beta = select_beta(&runs, &config.beta_grid);
    let report = TrainReport {
        runs,
        selected_beta,
    };
    write_reports(&config.out_dir, &report)?;

    let best = models
        .iter()
        .find(|m| m.beta == selected_beta)
        .expect("selected model exists");
    let selected_path = config.out_dir.join("adapted.ckpt");
    fs::copy(&best.path, &selected_path).map_err(|e| Error::io(&selected_path, e))?;

    Ok(TrainOutcome {
        report,
        models,
        selected_path,
    })
}
