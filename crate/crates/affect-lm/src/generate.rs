//! Affect-conditioned text generation by ancestral sampling, with affect
//! either inferred from the running context or pinned to a fixed category
//! vector, plus an interactive REPL.

use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AffectAccumulator, EOS, EOS_ID, UNK_ID};
use crate::error::{Error, Result};
use crate::lexicon::{AffectCategory, AffectLexicon, AffectVector};
use crate::model::{advance_state, logits_into, Checkpoint};
use crate::nncore::{log_softmax_into, mlp_forward_cached, LstmState};

/// How the conditioning vector is chosen while sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AffectMode {
    /// Recompute the descriptor after every emitted word from all tokens of
    /// the current utterance so far.
    InferFromContext,
    /// Hold the given binary descriptor constant.
    Fixed(AffectVector),
}

/// One sampling request. `beginning` may be just `<eos>` (an empty list is
/// treated the same); words outside the model vocabulary feed the model as
/// `<unk>` but still drive keyword spotting.
#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub beginning: Vec<String>,
    pub mode: AffectMode,
    pub beta: f64,
    pub n_words: usize,
    pub seed: u64,
    /// Suppress `<unk>` during sampling, renormalizing the rest (default).
    pub forbid_unk: bool,
    /// Stop when `<eos>` is emitted instead of always producing `n_words`.
    pub stop_at_eos: bool,
}

impl GenerationRequest {
    pub fn new(beginning: Vec<String>, mode: AffectMode, beta: f64, n_words: usize, seed: u64) -> Self {
        GenerationRequest {
            beginning,
            mode,
            beta,
            n_words,
            seed,
            forbid_unk: true,
            stop_at_eos: false,
        }
    }
}

/// Sampled tokens with, per step, the probability the sampled token had
/// under the distribution actually sampled from and the affect vector that
/// conditioned that distribution.
#[derive(Debug, Clone)]
pub struct GenerationResult {
    pub tokens: Vec<String>,
    pub probabilities: Vec<f64>,
    pub affect_used: Vec<AffectVector>,
}

impl GenerationResult {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

/// User-facing category names (generation vocabulary): `happy` maps to
/// PositiveEmotion; the rest match their enum names in lowercase.
pub fn parse_category(name: &str) -> Option<AffectCategory> {
    match name {
        "happy" | "positive" => Some(AffectCategory::PositiveEmotion),
        "angry" => Some(AffectCategory::Angry),
        "sad" => Some(AffectCategory::Sad),
        "anxious" => Some(AffectCategory::Anxious),
        "negative" => Some(AffectCategory::NegativeEmotion),
        _ => None,
    }
}

struct Sampler<'a> {
    ck: &'a Checkpoint,
    beta: f64,
    state: LstmState,
    logits: Vec<f64>,
    logprobs: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(ck: &'a Checkpoint, beta: f64) -> Sampler<'a> {
        Sampler {
            ck,
            beta,
            state: ck.hyper.zero_state(),
            logits: Vec::with_capacity(ck.hyper.vocab_size),
            logprobs: vec![0.0; ck.hyper.vocab_size],
        }
    }

    /// Consume one token and refresh the next-word distribution under `e`.
    fn step(&mut self, token_id: usize, e: &AffectVector) {
        advance_state(&self.ck.params, &mut self.state, token_id);
        if self.beta != 0.0 {
            let (_, g) = mlp_forward_cached(&self.ck.params.mlp, &e.to_reals());
            logits_into(
                &self.ck.params,
                self.state.top_hidden(),
                Some((&g, self.beta)),
                &mut self.logits,
            );
        } else {
            logits_into(&self.ck.params, self.state.top_hidden(), None, &mut self.logits);
        }
        log_softmax_into(&self.logits, &mut self.logprobs);
    }
}

/// Sample `n_words` (or fewer, when stopping at `<eos>`) continuations of
/// the beginning. Deterministic per seed for fixed checkpoint bytes, lexicon,
/// and request.
pub fn generate(
    ck: &Checkpoint,
    lexicon: &AffectLexicon,
    request: &GenerationRequest,
) -> Result<GenerationResult> {
    if request.n_words == 0 {
        return Err(Error::InvalidInput("n_words must be at least 1".into()));
    }
    if !request.beta.is_finite() || request.beta < 0.0 {
        return Err(Error::InvalidInput(format!(
            "beta must be finite and non-negative, got {}",
            request.beta
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut sampler = Sampler::new(ck, request.beta);
    let mut acc = AffectAccumulator::new();

    let owned_eos = [EOS.to_string()];
    let beginning: &[String] = if request.beginning.is_empty() {
        &owned_eos
    } else {
        &request.beginning
    };

    let mut current_e = AffectVector::zero();
    for word in beginning {
        acc.observe(lexicon, word);
        current_e = match request.mode {
            AffectMode::InferFromContext => acc.current(),
            AffectMode::Fixed(v) => v,
        };
        sampler.step(ck.vocab.encode(word), &current_e);
    }

    let mut result = GenerationResult {
        tokens: Vec::with_capacity(request.n_words),
        probabilities: Vec::with_capacity(request.n_words),
        affect_used: Vec::with_capacity(request.n_words),
    };
    let mut probs = vec![0.0; ck.hyper.vocab_size];
    for i in 0..request.n_words {
        for (p, lp) in probs.iter_mut().zip(&sampler.logprobs) {
            *p = lp.exp();
        }
        if request.forbid_unk {
            probs[UNK_ID] = 0.0;
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::NonFinite("sampling distribution".into()));
        }
        let draw = rng.gen::<f64>() * total;
        let mut cum = 0.0;
        let mut idx = probs.len() - 1;
        for (j, &p) in probs.iter().enumerate() {
            cum += p;
            if draw < cum {
                idx = j;
                break;
            }
        }
        let word = ck.vocab.decode(idx).to_string();
        result.probabilities.push(probs[idx] / total);
        result.affect_used.push(current_e);
        result.tokens.push(word.clone());

        if request.stop_at_eos && idx == EOS_ID {
            break;
        }
        if i + 1 < request.n_words {
            acc.observe(lexicon, &word);
            current_e = match request.mode {
                AffectMode::InferFromContext => acc.current(),
                AffectMode::Fixed(v) => v,
            };
            sampler.step(idx, &current_e);
        }
    }
    Ok(result)
}

const REPL_HELP: &str = "\
interactive generation. each turn asks for:
  begin>   sentence beginning (lowercase words), or a command:
           :quit          exit
           :seed <n>      pin the sampling seed for subsequent turns
  affect>  one of happy | angry | sad | anxious | negative | neutral | infer
           (neutral generates with beta = 0; infer spots affect from context)
  beta>    affect strength, a finite number >= 0 (skipped for neutral)
  words>   how many words to generate
";

/// Drive the REPL over arbitrary input/output streams. Malformed entries
/// re-prompt; `:quit` or end of input exits cleanly.
pub fn repl_io<R: BufRead, W: Write>(
    ck: &Checkpoint,
    lexicon: &AffectLexicon,
    mut input: R,
    mut out: W,
) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("<repl>", e);
    let mut session_rng = ChaCha8Rng::from_entropy();
    writeln!(out, "{REPL_HELP}").map_err(io_err)?;

    let mut pinned_seed: Option<u64> = None;
    loop {
        let Some(line) = prompt(&mut input, &mut out, "begin> ")? else {
            return Ok(());
        };
        let line = line.trim().to_string();
        if line.is_empty() {
            continue;
        }
        if line == ":quit" {
            return Ok(());
        }
        if let Some(rest) = line.strip_prefix(":seed") {
            match rest.trim().parse::<u64>() {
                Ok(s) => {
                    pinned_seed = Some(s);
                    writeln!(out, "seed pinned to {s}").map_err(io_err)?;
                }
                Err(_) => writeln!(out, "usage: :seed <n>").map_err(io_err)?,
            }
            continue;
        }
        let beginning: Vec<String> = line.split_whitespace().map(|w| w.to_lowercase()).collect();

        // Affect category.
        let (mode, neutral) = loop {
            let Some(cat) = prompt(&mut input, &mut out, "affect> ")? else {
                return Ok(());
            };
            let cat = cat.trim().to_lowercase();
            if cat == "infer" {
                break (AffectMode::InferFromContext, false);
            }
            if cat == "neutral" {
                break (AffectMode::Fixed(AffectVector::zero()), true);
            }
            match parse_category(&cat) {
                Some(c) => break (AffectMode::Fixed(AffectVector::one_hot(c)), false),
                None => writeln!(
                    out,
                    "unknown affect `{cat}`; use happy, angry, sad, anxious, negative, neutral, or infer"
                )
                .map_err(io_err)?,
            }
        };

        // Beta (forced to 0 for neutral).
        let beta = if neutral {
            writeln!(out, "neutral uses beta = 0").map_err(io_err)?;
            0.0
        } else {
            loop {
                let Some(b) = prompt(&mut input, &mut out, "beta> ")? else {
                    return Ok(());
                };
                match b.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() && v >= 0.0 => break v,
                    _ => writeln!(out, "beta must be a finite number >= 0").map_err(io_err)?,
                }
            }
        };

        // Word count.
        let n_words = loop {
            let Some(n) = prompt(&mut input, &mut out, "words> ")? else {
                return Ok(());
            };
            match n.trim().parse::<usize>() {
                Ok(v) if v >= 1 => break v,
                _ => writeln!(out, "enter a whole number >= 1").map_err(io_err)?,
            }
        };

        let seed = pinned_seed.unwrap_or_else(|| session_rng.gen());
        let mut request = GenerationRequest::new(beginning, mode, beta, n_words, seed);
        request.stop_at_eos = true;
        match generate(ck, lexicon, &request) {
            Ok(result) => {
                writeln!(out, "{}", result.text()).map_err(io_err)?;
            }
            Err(e) => writeln!(out, "generation failed: {e}").map_err(io_err)?,
        }
    }
}

fn prompt<R: BufRead, W: Write>(input: &mut R, out: &mut W, text: &str) -> Result<Option<String>> {
    let io_err = |e: std::io::Error| Error::io("<repl>", e);
    write!(out, "{text}").map_err(io_err)?;
    out.flush().map_err(io_err)?;
    let mut line = String::new();
    let read = input.read_line(&mut line).map_err(io_err)?;
    if read == 0 {
        Ok(None)
    } else {
        Ok(Some(line))
    }
}

/// Interactive session on stdin/stdout.
pub fn repl(ck: &Checkpoint, lexicon: &AffectLexicon) -> Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    repl_io(ck, lexicon, stdin.lock(), stdout.lock())
}
