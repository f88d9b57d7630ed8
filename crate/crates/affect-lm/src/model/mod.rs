//! The probability model: a baseline LSTM next-word distribution and the
//! affect-conditioned variant that adds an energy term `beta * V_i·g(e)` to
//! every word's logit before the softmax.

mod checkpoint;
mod tape;

pub use checkpoint::Checkpoint;
pub use tape::{loss_and_grads, Tape};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::EOS_ID;
use crate::error::{Error, Result};
use crate::lexicon::AffectVector;
use crate::nncore::{
    dot, log_softmax_into, lstm_step_forward, mlp_forward_cached, LstmLayerParams, LstmState,
    MlpParams, Tensor2,
};

/// Model dimensions plus the trained affect strength. The output dimension
/// is shared by `f(c)` and `g(e)`; since `f(c)` is the top LSTM hidden state
/// it must equal `lstm_hidden`. The input embedding uses the same width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub vocab_size: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: usize,
    pub affect_dim: usize,
    pub output_dim: usize,
    /// Affect strength used when no explicit beta is given; 0 disables the
    /// energy term entirely.
    pub beta: f64,
}

impl Default for Hyperparams {
    fn default() -> Hyperparams {
        Hyperparams {
            vocab_size: 10_000,
            lstm_layers: 2,
            lstm_hidden: 200,
            mlp_hidden: 100,
            affect_dim: 5,
            output_dim: 200,
            beta: 1.0,
        }
    }
}

impl Hyperparams {
    /// Small-dimension constructor for experiments and tests.
    pub fn small(vocab_size: usize, layers: usize, hidden: usize, mlp_hidden: usize) -> Hyperparams {
        Hyperparams {
            vocab_size,
            lstm_layers: layers,
            lstm_hidden: hidden,
            mlp_hidden,
            affect_dim: 5,
            output_dim: hidden,
            beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.vocab_size,
            self.lstm_layers,
            self.lstm_hidden,
            self.mlp_hidden,
            self.affect_dim,
            self.output_dim,
        ];
        if positive.iter().any(|&d| d == 0) {
            return Err(Error::DimMismatch("all dimensions must be >= 1".into()));
        }
        if self.affect_dim != 5 {
            return Err(Error::DimMismatch(format!(
                "affect_dim must be 5, got {}",
                self.affect_dim
            )));
        }
        if self.output_dim != self.lstm_hidden {
            return Err(Error::DimMismatch(format!(
                "output_dim {} must equal lstm_hidden {} (f(c) is the top hidden state)",
                self.output_dim, self.lstm_hidden
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidInput(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState::zeros(self.lstm_layers, self.lstm_hidden)
    }
}

/// All trainable weights. `u` holds the word representations driving the
/// context term, `vmat` the affect embeddings driving the energy term, and
/// `b` the per-word bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `[V × lstm_hidden]` input embedding.
    pub embedding: Tensor2,
    pub lstm: Vec<LstmLayerParams>,
    pub mlp: MlpParams,
    /// `[V × d]` output word representations.
    pub u: Tensor2,
    /// `[V × d]` affect embeddings.
    pub vmat: Tensor2,
    /// `[V]` word bias.
    pub b: Vec<f64>,
}

/// Gradient accumulators share the parameter layout.
pub type GradStore = ModelParams;

const INIT_SCALE: f64 = 0.1;

impl ModelParams {
    /// Seeded uniform init in [-0.1, 0.1]; all biases zero.
    pub fn init(hyper: &Hyperparams, seed: u64) -> Result<ModelParams> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = hyper.lstm_hidden;
        let lstm = (0..hyper.lstm_layers)
            .map(|_| LstmLayerParams::uniform(h, h, INIT_SCALE, &mut rng))
            .collect();
        Ok(ModelParams {
            embedding: Tensor2::uniform(hyper.vocab_size, h, INIT_SCALE, &mut rng),
            lstm,
            mlp: MlpParams::uniform(
                hyper.affect_dim,
                hyper.mlp_hidden,
                hyper.output_dim,
                INIT_SCALE,
                &mut rng,
            ),
            u: Tensor2::uniform(hyper.vocab_size, hyper.output_dim, INIT_SCALE, &mut rng),
            vmat: Tensor2::uniform(hyper.vocab_size, hyper.output_dim, INIT_SCALE, &mut rng),
            b: vec![0.0; hyper.vocab_size],
        })
    }

    pub fn zeros(hyper: &Hyperparams) -> Result<ModelParams> {
        hyper.validate()?;
        let h = hyper.lstm_hidden;
        Ok(ModelParams {
            embedding: Tensor2::zeros(hyper.vocab_size, h),
            lstm: (0..hyper.lstm_layers)
                .map(|_| LstmLayerParams::zeros(h, h))
                .collect(),
            mlp: MlpParams::zeros(hyper.affect_dim, hyper.mlp_hidden, hyper.output_dim),
            u: Tensor2::zeros(hyper.vocab_size, hyper.output_dim),
            vmat: Tensor2::zeros(hyper.vocab_size, hyper.output_dim),
            b: vec![0.0; hyper.vocab_size],
        })
    }

    pub fn matches(&self, hyper: &Hyperparams) -> bool {
        self.embedding.rows() == hyper.vocab_size
            && self.embedding.cols() == hyper.lstm_hidden
            && self.lstm.len() == hyper.lstm_layers
            && self
                .lstm
                .iter()
                .all(|l| l.hidden() == hyper.lstm_hidden && l.input_dim() == hyper.lstm_hidden)
            && self.mlp.input_dim() == hyper.affect_dim
            && self.mlp.hidden_dim() == hyper.mlp_hidden
            && self.mlp.output_dim() == hyper.output_dim
            && self.u.rows() == hyper.vocab_size
            && self.u.cols() == hyper.output_dim
            && self.vmat.rows() == hyper.vocab_size
            && self.vmat.cols() == hyper.output_dim
            && self.b.len() == hyper.vocab_size
    }

    /// Canonical flat views of every parameter tensor, in the order used by
    /// the checkpoint format, global-norm clipping, and gradient checks.
    pub fn views(&self) -> Vec<(&'static str, &[f64])> {
        let mut v: Vec<(&'static str, &[f64])> = vec![("embedding", self.embedding.as_slice())];
        for layer in &self.lstm {
            v.push(("lstm.w_ih", layer.w_ih.as_slice()));
            v.push(("lstm.w_hh", layer.w_hh.as_slice()));
            v.push(("lstm.bias", &layer.bias));
        }
        v.push(("mlp.w1", self.mlp.w1.as_slice()));
        v.push(("mlp.b1", &self.mlp.b1));
        v.push(("mlp.w2", self.mlp.w2.as_slice()));
        v.push(("mlp.b2", &self.mlp.b2));
        v.push(("u", self.u.as_slice()));
        v.push(("vmat", self.vmat.as_slice()));
        v.push(("b", &self.b));
        v
    }

    pub fn views_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut v: Vec<(&'static str, &mut [f64])> =
            vec![("embedding", self.embedding.as_mut_slice())];
        for layer in &mut self.lstm {
            v.push(("lstm.w_ih", layer.w_ih.as_mut_slice()));
            v.push(("lstm.w_hh", layer.w_hh.as_mut_slice()));
            v.push(("lstm.bias", &mut layer.bias));
        }
        v.push(("mlp.w1", self.mlp.w1.as_mut_slice()));
        v.push(("mlp.b1", &mut self.mlp.b1));
        v.push(("mlp.w2", self.mlp.w2.as_mut_slice()));
        v.push(("mlp.b2", &mut self.mlp.b2));
        v.push(("u", self.u.as_mut_slice()));
        v.push(("vmat", self.vmat.as_mut_slice()));
        v.push(("b", &mut self.b));
        v
    }

    pub fn param_count(&self) -> usize {
        self.views().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn get_flat(&self, mut idx: usize) -> f64 {
        for (_, s) in self.views() {
            if idx < s.len() {
                return s[idx];
            }
            idx -= s.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut idx: usize, value: f64) {
        for (_, s) in self.views_mut() {
            if idx < s.len() {
                s[idx] = value;
                return;
            }
            idx -= s.len();
        }
        panic!("flat index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.views().iter().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }
}

/// Log-probabilities over the vocabulary plus the advanced recurrent state.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub logprobs: Vec<f64>,
    pub state: LstmState,
}

fn check_step(params: &ModelParams, hyper: &Hyperparams, state: &LstmState, token_id: usize) -> Result<()> {
    hyper.validate()?;
    if !params.matches(hyper) {
        return Err(Error::DimMismatch(
            "parameters do not match hyperparameters".into(),
        ));
    }
    if token_id >= hyper.vocab_size {
        return Err(Error::DimMismatch(format!(
            "token id {token_id} out of range for vocabulary of {}",
            hyper.vocab_size
        )));
    }
    if state.layers.len() != hyper.lstm_layers
        || state
            .layers
            .iter()
            .any(|l| l.h.len() != hyper.lstm_hidden || l.c.len() != hyper.lstm_hidden)
    {
        return Err(Error::DimMismatch("recurrent state shape mismatch".into()));
    }
    Ok(())
}

/// Advance the LSTM stack by one token, in place. Returns nothing; the top
/// hidden state afterwards is `f(c)` for this step.
pub(crate) fn advance_state(params: &ModelParams, state: &mut LstmState, token_id: usize) {
    let mut input_owner: Option<Vec<f64>> = None;
    for (l, layer) in params.lstm.iter().enumerate() {
        let cache = if l == 0 {
            lstm_step_forward(layer, params.embedding.row(token_id), &mut state.layers[l])
        } else {
            let x = input_owner.take().expect("layer input");
            lstm_step_forward(layer, &x, &mut state.layers[l])
        };
        input_owner = Some(cache.h);
    }
}

/// Write `U f + beta * Vmat g + b` (or the baseline variant when `affect`
/// is `None`) into `logits`.
pub(crate) fn logits_into(
    params: &ModelParams,
    f: &[f64],
    affect: Option<(&[f64], f64)>,
    logits: &mut Vec<f64>,
) {
    let v = params.u.rows();
    logits.clear();
    logits.reserve(v);
    match affect {
        Some((g, beta)) => {
            for i in 0..v {
                logits.push(dot(params.u.row(i), f) + beta * dot(params.vmat.row(i), g) + params.b[i]);
            }
        }
        None => {
            for i in 0..v {
                logits.push(dot(params.u.row(i), f) + params.b[i]);
            }
        }
    }
}

fn step_impl(
    params: &ModelParams,
    hyper: &Hyperparams,
    state: &LstmState,
    token_id: usize,
    affect: Option<(&AffectVector, f64)>,
) -> Result<StepOutput> {
    check_step(params, hyper, state, token_id)?;
    let mut new_state = state.clone();
    advance_state(params, &mut new_state, token_id);

    let mut logits = Vec::new();
    match affect {
        Some((e, beta)) => {
            if !beta.is_finite() || beta < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "beta must be finite and non-negative, got {beta}"
                )));
            }
            let (_, g) = mlp_forward_cached(&params.mlp, &e.to_reals());
            logits_into(params, new_state.top_hidden(), Some((&g, beta)), &mut logits);
        }
        None => logits_into(params, new_state.top_hidden(), None, &mut logits),
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("step logits".into()));
    }
    let mut logprobs = vec![0.0; logits.len()];
    log_softmax_into(&logits, &mut logprobs);
    Ok(StepOutput {
        logprobs,
        state: new_state,
    })
}

/// Affect-conditioned next-word distribution after consuming `token_id`:
/// `logit_i = U_i·f(c) + beta * Vmat_i·g(e) + b_i`, log-softmaxed.
pub fn forward_step(
    params: &ModelParams,
    hyper: &Hyperparams,
    state: &LstmState,
    token_id: usize,
    e: &AffectVector,
    beta: f64,
) -> Result<StepOutput> {
    step_impl(params, hyper, state, token_id, Some((e, beta)))
}

/// Baseline next-word distribution: the affect term is absent entirely.
pub fn baseline_step(
    params: &ModelParams,
    hyper: &Hyperparams,
    state: &LstmState,
    token_id: usize,
) -> Result<StepOutput> {
    step_impl(params, hyper, state, token_id, None)
}

/// Log-probability of a whole token sequence under the chain rule, starting
/// from the zero state with `<eos>` as the start symbol. `affect[t]` must be
/// the causal descriptor conditioning the prediction of `tokens[t]`.
pub fn sequence_logprob(
    params: &ModelParams,
    hyper: &Hyperparams,
    tokens: &[usize],
    affect: &[AffectVector],
    beta: f64,
) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::InvalidInput("sequence_logprob: empty sequence".into()));
    }
    if affect.len() != tokens.len() {
        return Err(Error::DimMismatch(format!(
            "affect stream has {} entries for {} tokens",
            affect.len(),
            tokens.len()
        )));
    }
    let mut state = hyper.zero_state();
    let mut prev = EOS_ID;
    let mut total = 0.0;
    for (t, &tok) in tokens.iter().enumerate() {
        let out = forward_step(params, hyper, &state, prev, &affect[t], beta)?;
        if tok >= hyper.vocab_size {
            return Err(Error::DimMismatch(format!("token id {tok} out of range")));
        }
        total += out.logprobs[tok];
        state = out.state;
        prev = tok;
    }
    Ok(total)
}
