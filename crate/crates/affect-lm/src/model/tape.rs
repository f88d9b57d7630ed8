//! Recorded forward pass over one unrolled window and its reverse sweep.
//!
//! State flows forward across windows (the caller keeps it), gradients stop
//! at the window boundary: truncated backpropagation through time.

use crate::corpus::Batch;
use crate::error::{Error, Result};
use crate::model::{GradStore, Hyperparams, ModelParams};
use crate::nncore::{
    add_assign, log_softmax_into, lstm_step_backward, lstm_step_forward, matvec_t_acc,
    mlp_backward, mlp_forward_cached, outer_acc, LayerStepCache, LstmState,
};

struct Recording {
    beta: f64,
    inputs: Vec<Vec<usize>>,
    targets: Vec<Vec<usize>>,
    affect_reals: Vec<Vec<[f64; 5]>>,
    init_states: Vec<LstmState>,
    /// `[lane][step][layer]`
    lstm: Vec<Vec<Vec<LayerStepCache>>>,
    /// `[lane][step]` → (hidden activations, g(e))
    mlp: Vec<Vec<(Vec<f64>, Vec<f64>)>>,
    /// `[lane][step]` softmax probabilities.
    probs: Vec<Vec<Vec<f64>>>,
}

/// Forward/backward tape for `loss_and_grads`. Reusable: each `forward`
/// replaces the previous recording.
pub struct Tape {
    hyper: Hyperparams,
    rec: Option<Recording>,
}

impl Tape {
    pub fn new(hyper: &Hyperparams) -> Tape {
        Tape {
            hyper: *hyper,
            rec: None,
        }
    }

    /// Run the window forward, recording everything the reverse sweep needs.
    /// `states` holds one recurrent state per lane and is advanced in place
    /// (value semantics across windows, gradient flow cut between them).
    /// Returns the mean negative log-likelihood per target token.
    pub fn forward(
        &mut self,
        params: &ModelParams,
        batch: &Batch,
        beta: f64,
        states: &mut [LstmState],
    ) -> Result<f64> {
        let hyper = &self.hyper;
        if !params.matches(hyper) {
            return Err(Error::DimMismatch(
                "parameters do not match hyperparameters".into(),
            ));
        }
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::InvalidInput(format!("invalid beta {beta}")));
        }
        let lanes = batch.batch_size();
        let steps = batch.unroll();
        if lanes == 0 || steps == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if states.len() != lanes {
            return Err(Error::DimMismatch(format!(
                "{} lane states for batch of {lanes}",
                states.len()
            )));
        }

        let mut rec = Recording {
            beta,
            inputs: batch.inputs.clone(),
            targets: batch.targets.clone(),
            affect_reals: batch
                .affect
                .iter()
                .map(|lane| lane.iter().map(|a| a.to_reals()).collect())
                .collect(),
            init_states: states.to_vec(),
            lstm: Vec::with_capacity(lanes),
            mlp: Vec::with_capacity(lanes),
            probs: Vec::with_capacity(lanes),
        };

        let v = hyper.vocab_size;
        let mut logits = Vec::with_capacity(v);
        let mut logprobs = vec![0.0; v];
        let mut nll_sum = 0.0;

        for b in 0..lanes {
            let mut lane_lstm = Vec::with_capacity(steps);
            let mut lane_mlp = Vec::with_capacity(steps);
            let mut lane_probs = Vec::with_capacity(steps);
            for t in 0..steps {
                let token = batch.inputs[b][t];
                let target = batch.targets[b][t];
                if token >= v || target >= v {
                    return Err(Error::DimMismatch(format!(
                        "token id out of range for vocabulary of {v}"
                    )));
                }
                // LSTM stack.
                let mut step_caches: Vec<LayerStepCache> = Vec::with_capacity(hyper.lstm_layers);
                for (l, layer) in params.lstm.iter().enumerate() {
                    let cache = if l == 0 {
                        lstm_step_forward(layer, params.embedding.row(token), &mut states[b].layers[l])
                    } else {
                        lstm_step_forward(layer, &step_caches[l - 1].h, &mut states[b].layers[l])
                    };
                    step_caches.push(cache);
                }

                // Affect term and logits.
                let e = rec.affect_reals[b][t];
                let (hidden, g) = mlp_forward_cached(&params.mlp, &e);
                let f = &step_caches[hyper.lstm_layers - 1].h;
                logits.clear();
                for i in 0..v {
                    let mut acc = params.b[i];
                    let urow = params.u.row(i);
                    let vrow = params.vmat.row(i);
                    for j in 0..hyper.output_dim {
                        acc += urow[j] * f[j] + beta * vrow[j] * g[j];
                    }
                    logits.push(acc);
                }
                log_softmax_into(&logits, &mut logprobs);
                let lp = logprobs[target];
                if !lp.is_finite() {
                    return Err(Error::NonFinite("window log-likelihood".into()));
                }
                nll_sum -= lp;

                lane_probs.push(logprobs.iter().map(|l| l.exp()).collect::<Vec<f64>>());
                lane_mlp.push((hidden, g));
                lane_lstm.push(step_caches);
            }
            rec.lstm.push(lane_lstm);
            rec.mlp.push(lane_mlp);
            rec.probs.push(lane_probs);
        }

        self.rec = Some(rec);
        Ok(nll_sum / (lanes * steps) as f64)
    }

    /// Reverse sweep over the recorded window. Consumes the recording;
    /// calling before `forward` is an error.
    pub fn backward(&mut self, params: &ModelParams) -> Result<GradStore> {
        let rec = self
            .rec
            .take()
            .ok_or_else(|| Error::InvalidInput("backward called before forward".into()))?;
        let hyper = &self.hyper;
        let lanes = rec.inputs.len();
        let steps = rec.inputs[0].len();
        let layers = hyper.lstm_layers;
        let h = hyper.lstm_hidden;
        let d = hyper.output_dim;
        let scale = 1.0 / (lanes * steps) as f64;

        let mut grads = ModelParams::zeros(hyper)?;
        let mut dlogits = vec![0.0; hyper.vocab_size];
        let mut df = vec![0.0; d];
        let mut dg = vec![0.0; d];

        for b in 0..lanes {
            let mut dh_next = vec![vec![0.0; h]; layers];
            let mut dc_next = vec![vec![0.0; h]; layers];
            for t in (0..steps).rev() {
                let token = rec.inputs[b][t];
                let target = rec.targets[b][t];

                // d loss / d logits = (p - onehot) / (lanes * steps)
                for (dl, &p) in dlogits.iter_mut().zip(&rec.probs[b][t]) {
                    *dl = p * scale;
                }
                dlogits[target] -= scale;

                let f = &rec.lstm[b][t][layers - 1].h;
                let (hidden, g) = &rec.mlp[b][t];

                add_assign(&mut grads.b, &dlogits);
                outer_acc(&mut grads.u, &dlogits, f);
                df.fill(0.0);
                matvec_t_acc(&params.u, &dlogits, &mut df);

                if rec.beta != 0.0 {
                    // Energy term: logit_i += beta * vmat_i · g.
                    let scaled: Vec<f64> = dlogits.iter().map(|v| v * rec.beta).collect();
                    outer_acc(&mut grads.vmat, &scaled, g);
                    dg.fill(0.0);
                    matvec_t_acc(&params.vmat, &scaled, &mut dg);
                    mlp_backward(
                        &params.mlp,
                        &rec.affect_reals[b][t],
                        hidden,
                        &dg,
                        &mut grads.mlp,
                    );
                }

                // LSTM stack, top layer down. dx of layer l feeds layer l-1.
                let mut dx_above: Vec<f64> = Vec::new();
                for l in (0..layers).rev() {
                    let mut dh = dh_next[l].clone();
                    if l == layers - 1 {
                        add_assign(&mut dh, &df);
                    } else {
                        add_assign(&mut dh, &dx_above);
                    }
                    let x: &[f64] = if l == 0 {
                        params.embedding.row(token)
                    } else {
                        &rec.lstm[b][t][l - 1].h
                    };
                    let h_prev: &[f64] = if t > 0 {
                        &rec.lstm[b][t - 1][l].h
                    } else {
                        &rec.init_states[b].layers[l].h
                    };
                    let mut dx = vec![0.0; params.lstm[l].input_dim()];
                    let (dh_prev, dc_prev) = lstm_step_backward(
                        &params.lstm[l],
                        &rec.lstm[b][t][l],
                        x,
                        h_prev,
                        &dh,
                        &dc_next[l],
                        &mut grads.lstm[l],
                        &mut dx,
                    );
                    dh_next[l] = dh_prev;
                    dc_next[l] = dc_prev;
                    if l == 0 {
                        add_assign(grads.embedding.row_mut(token), &dx);
                    } else {
                        dx_above = dx;
                    }
                }
            }
        }
        Ok(grads)
    }
}

/// Mean NLL per target token over the window, plus gradients for every
/// parameter. `states` carries across windows; gradients do not.
pub fn loss_and_grads(
    params: &ModelParams,
    hyper: &Hyperparams,
    batch: &Batch,
    beta: f64,
    states: &mut [LstmState],
) -> Result<(f64, GradStore)> {
    let mut tape = Tape::new(hyper);
    let loss = tape.forward(params, batch, beta, states)?;
    let grads = tape.backward(params)?;
    Ok((loss, grads))
}
