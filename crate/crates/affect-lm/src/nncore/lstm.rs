//! LSTM cell with hand-written forward and backward passes.
//!
//! Gate blocks are stacked in (input, forget, cell-candidate, output) order:
//! rows `0..h` of the weight matrices and bias drive the input gate, `h..2h`
//! the forget gate, `2h..3h` the tanh candidate, `3h..4h` the output gate.
//! Biases initialize to zero, weights uniform in [-0.1, 0.1].

use rand::Rng;

use crate::error::{Error, Result};
use crate::nncore::math::{logistic, matvec_acc, matvec_t_acc, outer_acc};
use crate::nncore::Tensor2;

/// Parameters of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// Input-to-gates weights, `[4h × in]`.
    pub w_ih: Tensor2,
    /// Hidden-to-gates weights, `[4h × h]`.
    pub w_hh: Tensor2,
    /// Gate biases, `[4h]`.
    pub bias: Vec<f64>,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> LstmLayerParams {
        LstmLayerParams {
            w_ih: Tensor2::zeros(4 * hidden, input_dim),
            w_hh: Tensor2::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn uniform<R: Rng>(input_dim: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        LstmLayerParams {
            w_ih: Tensor2::uniform(4 * hidden, input_dim, scale, rng),
            w_hh: Tensor2::uniform(4 * hidden, hidden, scale, rng),
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.cols()
    }
}

/// Recurrent state of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LayerState {
    pub fn zeros(hidden: usize) -> LayerState {
        LayerState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Recurrent state of the whole stack, zero-initialized at lane start.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub layers: Vec<LayerState>,
}

impl LstmState {
    pub fn zeros(layers: usize, hidden: usize) -> LstmState {
        LstmState {
            layers: (0..layers).map(|_| LayerState::zeros(hidden)).collect(),
        }
    }

    /// Hidden vector of the top layer: the `f(c)` fed to the output layer.
    pub fn top_hidden(&self) -> &[f64] {
        &self.layers.last().expect("at least one layer").h
    }
}

/// Everything the backward pass needs from one forward step of one layer.
/// `h` doubles as this layer's output (the input to the layer above).
#[derive(Debug, Clone)]
pub(crate) struct LayerStepCache {
    /// Gate activations `[i | f | g | o]`, length 4h; `g` stores the tanh value.
    pub act: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One step: `i,f,o` are logistic gates, `g` the tanh candidate,
/// `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`. Advances `state` in place and
/// returns the cache for the backward pass.
pub(crate) fn lstm_step_forward(
    params: &LstmLayerParams,
    x: &[f64],
    state: &mut LayerState,
) -> LayerStepCache {
    let h = params.hidden();
    let mut act = params.bias.clone();
    matvec_acc(&params.w_ih, x, &mut act);
    matvec_acc(&params.w_hh, &state.h, &mut act);

    let c_prev = state.c.clone();
    let mut tanh_c = vec![0.0; h];
    for k in 0..h {
        act[k] = logistic(act[k]);
        act[h + k] = logistic(act[h + k]);
        act[2 * h + k] = act[2 * h + k].tanh();
        act[3 * h + k] = logistic(act[3 * h + k]);
        let c_new = act[h + k] * c_prev[k] + act[k] * act[2 * h + k];
        state.c[k] = c_new;
        tanh_c[k] = c_new.tanh();
        state.h[k] = act[3 * h + k] * tanh_c[k];
    }
    LayerStepCache {
        act,
        c_prev,
        tanh_c,
        h: state.h.clone(),
    }
}

/// Reverse one step. `dh`/`dc_next` are the gradients flowing into this
/// step's outputs; `h_prev` is the hidden state the step consumed. Gradients
/// accumulate into `grad`; `dx_acc` receives the input gradient (added, so
/// the caller can fold it into the layer below). Returns `(dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step_backward(
    params: &LstmLayerParams,
    cache: &LayerStepCache,
    x: &[f64],
    h_prev: &[f64],
    dh: &[f64],
    dc_next: &[f64],
    grad: &mut LstmLayerParams,
    dx_acc: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let h = params.hidden();
    let mut da = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for k in 0..h {
        let ig = cache.act[k];
        let fg = cache.act[h + k];
        let gc = cache.act[2 * h + k];
        let og = cache.act[3 * h + k];
        let tc = cache.tanh_c[k];

        let d_o = dh[k] * tc;
        let dc = dh[k] * og * (1.0 - tc * tc) + dc_next[k];
        let d_i = dc * gc;
        let d_g = dc * ig;
        let d_f = dc * cache.c_prev[k];
        dc_prev[k] = dc * fg;

        da[k] = d_i * ig * (1.0 - ig);
        da[h + k] = d_f * fg * (1.0 - fg);
        da[2 * h + k] = d_g * (1.0 - gc * gc);
        da[3 * h + k] = d_o * og * (1.0 - og);
    }

    for (gb, &d) in grad.bias.iter_mut().zip(&da) {
        *gb += d;
    }
    outer_acc(&mut grad.w_ih, &da, x);
    outer_acc(&mut grad.w_hh, &da, h_prev);

    matvec_t_acc(&params.w_ih, &da, dx_acc);
    let mut dh_prev = vec![0.0; h];
    matvec_t_acc(&params.w_hh, &da, &mut dh_prev);
    (dh_prev, dc_prev)
}

/// Single LSTM step as a checked public operation: returns the new hidden
/// vector and the advanced layer state.
pub fn lstm_step(
    params: &LstmLayerParams,
    x: &[f64],
    state: &LayerState,
) -> Result<(Vec<f64>, LayerState)> {
    let h = params.hidden();
    if x.len() != params.input_dim() {
        return Err(Error::DimMismatch(format!(
            "lstm_step: input has {} values, layer expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    if state.h.len() != h || state.c.len() != h {
        return Err(Error::DimMismatch(format!(
            "lstm_step: state size {}/{} does not match hidden {h}",
            state.h.len(),
            state.c.len()
        )));
    }
    let mut new_state = state.clone();
    lstm_step_forward(params, x, &mut new_state);
    Ok((new_state.h.clone(), new_state))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_force_zero_hidden() {
        // o = logistic(0) = 0.5 but tanh(c') = tanh(0) = 0, so h' = 0.
        let p = LstmLayerParams::zeros(3, 2);
        let s = LayerState::zeros(2);
        let (h, new_state) = lstm_step(&p, &[1.0, -2.0, 0.5], &s).unwrap();
        assert_eq!(h, vec![0.0, 0.0]);
        assert_eq!(new_state.c, vec![0.0, 0.0]);
    }

    #[test]
    fn single_unit_matches_scalar_oracle() {
        // One unit, one input; weights set by hand. The oracle below is an
        // independent straight-line evaluation of the cell equations.
        let mut p = LstmLayerParams::zeros(1, 1);
        let (wi, wf, wg, wo) = (0.3, -0.2, 0.7, 0.5);
        let (ui, uf, ug, uo) = (0.11, 0.23, -0.31, 0.17);
        let (bi, bf, bg, bo) = (0.01, -0.02, 0.03, 0.04);
        p.w_ih.set(0, 0, wi);
        p.w_ih.set(1, 0, wf);
        p.w_ih.set(2, 0, wg);
        p.w_ih.set(3, 0, wo);
        p.w_hh.set(0, 0, ui);
        p.w_hh.set(1, 0, uf);
        p.w_hh.set(2, 0, ug);
        p.w_hh.set(3, 0, uo);
        p.bias = vec![bi, bf, bg, bo];

        let x = 0.9;
        let h_prev = -0.4;
        let c_prev = 0.6;

        let sigma = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sigma(wi * x + ui * h_prev + bi);
        let f = sigma(wf * x + uf * h_prev + bf);
        let g = (wg * x + ug * h_prev + bg).tanh();
        let o = sigma(wo * x + uo * h_prev + bo);
        let c_expect = f * c_prev + i * g;
        let h_expect = o * c_expect.tanh();

        let state = LayerState {
            h: vec![h_prev],
            c: vec![c_prev],
        };
        let (h, new_state) = lstm_step(&p, &[x], &state).unwrap();
        assert!((h[0] - h_expect).abs() < 1e-15);
        assert!((new_state.c[0] - c_expect).abs() < 1e-15);
    }

    #[test]
    fn saturated_gates_preserve_cell_state() {
        // Large forget bias → f ≈ 1; large negative input bias → i ≈ 0.
        // Two consecutive steps leave the cell essentially unchanged.
        let mut p = LstmLayerParams::zeros(1, 1);
        p.bias = vec![-40.0, 40.0, 0.0, 0.0];
        let mut state = LayerState {
            h: vec![0.0],
            c: vec![0.7],
        };
        for _ in 0..2 {
            let (_, s) = lstm_step(&p, &[1.0], &state).unwrap();
            state = s;
        }
        assert!((state.c[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn hidden_output_is_bounded() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = LstmLayerParams::uniform(4, 6, 2.0, &mut rng);
        let mut state = LayerState::zeros(6);
        for step in 0..50 {
            let x: Vec<f64> = (0..4).map(|k| ((step * 7 + k) as f64).sin() * 3.0).collect();
            let (h, s) = lstm_step(&p, &x, &state).unwrap();
            assert!(h.iter().all(|v| v.abs() <= 1.0));
            state = s;
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = LstmLayerParams::zeros(3, 2);
        let s = LayerState::zeros(2);
        assert!(lstm_step(&p, &[1.0], &s).is_err());
        let bad = LayerState::zeros(3);
        assert!(lstm_step(&p, &[1.0, 2.0, 3.0], &bad).is_err());
    }
}
