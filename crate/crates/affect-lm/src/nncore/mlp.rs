//! The affect feature network `g(e)`: one sigmoid hidden layer, affine output.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nncore::math::{add_assign, logistic, matvec_acc, matvec_t_acc, outer_acc};
use crate::nncore::Tensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `[hidden × in]`
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    /// `[out × hidden]`
    pub w2: Tensor2,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> MlpParams {
        MlpParams {
            w1: Tensor2::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: Tensor2::zeros(output, hidden),
            b2: vec![0.0; output],
        }
    }

    pub fn uniform<R: Rng>(
        input: usize,
        hidden: usize,
        output: usize,
        scale: f64,
        rng: &mut R,
    ) -> MlpParams {
        MlpParams {
            w1: Tensor2::uniform(hidden, input, scale, rng),
            b1: vec![0.0; hidden],
            w2: Tensor2::uniform(output, hidden, scale, rng),
            b2: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.b1.len()
    }

    pub fn output_dim(&self) -> usize {
        self.b2.len()
    }
}

/// `g(e) = W2 · σ(W1 e + b1) + b2` (output layer affine, no nonlinearity).
pub fn mlp_forward(params: &MlpParams, e: &[f64]) -> Result<Vec<f64>> {
    if e.len() != params.input_dim() {
        return Err(Error::DimMismatch(format!(
            "mlp_forward: input has {} values, expected {}",
            e.len(),
            params.input_dim()
        )));
    }
    let (_, out) = mlp_forward_cached(params, e);
    Ok(out)
}

/// Forward pass returning `(hidden activations, output)`.
pub(crate) fn mlp_forward_cached(params: &MlpParams, e: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut hidden = params.b1.clone();
    matvec_acc(&params.w1, e, &mut hidden);
    for v in hidden.iter_mut() {
        *v = logistic(*v);
    }
    let mut out = params.b2.clone();
    matvec_acc(&params.w2, &hidden, &mut out);
    (hidden, out)
}

/// Accumulate parameter gradients for one step given `d_out = ∂loss/∂g(e)`.
pub(crate) fn mlp_backward(
    params: &MlpParams,
    e: &[f64],
    hidden: &[f64],
    d_out: &[f64],
    grad: &mut MlpParams,
) {
    add_assign(&mut grad.b2, d_out);
    outer_acc(&mut grad.w2, d_out, hidden);

    let mut d_hidden = vec![0.0; hidden.len()];
    matvec_t_acc(&params.w2, d_out, &mut d_hidden);
    for (dh, &hv) in d_hidden.iter_mut().zip(hidden) {
        *dh *= hv * (1.0 - hv);
    }
    add_assign(&mut grad.b1, &d_hidden);
    outer_acc(&mut grad.w1, &d_hidden, e);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_yield_output_bias() {
        let mut p = MlpParams::zeros(5, 3, 4);
        p.b2 = vec![0.1, 0.2, 0.3, 0.4];
        let out = mlp_forward(&p, &[1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(out, vec![0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn different_inputs_differ_with_random_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::uniform(5, 7, 4, 0.5, &mut rng);
        let a = mlp_forward(&p, &[0.0; 5]).unwrap();
        let b = mlp_forward(&p, &[1.0; 5]).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn toy_sizes_match_independent_evaluation() {
        // 2-3-2 with fixed weights; expected values computed by a separate
        // straight-line evaluation of W2·σ(W1 e + b1) + b2.
        let w1 = Tensor2::from_vec(3, 2, vec![0.5, -1.0, 0.25, 0.75, -0.5, 0.1]).unwrap();
        let b1 = vec![0.1, -0.2, 0.0];
        let w2 = Tensor2::from_vec(2, 3, vec![1.0, 0.5, -0.25, -0.75, 0.2, 0.6]).unwrap();
        let b2 = vec![0.05, -0.05];
        let p = MlpParams { w1, b1, w2, b2 };
        let e = [1.0, 0.0];

        let sigma = |v: f64| 1.0 / (1.0 + (-v).exp());
        let h = [
            sigma(0.5 * 1.0 + -1.0 * 0.0 + 0.1),
            sigma(0.25 * 1.0 + 0.75 * 0.0 + -0.2),
            sigma(-0.5 * 1.0 + 0.1 * 0.0 + 0.0),
        ];
        let expect = [
            1.0 * h[0] + 0.5 * h[1] + -0.25 * h[2] + 0.05,
            -0.75 * h[0] + 0.2 * h[1] + 0.6 * h[2] + -0.05,
        ];

        let out = mlp_forward(&p, &e).unwrap();
        assert!((out[0] - expect[0]).abs() < 1e-15);
        assert!((out[1] - expect[1]).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = MlpParams::zeros(5, 3, 4);
        assert!(mlp_forward(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        // Loss = sum of outputs; check dW1 entries against central diffs.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = MlpParams::uniform(3, 4, 2, 0.5, &mut rng);
        let e = [1.0, 0.0, 1.0];

        let (hidden, _) = mlp_forward_cached(&p, &e);
        let mut grad = MlpParams::zeros(3, 4, 2);
        mlp_backward(&p, &e, &hidden, &[1.0, 1.0], &mut grad);

        let w1_flat: Vec<f64> = p.w1.as_slice().to_vec();
        let numeric = finite_diff_grad(
            |w| {
                let mut q = p.clone();
                q.w1.as_mut_slice().copy_from_slice(w);
                mlp_forward(&q, &e).unwrap().iter().sum()
            },
            &w1_flat,
            1e-6,
        );
        for (a, n) in grad.w1.as_slice().iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-8, "analytic {a} vs numeric {n}");
        }
    }
}
