use crate::error::{Error, Result};
use crate::nncore::Tensor2;

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += M x
pub(crate) fn matvec_acc(m: &Tensor2, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(m.cols(), x.len());
    debug_assert_eq!(m.rows(), y.len());
    for (r, yv) in y.iter_mut().enumerate() {
        *yv += dot(m.row(r), x);
    }
}

/// y += Mᵀ x
pub(crate) fn matvec_t_acc(m: &Tensor2, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(m.rows(), x.len());
    debug_assert_eq!(m.cols(), y.len());
    for (r, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        for (yv, &mv) in y.iter_mut().zip(m.row(r)) {
            *yv += xv * mv;
        }
    }
}

/// M += a bᵀ
pub(crate) fn outer_acc(m: &mut Tensor2, a: &[f64], b: &[f64]) {
    debug_assert_eq!(m.rows(), a.len());
    debug_assert_eq!(m.cols(), b.len());
    for (r, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        for (mv, &bv) in m.row_mut(r).iter_mut().zip(b) {
            *mv += av * bv;
        }
    }
}

/// y += x
pub(crate) fn add_assign(y: &mut [f64], x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += xv;
    }
}

/// Numerically stable log-softmax (max subtraction). The exponentials of the
/// result sum to 1 within 1e-9 for any finite input.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("log_softmax: empty input".into()));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("log_softmax input".into()));
    }
    let mut out = vec![0.0; logits.len()];
    log_softmax_into(logits, &mut out);
    Ok(out)
}

pub(crate) fn log_softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &v in logits {
        sum += (v - max).exp();
    }
    let lse = max + sum.ln();
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = v - lse;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_softmax_uniform_case() {
        let out = log_softmax(&[0.0, 0.0, 0.0, 0.0]).unwrap();
        for v in out {
            assert!((v - 0.25f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn log_softmax_extreme_logits_do_not_overflow() {
        let out = log_softmax(&[1000.0, 0.0]).unwrap();
        assert!(out[0].abs() < 1e-12);
        assert!((out[1] + 1000.0).abs() < 1e-9);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn log_softmax_random_vector_normalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits: Vec<f64> = (0..10).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let out = log_softmax(&logits).unwrap();
        let total: f64 = out.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn log_softmax_rejects_nan() {
        assert!(log_softmax(&[0.0, f64::NAN]).is_err());
    }

    #[test]
    fn matvec_and_transpose_agree_with_hand_values() {
        let m = Tensor2::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut y = vec![0.0; 2];
        matvec_acc(&m, &[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, vec![-2.0, -2.0]);
        let mut z = vec![0.0; 3];
        matvec_t_acc(&m, &[1.0, 1.0], &mut z);
        assert_eq!(z, vec![5.0, 7.0, 9.0]);
    }

    #[test]
    fn outer_acc_accumulates() {
        let mut m = Tensor2::zeros(2, 2);
        outer_acc(&mut m, &[1.0, 2.0], &[3.0, 4.0]);
        outer_acc(&mut m, &[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(m.as_slice(), &[4.0, 5.0, 6.0, 8.0]);
    }

    proptest! {
        #[test]
        fn log_softmax_always_normalizes(logits in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let out = log_softmax(&logits).unwrap();
            let total: f64 = out.iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
