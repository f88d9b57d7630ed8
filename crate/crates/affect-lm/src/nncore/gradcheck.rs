//! Central finite differences, the independent oracle against which every
//! hand-written gradient in this crate is checked.

/// Numerical gradient of `f` at `point` via central differences:
/// `(f(x + eps) - f(x - eps)) / (2 eps)` per coordinate.
pub fn finite_diff_grad<F>(mut f: F, point: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grads = Vec::with_capacity(point.len());
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + eps;
        let plus = f(&probe);
        probe[i] = point[i] - eps;
        let minus = f(&probe);
        probe[i] = point[i];
        grads.push((plus - minus) / (2.0 * eps));
    }
    grads
}
