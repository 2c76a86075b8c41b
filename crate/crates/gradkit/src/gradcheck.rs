//! Finite-difference gradient checking.
//!
//! Uses only forward evaluations, so it is independent of the backward
//! pass it verifies. Step size follows h = 1e-5·max(1, |x|) per component.

/// Central-difference gradient of a scalar function at `x`.
pub fn central_difference<F>(mut f: F, x: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad.push((fp - fm) / (2.0 * h));
    }
    grad
}

/// max_i |a_i − b_i| / max(1, |a_i|, |b_i|)
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
        .fold(0.0, f64::max)
}
