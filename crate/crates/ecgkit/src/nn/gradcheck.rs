//! Central finite-difference verification harness. Always runs in f64; the
//! analytic gradients it checks are produced by instantiating the layers at
//! S = f64.

/// Central differences of `loss` with respect to `x`. The closure receives a
/// candidate parameter vector and returns the scalar loss.
pub fn numeric_grad(mut loss: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = loss(&probe);
            probe[i] = orig - eps;
            let down = loss(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest relative disagreement between analytic and numeric gradients.
/// The denominator is floored so near-zero gradient pairs compare by
/// absolute error instead of exploding.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
