//! Cross-entropy and focal losses over predicted class probabilities.
//!
//! Both take softmax outputs, clamp the target probability away from zero,
//! and average over the batch. The focal loss also returns its analytic
//! gradient with respect to the probabilities so training can chain it
//! through the softmax Jacobian.

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct FocalConfig {
    /// Focusing exponent; zero reduces to plain cross-entropy.
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        FocalConfig { gamma: 2.0 }
    }
}

impl FocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

fn check_targets(batch: usize, k: usize, targets: &[usize]) -> Result<()> {
    if targets.len() != batch {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for batch of {batch}",
            targets.len()
        )));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::InvalidInput(format!("target class {bad} >= {k}")));
    }
    Ok(())
}

/// Mean negative log-probability of the target class.
pub fn cross_entropy<S: Scalar>(probs: &Tensor<S>, targets: &[usize]) -> Result<f64> {
    let (batch, k) = (probs.shape()[0], probs.shape()[1]);
    check_targets(batch, k, targets)?;
    let mut total = 0.0;
    for (b, &t) in targets.iter().enumerate() {
        let p = probs.data()[b * k + t].to_f64().clamp(PROB_CLAMP, 1.0);
        total -= p.ln();
    }
    Ok(total / batch as f64)
}

/// Mean focal loss -(1 - p)^gamma * ln(p) of the target class, plus the
/// gradient with respect to every probability entry (zero off-target).
pub fn focal_loss<S: Scalar>(
    probs: &Tensor<S>,
    targets: &[usize],
    cfg: &FocalConfig,
) -> Result<(f64, Tensor<S>)> {
    cfg.validate()?;
    let (batch, k) = (probs.shape()[0], probs.shape()[1]);
    check_targets(batch, k, targets)?;
    let gamma = cfg.gamma;
    let inv_batch = 1.0 / batch as f64;
    let mut total = 0.0;
    let mut grad = vec![S::zero(); batch * k];
    for (b, &t) in targets.iter().enumerate() {
        let p = probs.data()[b * k + t].to_f64().clamp(PROB_CLAMP, 1.0);
        let q = 1.0 - p;
        total += -(q.powf(gamma)) * p.ln();
        // d/dp[-(1-p)^g ln p] = g (1-p)^(g-1) ln p - (1-p)^g / p
        // evaluated with p pulled inside (clamp, 1 - clamp) so the g < 1
        // branch stays finite at p = 1
        let pg = p.min(1.0 - PROB_CLAMP);
        let qg = 1.0 - pg;
        let d = if gamma == 0.0 {
            -1.0 / pg
        } else {
            gamma * qg.powf(gamma - 1.0) * pg.ln() - qg.powf(gamma) / pg
        };
        grad[b * k + t] = S::from_f64(d * inv_batch);
    }
    Ok((
        total * inv_batch,
        Tensor::from_vec(probs.shape(), grad).expect("same shape"),
    ))
}
