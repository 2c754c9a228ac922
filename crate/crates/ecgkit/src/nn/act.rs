//! Elementwise activations and the softmax output layer.

use crate::nn::{Scalar, Tensor};

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// ReLU. The output doubles as the backward cache: the gradient passes
/// wherever the output is positive.
pub fn relu_forward<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let data = x.data().iter().map(|&v| v.max(S::zero())).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

pub fn relu_backward<S: Scalar>(y: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&yv, &g)| if yv > S::zero() { g } else { S::zero() })
        .collect();
    Tensor::from_vec(dy.shape(), data).expect("same shape")
}

/// Row-wise softmax with max subtraction for stability. Input [batch, k].
pub fn softmax<S: Scalar>(logits: &Tensor<S>) -> Tensor<S> {
    assert_eq!(logits.shape().len(), 2, "softmax expects [batch, k]");
    let (batch, k) = (logits.shape()[0], logits.shape()[1]);
    let mut out = vec![S::zero(); batch * k];
    for b in 0..batch {
        let row = &logits.data()[b * k..(b + 1) * k];
        let m = row.iter().cloned().fold(S::neg_infinity(), S::max);
        let o = &mut out[b * k..(b + 1) * k];
        let mut sum = S::zero();
        for (dst, &v) in o.iter_mut().zip(row) {
            *dst = (v - m).exp();
            sum += *dst;
        }
        for dst in o.iter_mut() {
            *dst /= sum;
        }
    }
    Tensor::from_vec(logits.shape(), out).expect("same shape")
}

/// Jacobian-vector product of softmax: dlogit_i = p_i * (dp_i - sum_j dp_j p_j).
pub fn softmax_backward<S: Scalar>(probs: &Tensor<S>, dprobs: &Tensor<S>) -> Tensor<S> {
    let (batch, k) = (probs.shape()[0], probs.shape()[1]);
    let mut out = vec![S::zero(); batch * k];
    for b in 0..batch {
        let p = &probs.data()[b * k..(b + 1) * k];
        let dp = &dprobs.data()[b * k..(b + 1) * k];
        let mut dot = S::zero();
        for i in 0..k {
            dot += p[i] * dp[i];
        }
        let o = &mut out[b * k..(b + 1) * k];
        for i in 0..k {
            o[i] = p[i] * (dp[i] - dot);
        }
    }
    Tensor::from_vec(probs.shape(), out).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_logits_give_equal_probabilities() {
        let l = Tensor::from_vec(&[1, 4], vec![0.3_f64; 4]).unwrap();
        let p = softmax(&l);
        for &v in p.data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form_two_class() {
        // logits [0, ln 2] -> [1/3, 2/3]
        let l = Tensor::from_vec(&[1, 2], vec![0.0_f64, 2.0_f64.ln()]).unwrap();
        let p = softmax(&l);
        assert!((p.data()[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.data()[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariant_and_normalized() {
        let l = Tensor::from_vec(&[1, 3], vec![0.2_f64, -1.4, 3.0]).unwrap();
        let shifted = Tensor::from_vec(&[1, 3], vec![100.2_f64, 98.6, 103.0]).unwrap();
        let p = softmax(&l);
        let q = softmax(&shifted);
        let sum: f64 = p.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-12);
            assert!(*a > 0.0 && *a < 1.0);
        }
    }

    #[test]
    fn relu_masks_gradient() {
        let x = Tensor::from_vec(&[4], vec![-1.0_f64, 0.0, 2.0, -3.0]).unwrap();
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0, 0.0]);
        let dy = Tensor::from_vec(&[4], vec![1.0; 4]).unwrap();
        let dx = relu_backward(&y, &dy);
        assert_eq!(dx.data(), &[0.0, 0.0, 1.0, 0.0]);
    }
}
