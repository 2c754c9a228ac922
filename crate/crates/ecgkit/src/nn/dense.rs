//! Fully connected layer.

use rand_chacha::ChaCha8Rng;

use crate::nn::ops::{add_bias_grad, addmm_dyw, addmm_dyx, addmm_xw};
use crate::nn::{glorot_uniform, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct Dense<S: Scalar> {
    /// [out_dim, in_dim]
    pub weight: Tensor<S>,
    /// [out_dim]
    pub bias: Tensor<S>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<S: Scalar> Dense<S> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            weight: glorot_uniform(&[out_dim, in_dim], in_dim, out_dim, rng),
            bias: Tensor::zeros(&[out_dim]),
            in_dim,
            out_dim,
        }
    }

    /// x: [batch, in_dim] -> [batch, out_dim]
    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        assert_eq!(x.shape()[1], self.in_dim, "dense input width");
        let batch = x.shape()[0];
        let mut y = vec![S::zero(); batch * self.out_dim];
        for b in 0..batch {
            y[b * self.out_dim..(b + 1) * self.out_dim].copy_from_slice(self.bias.data());
        }
        addmm_xw(batch, self.in_dim, self.out_dim, x.data(), self.weight.data(), &mut y);
        Tensor::from_vec(&[batch, self.out_dim], y).expect("shape agrees")
    }

    /// Accumulates parameter gradients, returns dx.
    pub fn backward(&mut self, x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
        let batch = x.shape()[0];
        let mut dx = vec![S::zero(); batch * self.in_dim];
        addmm_dyw(batch, self.in_dim, self.out_dim, dy.data(), self.weight.data(), &mut dx);
        addmm_dyx(batch, self.in_dim, self.out_dim, dy.data(), x.data(), self.weight.grad_mut());
        add_bias_grad(batch, self.out_dim, dy.data(), self.bias.grad_mut());
        Tensor::from_vec(&[batch, self.in_dim], dx).expect("shape agrees")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn layer_2x2() -> Dense<f64> {
        let mut d = Dense::new(2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        d.weight = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        d.bias = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        d
    }

    #[test]
    fn identity_weight_zero_bias_is_identity() {
        let mut d = Dense::<f64>::new(2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        d.weight = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        d.bias = Tensor::zeros(&[2]);
        let x = Tensor::from_vec(&[1, 2], vec![3.0, -7.0]).unwrap();
        assert_eq!(d.forward(&x).data(), x.data());
    }

    #[test]
    fn hand_computed_two_by_two() {
        let d = layer_2x2();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, -1.0]).unwrap();
        // row0: 1*1 + 2*(-1) + 0.5 = -0.5 ; row1: 3*1 + 4*(-1) - 0.5 = -1.5
        assert_eq!(d.forward(&x).data(), &[-0.5, -1.5]);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut d = layer_2x2();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, -1.0]).unwrap();
        let dy = Tensor::zeros(&[1, 2]);
        let dx = d.backward(&x, &dy);
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(d.weight.grad().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_accumulates_over_calls() {
        let x = Tensor::from_vec(&[1, 2], vec![1.0, -1.0]).unwrap();
        let dy = Tensor::from_vec(&[1, 2], vec![0.3, 0.7]).unwrap();
        let dy2 = Tensor::from_vec(&[1, 2], vec![0.6, 1.4]).unwrap();

        let mut twice = layer_2x2();
        twice.backward(&x, &dy);
        twice.backward(&x, &dy);

        let mut summed = layer_2x2();
        summed.backward(&x, &dy2);

        for (a, b) in twice.weight.grad().unwrap().iter().zip(summed.weight.grad().unwrap()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
