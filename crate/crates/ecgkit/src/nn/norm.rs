//! Batch normalization over the channel axis of [batch, channels, length].

use crate::nn::{Mode, Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct BatchNorm1d<S: Scalar> {
    /// [channels]
    pub gamma: Tensor<S>,
    /// [channels]
    pub beta: Tensor<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub eps: S,
    pub momentum: S,
    pub channels: usize,
}

/// Per-invocation state the backward pass needs.
#[derive(Debug)]
pub struct BatchNormCache<S: Scalar> {
    xhat: Vec<S>,
    inv_std: Vec<S>,
    mode: Mode,
    shape: Vec<usize>,
}

impl<S: Scalar> BatchNorm1d<S> {
    pub fn new(channels: usize) -> Self {
        BatchNorm1d {
            gamma: Tensor::from_vec(&[channels], vec![S::one(); channels]).expect("shape agrees"),
            beta: Tensor::zeros(&[channels]),
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            eps: S::from_f64(1e-5),
            momentum: S::from_f64(0.1),
            channels,
        }
    }

    /// Train mode normalizes with batch statistics over (batch, length) per
    /// channel and updates the running stats; eval mode uses the running stats.
    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> (Tensor<S>, BatchNormCache<S>) {
        let (batch, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        assert_eq!(c, self.channels, "batchnorm channels");
        let n = batch * l;
        let xd = x.data();
        let mut y = vec![S::zero(); xd.len()];
        let mut xhat = vec![S::zero(); xd.len()];
        let mut inv_std = vec![S::zero(); c];

        for ch in 0..c {
            let (mean, var) = match mode {
                Mode::Train => {
                    let mut sum = S::zero();
                    for b in 0..batch {
                        let row = &xd[(b * c + ch) * l..][..l];
                        for &v in row {
                            sum += v;
                        }
                    }
                    let mean = sum / S::from_f64(n as f64);
                    let mut acc = S::zero();
                    for b in 0..batch {
                        let row = &xd[(b * c + ch) * l..][..l];
                        for &v in row {
                            let d = v - mean;
                            acc += d * d;
                        }
                    }
                    let var = acc / S::from_f64(n as f64);
                    let m = self.momentum;
                    self.running_mean[ch] = (S::one() - m) * self.running_mean[ch] + m * mean;
                    self.running_var[ch] = (S::one() - m) * self.running_var[ch] + m * var;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean[ch], self.running_var[ch]),
            };
            let istd = S::one() / (var + self.eps).sqrt();
            inv_std[ch] = istd;
            let g = self.gamma.data()[ch];
            let bet = self.beta.data()[ch];
            for b in 0..batch {
                let base = (b * c + ch) * l;
                for i in 0..l {
                    let h = (xd[base + i] - mean) * istd;
                    xhat[base + i] = h;
                    y[base + i] = g * h + bet;
                }
            }
        }
        let cache = BatchNormCache {
            xhat,
            inv_std,
            mode,
            shape: x.shape().to_vec(),
        };
        (Tensor::from_vec(x.shape(), y).expect("shape agrees"), cache)
    }

    /// Accumulates gamma/beta gradients, returns dx.
    pub fn backward(&mut self, cache: &BatchNormCache<S>, dy: &Tensor<S>) -> Tensor<S> {
        let (batch, c, l) = (cache.shape[0], cache.shape[1], cache.shape[2]);
        let n = batch * l;
        let nf = S::from_f64(n as f64);
        let dyd = dy.data();
        let mut dx = vec![S::zero(); dyd.len()];

        let mut sum_dy = vec![S::zero(); c];
        let mut sum_dy_xhat = vec![S::zero(); c];
        for ch in 0..c {
            for b in 0..batch {
                let base = (b * c + ch) * l;
                for i in 0..l {
                    let g = dyd[base + i];
                    sum_dy[ch] += g;
                    sum_dy_xhat[ch] += g * cache.xhat[base + i];
                }
            }
        }
        {
            let dgamma = self.gamma.grad_mut();
            for ch in 0..c {
                dgamma[ch] += sum_dy_xhat[ch];
            }
        }
        {
            let dbeta = self.beta.grad_mut();
            for ch in 0..c {
                dbeta[ch] += sum_dy[ch];
            }
        }

        for ch in 0..c {
            let g = self.gamma.data()[ch];
            let istd = cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    // dx = gamma*istd/N * (N*dy - sum(dy) - xhat * sum(dy*xhat))
                    let scale = g * istd / nf;
                    for b in 0..batch {
                        let base = (b * c + ch) * l;
                        for i in 0..l {
                            dx[base + i] = scale
                                * (nf * dyd[base + i] - sum_dy[ch] - cache.xhat[base + i] * sum_dy_xhat[ch]);
                        }
                    }
                }
                Mode::Eval => {
                    let scale = g * istd;
                    for b in 0..batch {
                        let base = (b * c + ch) * l;
                        for i in 0..l {
                            dx[base + i] = scale * dyd[base + i];
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&cache.shape, dx).expect("shape agrees")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        Tensor::from_vec(
            &[2, 2, 3],
            vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.5, 4.0, 5.0, 6.0, 1.5, -0.5, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn train_mode_normalizes_per_channel() {
        let mut bn = BatchNorm1d::<f64>::new(2);
        let (y, _) = bn.forward(&sample(), Mode::Train);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| y.data()[(b * 2 + ch) * 3..(b * 2 + ch) * 3 + 3].to_vec())
                .collect();
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }
    }

    #[test]
    fn unit_input_with_identity_affine_passes_through() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        // zero-mean unit-variance input
        let x = Tensor::from_vec(&[1, 1, 4], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn running_stats_follow_momentum_update() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        let x = Tensor::from_vec(&[1, 1, 2], vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Mode::Train);
        // batch mean 2, batch var 1; init running mean 0, var 1, momentum 0.1
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_uses_running_stats_and_skips_updates() {
        let mut bn = BatchNorm1d::<f64>::new(1);
        bn.running_mean[0] = 1.0;
        bn.running_var[0] = 4.0;
        let x = Tensor::from_vec(&[1, 1, 2], vec![3.0, -1.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Eval);
        assert!((y.data()[0] - 1.0).abs() < 1e-5);
        assert!((y.data()[1] + 1.0).abs() < 1e-5);
        assert_eq!(bn.running_mean[0], 1.0);
    }
}
