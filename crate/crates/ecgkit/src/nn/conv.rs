//! 1-D convolution (cross-correlation) over [batch, channels, length].

use rand_chacha::ChaCha8Rng;

use crate::nn::{glorot_uniform, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone)]
pub struct Conv1d<S: Scalar> {
    /// [out_channels, in_channels, kernel]
    pub weight: Tensor<S>,
    /// [out_channels]
    pub bias: Tensor<S>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl<S: Scalar> Conv1d<S> {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        assert!(kernel >= 1 && stride >= 1);
        let fan_in = in_channels * kernel;
        let fan_out = out_channels * kernel;
        Conv1d {
            weight: glorot_uniform(&[out_channels, in_channels, kernel], fan_in, fan_out, rng),
            bias: Tensor::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        match self.padding {
            Padding::Valid => {
                assert!(in_len >= self.kernel, "input shorter than kernel");
                (in_len - self.kernel) / self.stride + 1
            }
            Padding::Same => in_len.div_ceil(self.stride),
        }
    }

    fn pad_left(&self, in_len: usize, out_len: usize) -> usize {
        match self.padding {
            Padding::Valid => 0,
            Padding::Same => {
                let needed = (out_len - 1) * self.stride + self.kernel;
                needed.saturating_sub(in_len) / 2
            }
        }
    }

    /// Valid output range for kernel offset `j`: indices t with
    /// 0 <= t*stride + j - pad_left < in_len.
    fn t_range(&self, j: usize, pl: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        let lo = if pl > j {
            (pl - j).div_ceil(self.stride)
        } else {
            0
        };
        let hi_raw = (in_len - 1 + pl).saturating_sub(j) / self.stride;
        (lo.min(out_len), hi_raw.min(out_len.saturating_sub(1)))
    }

    /// x: [batch, in_channels, L] -> [batch, out_channels, out_len(L)]
    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let (batch, c_in, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        assert_eq!(c_in, self.in_channels, "conv input channels");
        let lo_len = self.out_len(l);
        let pl = self.pad_left(l, lo_len);
        let mut y = vec![S::zero(); batch * self.out_channels * lo_len];
        let xd = x.data();
        let wd = self.weight.data();
        for b in 0..batch {
            for o in 0..self.out_channels {
                let yr = &mut y[(b * self.out_channels + o) * lo_len..][..lo_len];
                let bias = self.bias.data()[o];
                yr.iter_mut().for_each(|v| *v = bias);
                for c in 0..c_in {
                    let xr = &xd[(b * c_in + c) * l..][..l];
                    let wr = &wd[(o * c_in + c) * self.kernel..][..self.kernel];
                    for (j, &w) in wr.iter().enumerate() {
                        let (t0, t1) = self.t_range(j, pl, l, lo_len);
                        if t0 > t1 {
                            continue;
                        }
                        if self.stride == 1 {
                            let off = t0 + j - pl;
                            let xs = &xr[off..off + (t1 - t0 + 1)];
                            let ys = &mut yr[t0..=t1];
                            for (yv, &xv) in ys.iter_mut().zip(xs) {
                                *yv += w * xv;
                            }
                        } else {
                            for t in t0..=t1 {
                                yr[t] += w * xr[t * self.stride + j - pl];
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[batch, self.out_channels, lo_len], y).expect("shape agrees")
    }

    /// Accumulates weight/bias gradients, returns dx.
    pub fn backward(&mut self, x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
        let (batch, c_in, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let lo_len = dy.shape()[2];
        let pl = self.pad_left(l, lo_len);
        let (kernel, stride, out_ch) = (self.kernel, self.stride, self.out_channels);
        let ranges: Vec<(usize, usize)> = (0..kernel).map(|j| self.t_range(j, pl, l, lo_len)).collect();
        let mut dx = vec![S::zero(); batch * c_in * l];
        let xd = x.data();
        let dyd = dy.data();
        {
            let db = self.bias.grad_mut();
            for b in 0..batch {
                for o in 0..out_ch {
                    let dyr = &dyd[(b * out_ch + o) * lo_len..][..lo_len];
                    let mut acc = S::zero();
                    for &g in dyr {
                        acc += g;
                    }
                    db[o] += acc;
                }
            }
        }
        let (wd, dw) = self.weight.data_and_grad_mut();
        for b in 0..batch {
            for o in 0..out_ch {
                let dyr = &dyd[(b * out_ch + o) * lo_len..][..lo_len];
                for c in 0..c_in {
                    let xr = &xd[(b * c_in + c) * l..][..l];
                    let dxr = &mut dx[(b * c_in + c) * l..][..l];
                    let wr = &wd[(o * c_in + c) * kernel..][..kernel];
                    let dwr = &mut dw[(o * c_in + c) * kernel..][..kernel];
                    for j in 0..kernel {
                        let (t0, t1) = ranges[j];
                        if t0 > t1 {
                            continue;
                        }
                        let w = wr[j];
                        let mut wacc = S::zero();
                        if stride == 1 {
                            for (t, &g) in (t0..=t1).zip(&dyr[t0..=t1]) {
                                let i = t + j - pl;
                                wacc += g * xr[i];
                                dxr[i] += g * w;
                            }
                        } else {
                            for t in t0..=t1 {
                                let i = t * stride + j - pl;
                                let g = dyr[t];
                                wacc += g * xr[i];
                                dxr[i] += g * w;
                            }
                        }
                        dwr[j] += wacc;
                    }
                }
            }
        }
        Tensor::from_vec(&[batch, c_in, l], dx).expect("shape agrees")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_kernel_is_identity() {
        let mut conv = Conv1d::<f64>::new(1, 1, 1, 1, Padding::Valid, &mut ChaCha8Rng::seed_from_u64(0));
        conv.weight = Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        conv.bias = Tensor::zeros(&[1]);
        let x = Tensor::from_vec(&[1, 1, 4], vec![0.5, -1.0, 2.0, 3.0]).unwrap();
        assert_eq!(conv.forward(&x).data(), x.data());
    }

    #[test]
    fn hand_convolution_valid() {
        let mut conv = Conv1d::<f64>::new(1, 1, 3, 1, Padding::Valid, &mut ChaCha8Rng::seed_from_u64(0));
        conv.weight = Tensor::from_vec(&[1, 1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        conv.bias = Tensor::zeros(&[1]);
        let x = Tensor::from_vec(&[1, 1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let y = conv.forward(&x);
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[-2.0]);
    }

    #[test]
    fn same_padding_preserves_length() {
        let conv = Conv1d::<f32>::new(2, 3, 7, 1, Padding::Same, &mut ChaCha8Rng::seed_from_u64(1));
        let x = Tensor::zeros(&[2, 2, 50]);
        assert_eq!(conv.forward(&x).shape(), &[2, 3, 50]);
    }

    #[test]
    fn strided_output_length() {
        let conv = Conv1d::<f32>::new(1, 1, 3, 2, Padding::Valid, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(conv.out_len(11), 5);
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let mut conv =
            Conv1d::<f64>::new(2, 2, 3, 1, Padding::Same, &mut ChaCha8Rng::seed_from_u64(2));
        let x = Tensor::from_vec(&[1, 2, 8], (0..16).map(|i| i as f64 * 0.1).collect()).unwrap();
        let y = conv.forward(&x);
        let dy = Tensor::zeros(y.shape());
        let dx = conv.backward(&x, &dy);
        assert!(dx.data().iter().all(|&v| v == 0.0));
        assert!(conv.weight.grad().unwrap().iter().all(|&v| v == 0.0));
        assert!(conv.bias.grad().unwrap().iter().all(|&v| v == 0.0));
    }
}
