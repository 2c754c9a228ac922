//! Max pooling over the time axis of [batch, channels, length].

use crate::nn::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct MaxPool1d {
    pub kernel: usize,
    pub stride: usize,
}

impl MaxPool1d {
    pub fn new(kernel: usize, stride: usize) -> Self {
        assert!(kernel >= 1 && stride >= 1);
        MaxPool1d { kernel, stride }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        if in_len < self.kernel {
            0
        } else {
            (in_len - self.kernel) / self.stride + 1
        }
    }

    /// Returns the pooled tensor plus the argmax index (into the input time
    /// axis) for every output element. Ties pick the first index.
    pub fn forward<S: Scalar>(&self, x: &Tensor<S>) -> (Tensor<S>, Vec<usize>) {
        let (batch, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let lo = self.out_len(l);
        let xd = x.data();
        let mut y = vec![S::zero(); batch * c * lo];
        let mut arg = vec![0usize; batch * c * lo];
        for bc in 0..batch * c {
            let xr = &xd[bc * l..][..l];
            let yr = &mut y[bc * lo..][..lo];
            let ar = &mut arg[bc * lo..][..lo];
            for t in 0..lo {
                let start = t * self.stride;
                let mut best = xr[start];
                let mut best_i = start;
                for i in start + 1..start + self.kernel {
                    if xr[i] > best {
                        best = xr[i];
                        best_i = i;
                    }
                }
                yr[t] = best;
                ar[t] = best_i;
            }
        }
        (
            Tensor::from_vec(&[batch, c, lo], y).expect("shape agrees"),
            arg,
        )
    }

    /// Routes each upstream gradient to its argmax position.
    pub fn backward<S: Scalar>(&self, argmax: &[usize], dy: &Tensor<S>, in_len: usize) -> Tensor<S> {
        let (batch, c, lo) = (dy.shape()[0], dy.shape()[1], dy.shape()[2]);
        let dyd = dy.data();
        let mut dx = vec![S::zero(); batch * c * in_len];
        for bc in 0..batch * c {
            let dyr = &dyd[bc * lo..][..lo];
            let ar = &argmax[bc * lo..][..lo];
            let dxr = &mut dx[bc * in_len..][..in_len];
            for t in 0..lo {
                dxr[ar[t]] += dyr[t];
            }
        }
        Tensor::from_vec(&[batch, c, in_len], dx).expect("shape agrees")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pools_pairs() {
        let p = MaxPool1d::new(2, 2);
        let x = Tensor::from_vec(&[1, 1, 4], vec![1.0_f64, 3.0, 2.0, 0.0]).unwrap();
        let (y, arg) = p.forward(&x);
        assert_eq!(y.data(), &[3.0, 2.0]);
        assert_eq!(arg, vec![1, 2]);
    }

    #[test]
    fn constant_input_stays_constant() {
        let p = MaxPool1d::new(2, 2);
        let x = Tensor::from_vec(&[1, 1, 6], vec![0.7_f64; 6]).unwrap();
        let (y, _) = p.forward(&x);
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn backward_routes_only_to_argmax() {
        let p = MaxPool1d::new(2, 2);
        let x = Tensor::from_vec(&[1, 1, 4], vec![1.0_f64, 3.0, 2.0, 0.0]).unwrap();
        let (_, arg) = p.forward(&x);
        let dy = Tensor::from_vec(&[1, 1, 2], vec![5.0, 7.0]).unwrap();
        let dx = p.backward(&arg, &dy, 4);
        assert_eq!(dx.data(), &[0.0, 5.0, 7.0, 0.0]);
    }
}
