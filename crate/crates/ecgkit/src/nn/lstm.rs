//! Bidirectional LSTM. Each direction owns an independent parameter set; the
//! layer output is the elementwise sum of the two final hidden states, so a
//! hidden size of H yields an H-length feature vector.

use rand_chacha::ChaCha8Rng;

use crate::nn::act::sigmoid;
use crate::nn::ops::{add_bias_grad, addmm_dyw, addmm_dyx, addmm_xw};
use crate::nn::{glorot_uniform, Scalar, Tensor};

/// One direction of the LSTM. Gate parameters are stored stacked in the row
/// order input, forget, cell, output: `w` is [4H, feat], `u` is [4H, H],
/// `b` is [4H].
#[derive(Debug, Clone)]
pub struct LstmDirection<S: Scalar> {
    pub w: Tensor<S>,
    pub u: Tensor<S>,
    pub b: Tensor<S>,
    pub feat: usize,
    pub hidden: usize,
}

/// Per-invocation activations kept for backpropagation through time, stored
/// flat with one [batch, n] plane per step.
#[derive(Debug)]
pub struct DirectionCache<S: Scalar> {
    /// Post-activation gates, steps x [batch, 4H].
    gates: Vec<S>,
    /// Cell state, steps x [batch, H].
    c: Vec<S>,
    tanh_c: Vec<S>,
    /// Hidden state after each step, steps x [batch, H].
    h: Vec<S>,
    reverse: bool,
    batch: usize,
    steps: usize,
}

impl<S: Scalar> LstmDirection<S> {
    pub fn new(feat: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut b = vec![S::zero(); 4 * hidden];
        // forget-gate bias starts at +1 so early training retains state
        for v in &mut b[hidden..2 * hidden] {
            *v = S::one();
        }
        LstmDirection {
            w: glorot_uniform(&[4 * hidden, feat], feat, hidden, rng),
            u: glorot_uniform(&[4 * hidden, hidden], hidden, hidden, rng),
            b: Tensor::from_vec(&[4 * hidden], b).expect("shape agrees"),
            feat,
            hidden,
        }
    }

    /// Gathers x[:, t, :] into a contiguous [batch, feat] plane.
    fn gather_step(x: &[S], batch: usize, steps: usize, feat: usize, t: usize, out: &mut [S]) {
        for b in 0..batch {
            out[b * feat..(b + 1) * feat]
                .copy_from_slice(&x[(b * steps + t) * feat..][..feat]);
        }
    }

    /// Runs the recurrence over x [batch, T, feat], in reverse time order when
    /// `reverse` is set. Returns the final hidden state [batch, H].
    pub fn forward(&self, x: &Tensor<S>, reverse: bool) -> (Tensor<S>, DirectionCache<S>) {
        let (batch, steps, feat) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        assert_eq!(feat, self.feat, "lstm input feature width");
        assert!(steps >= 1, "lstm needs at least one timestep");
        let h_size = self.hidden;
        let g4 = 4 * h_size;
        let xd = x.data();

        let mut cache = DirectionCache {
            gates: vec![S::zero(); steps * batch * g4],
            c: vec![S::zero(); steps * batch * h_size],
            tanh_c: vec![S::zero(); steps * batch * h_size],
            h: vec![S::zero(); steps * batch * h_size],
            reverse,
            batch,
            steps,
        };

        // input projection for every step at once: bias + x_t . W^T
        let mut xt = vec![S::zero(); batch * feat];
        for s in 0..steps {
            let t = if reverse { steps - 1 - s } else { s };
            Self::gather_step(xd, batch, steps, feat, t, &mut xt);
            let pre = &mut cache.gates[s * batch * g4..(s + 1) * batch * g4];
            for b in 0..batch {
                pre[b * g4..(b + 1) * g4].copy_from_slice(self.b.data());
            }
            addmm_xw(batch, feat, g4, &xt, self.w.data(), pre);
        }

        let mut h_prev = vec![S::zero(); batch * h_size];
        let mut c_prev = vec![S::zero(); batch * h_size];
        for s in 0..steps {
            let base = s * batch;
            let gates = &mut cache.gates[base * g4..(base + batch) * g4];
            addmm_xw(batch, h_size, g4, &h_prev, self.u.data(), gates);

            let c = &mut cache.c[base * h_size..(base + batch) * h_size];
            let tanh_c = &mut cache.tanh_c[base * h_size..(base + batch) * h_size];
            let h = &mut cache.h[base * h_size..(base + batch) * h_size];
            for b in 0..batch {
                let g = &mut gates[b * g4..(b + 1) * g4];
                for k in 0..h_size {
                    let i_g = sigmoid(g[k]);
                    let f_g = sigmoid(g[h_size + k]);
                    let g_g = g[2 * h_size + k].tanh();
                    let o_g = sigmoid(g[3 * h_size + k]);
                    g[k] = i_g;
                    g[h_size + k] = f_g;
                    g[2 * h_size + k] = g_g;
                    g[3 * h_size + k] = o_g;
                    let idx = b * h_size + k;
                    let cv = f_g * c_prev[idx] + i_g * g_g;
                    let tc = cv.tanh();
                    c[idx] = cv;
                    tanh_c[idx] = tc;
                    h[idx] = o_g * tc;
                }
            }
            h_prev.copy_from_slice(h);
            c_prev.copy_from_slice(c);
        }

        let y = Tensor::from_vec(&[batch, h_size], h_prev).expect("shape agrees");
        (y, cache)
    }

    /// BPTT given the gradient of the final hidden state. Accumulates
    /// parameter gradients and adds the input gradient into `dx`.
    pub fn backward(
        &mut self,
        x: &Tensor<S>,
        cache: &DirectionCache<S>,
        d_final: &Tensor<S>,
        dx: &mut Tensor<S>,
    ) {
        let (batch, steps, h_size) = (cache.batch, cache.steps, self.hidden);
        let feat = self.feat;
        let g4 = 4 * h_size;
        let xd = x.data();
        let dxd = dx.data_mut();

        let mut dh = d_final.data().to_vec();
        let mut dc = vec![S::zero(); batch * h_size];
        let mut da = vec![S::zero(); batch * g4];
        let mut dxt = vec![S::zero(); batch * feat];
        let mut xt = vec![S::zero(); batch * feat];
        let zero_state = vec![S::zero(); batch * h_size];

        for s in (0..steps).rev() {
            let t = if cache.reverse { steps - 1 - s } else { s };
            let base = s * batch;
            let gates = &cache.gates[base * g4..(base + batch) * g4];
            let tanh_c = &cache.tanh_c[base * h_size..(base + batch) * h_size];
            let c_prev: &[S] = if s == 0 {
                &zero_state
            } else {
                &cache.c[(base - batch) * h_size..base * h_size]
            };
            let h_prev: &[S] = if s == 0 {
                &zero_state
            } else {
                &cache.h[(base - batch) * h_size..base * h_size]
            };

            for b in 0..batch {
                let g = &gates[b * g4..(b + 1) * g4];
                let da4 = &mut da[b * g4..(b + 1) * g4];
                for k in 0..h_size {
                    let idx = b * h_size + k;
                    let i_g = g[k];
                    let f_g = g[h_size + k];
                    let g_g = g[2 * h_size + k];
                    let o_g = g[3 * h_size + k];
                    let tc = tanh_c[idx];
                    let dcv = dc[idx] + dh[idx] * o_g * (S::one() - tc * tc);
                    let d_o = dh[idx] * tc;
                    let d_i = dcv * g_g;
                    let d_g = dcv * i_g;
                    let d_f = dcv * c_prev[idx];
                    dc[idx] = dcv * f_g;
                    da4[k] = d_i * i_g * (S::one() - i_g);
                    da4[h_size + k] = d_f * f_g * (S::one() - f_g);
                    da4[2 * h_size + k] = d_g * (S::one() - g_g * g_g);
                    da4[3 * h_size + k] = d_o * o_g * (S::one() - o_g);
                }
            }

            Self::gather_step(xd, batch, steps, feat, t, &mut xt);
            addmm_dyx(batch, feat, g4, &da, &xt, self.w.grad_mut());
            addmm_dyx(batch, h_size, g4, &da, h_prev, self.u.grad_mut());
            add_bias_grad(batch, g4, &da, self.b.grad_mut());

            dxt.iter_mut().for_each(|v| *v = S::zero());
            addmm_dyw(batch, feat, g4, &da, self.w.data(), &mut dxt);
            for b in 0..batch {
                let dst = &mut dxd[(b * steps + t) * feat..][..feat];
                for (d, &v) in dst.iter_mut().zip(&dxt[b * feat..(b + 1) * feat]) {
                    *d += v;
                }
            }

            dh.iter_mut().for_each(|v| *v = S::zero());
            addmm_dyw(batch, h_size, g4, &da, self.u.data(), &mut dh);
        }
    }
}

#[derive(Debug, Clone)]
pub struct BiLstm<S: Scalar> {
    pub fwd: LstmDirection<S>,
    pub bwd: LstmDirection<S>,
}

#[derive(Debug)]
pub struct BiLstmCache<S: Scalar> {
    pub fwd: DirectionCache<S>,
    pub bwd: DirectionCache<S>,
}

impl<S: Scalar> BiLstm<S> {
    pub fn new(feat: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        BiLstm {
            fwd: LstmDirection::new(feat, hidden, rng),
            bwd: LstmDirection::new(feat, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    /// x: [batch, T, feat] -> [batch, hidden]
    pub fn forward(&self, x: &Tensor<S>) -> (Tensor<S>, BiLstmCache<S>) {
        let (hf, cf) = self.fwd.forward(x, false);
        let (hb, cb) = self.bwd.forward(x, true);
        let data = hf
            .data()
            .iter()
            .zip(hb.data())
            .map(|(&a, &b)| a + b)
            .collect();
        let y = Tensor::from_vec(hf.shape(), data).expect("same shape");
        (y, BiLstmCache { fwd: cf, bwd: cb })
    }

    /// Returns dx; parameter gradients accumulate in both directions.
    pub fn backward(&mut self, x: &Tensor<S>, cache: &BiLstmCache<S>, dy: &Tensor<S>) -> Tensor<S> {
        let mut dx = Tensor::zeros(x.shape());
        self.fwd.backward(x, &cache.fwd, dy, &mut dx);
        self.bwd.backward(x, &cache.bwd, dy, &mut dx);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn zeroed(feat: usize, hidden: usize) -> BiLstm<f64> {
        let mut l = BiLstm::new(feat, hidden, &mut ChaCha8Rng::seed_from_u64(0));
        for t in [
            &mut l.fwd.w,
            &mut l.fwd.u,
            &mut l.fwd.b,
            &mut l.bwd.w,
            &mut l.bwd.u,
            &mut l.bwd.b,
        ] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        l
    }

    #[test]
    fn all_zero_parameters_give_zero_output() {
        let l = zeroed(3, 4);
        let x = Tensor::from_vec(&[2, 5, 3], (0..30).map(|i| i as f64 * 0.1 - 1.0).collect()).unwrap();
        let (y, _) = l.forward(&x);
        assert_eq!(y.shape(), &[2, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn swapping_directions_and_reversing_time_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = BiLstm::<f64>::new(2, 3, &mut rng);
        let mut swapped = l.clone();
        std::mem::swap(&mut swapped.fwd, &mut swapped.bwd);

        let t_len = 6;
        let x = Tensor::from_vec(
            &[1, t_len, 2],
            (0..t_len * 2).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        let mut rev_data = vec![0.0; t_len * 2];
        for t in 0..t_len {
            rev_data[t * 2..t * 2 + 2].copy_from_slice(&x.data()[(t_len - 1 - t) * 2..][..2]);
        }
        let x_rev = Tensor::from_vec(&[1, t_len, 2], rev_data).unwrap();

        let (y, _) = l.forward(&x);
        let (y_swap, _) = swapped.forward(&x_rev);
        for (a, b) in y.data().iter().zip(y_swap.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn forget_bias_initialized_to_one() {
        let l = BiLstm::<f32>::new(1, 5, &mut ChaCha8Rng::seed_from_u64(3));
        for dir in [&l.fwd, &l.bwd] {
            assert!(dir.b.data()[5..10].iter().all(|&v| v == 1.0));
            assert!(dir.b.data()[0..5].iter().all(|&v| v == 0.0));
            assert!(dir.b.data()[10..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn batch_rows_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let l = BiLstm::<f64>::new(2, 4, &mut rng);
        let data: Vec<f64> = (0..2 * 7 * 2).map(|i| (i as f64 * 0.19).cos()).collect();
        let x = Tensor::from_vec(&[2, 7, 2], data.clone()).unwrap();
        let (y, _) = l.forward(&x);
        let x0 = Tensor::from_vec(&[1, 7, 2], data[..14].to_vec()).unwrap();
        let (y0, _) = l.forward(&x0);
        for (a, b) in y.data()[..4].iter().zip(y0.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
