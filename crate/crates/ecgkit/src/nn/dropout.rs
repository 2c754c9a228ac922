//! Inverted dropout: survivors are scaled by 1/(1-rate) at train time so
//! eval mode is the identity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Mode, Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Dropout { rate }
    }

    /// Returns the output and, in train mode with rate > 0, the multiplicative
    /// mask the backward pass reuses.
    pub fn forward<S: Scalar>(
        &self,
        x: &Tensor<S>,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> (Tensor<S>, Option<Vec<S>>) {
        if mode == Mode::Eval || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let keep_scale = S::from_f64(1.0 / (1.0 - self.rate));
        let mask: Vec<S> = (0..x.len())
            .map(|_| {
                if rng.gen::<f64>() < self.rate {
                    S::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        (
            Tensor::from_vec(x.shape(), data).expect("same shape"),
            Some(mask),
        )
    }

    pub fn backward<S: Scalar>(mask: Option<&Vec<S>>, dy: &Tensor<S>) -> Tensor<S> {
        match mask {
            None => dy.clone(),
            Some(m) => {
                let data = dy.data().iter().zip(m).map(|(&g, &s)| g * s).collect();
                Tensor::from_vec(dy.shape(), data).expect("same shape")
            }
        }
    }
}
