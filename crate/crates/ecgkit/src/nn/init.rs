//! Parameter initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nn::{Scalar, Tensor};

/// Uniform Glorot initialization in +/- sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<S: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor<S> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape/product agree by construction")
}
