use rand::Rng as _;

use super::tensor::Tensor;
use crate::rng::Rng;

/// Kaiming-uniform initialisation for a leaky-ReLU network, fan-in mode:
/// `U(-b, b)` with `b = gain * sqrt(3 / fan_in)` and
/// `gain = sqrt(2 / (1 + slope^2))`.
pub fn kaiming_uniform(rng: &mut Rng, shape: &[usize], fan_in: usize, slope: f64) -> Tensor {
    let gain = (2.0 / (1.0 + slope * slope)).sqrt();
    let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
}

/// Bias initialisation `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn bias_uniform(rng: &mut Rng, len: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(&[len], |_| rng.gen_range(-bound..bound))
}
