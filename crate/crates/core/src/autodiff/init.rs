use rand::distributions::{Distribution, Uniform};

use crate::scalar::Scalar;
use crate::seed::rng_from;

use super::Tensor;

/// Glorot/Xavier uniform: entries i.i.d. in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
///
/// Values are drawn in f64 and rounded, so every scalar type sees the same
/// initialization for a given seed.
pub fn xavier_uniform_init<T: Scalar>(shape: Vec<usize>, fan_in: usize, fan_out: usize, seed: u64) -> Tensor<T> {
    assert!(fan_in > 0 && fan_out > 0, "fans must be positive");
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let mut rng = rng_from(seed);
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::of(dist.sample(&mut rng))).collect();
    Tensor::new(shape, data).expect("length derived from shape")
}
