//! Weight initialization.

use super::{Real, Tensor};
use rand::Rng;

/// He/Kaiming uniform initialization for ReLU networks:
/// `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn kaiming_uniform<F: Real>(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor<F> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| F::from_f64_lossy(rng.gen_range(-bound..bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}
