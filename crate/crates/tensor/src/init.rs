use rand::Rng;

use crate::tensor::Tensor;

/// Uniform in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
pub fn uniform_fan_in(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data built together")
}
