use alloc::vec::Vec;

use rand::Rng;

use crate::tensor::{Real, Tensor};

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, with a gradient slot.
pub fn uniform_fan_in<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n)
        .map(|_| T::lit(rng.random_range(-bound..=bound)))
        .collect();
    Tensor::from_vec(shape, data)
        .expect("shape matches generated length")
        .requires_grad()
}

/// All-zero parameter tensor.
pub fn zeros<T: Real>(shape: &[usize]) -> Tensor<T> {
    Tensor::zeros(shape).requires_grad()
}
