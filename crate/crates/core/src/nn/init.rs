//! Weight initialization.

use crate::rng::Rng;
use ndarray::{ArrayD, IxDyn};
use rand_distr::{Distribution, Normal};

/// He (Kaiming) normal initialization: N(0, sqrt(2 / fan_in)).
///
/// Appropriate for layers followed by ReLU-family activations; keeps forward
/// activation variance roughly constant with depth.
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> ArrayD<f32> {
    assert!(fan_in > 0);
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid std");
    ArrayD::from_shape_simple_fn(IxDyn(shape), || dist.sample(rng) as f32)
}

/// Constant-filled tensor (bias initialization).
pub fn constant(shape: &[usize], value: f32) -> ArrayD<f32> {
    ArrayD::from_elem(IxDyn(shape), value)
}
