//! Elementwise activations with explicit backward passes.
//!
//! Activations are free functions generic over array dimension; the forward
//! pass returns whatever state the backward pass needs (a mask or the output
//! itself), to be stored in the caller's cache struct.

use ndarray::{Array, Dimension};

/// ReLU. Returned mask holds 1 where the input was strictly positive.
pub fn relu_fwd<D: Dimension>(x: &Array<f32, D>) -> (Array<f32, D>, Array<u8, D>) {
    let y = x.mapv(|v| v.max(0.0));
    let mask = x.mapv(|v| (v > 0.0) as u8);
    (y, mask)
}

pub fn relu_bwd<D: Dimension>(dy: &Array<f32, D>, mask: &Array<u8, D>) -> Array<f32, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(mask, |d, &m| {
        if m == 0 {
            *d = 0.0;
        }
    });
    dx
}

/// Negative slope used by all leaky ReLUs in the gaze network.
pub const LEAKY_SLOPE: f32 = 0.2;

pub fn leaky_relu_fwd<D: Dimension>(x: &Array<f32, D>, slope: f32) -> (Array<f32, D>, Array<u8, D>) {
    let y = x.mapv(|v| if v > 0.0 { v } else { slope * v });
    let mask = x.mapv(|v| (v > 0.0) as u8);
    (y, mask)
}

pub fn leaky_relu_bwd<D: Dimension>(
    dy: &Array<f32, D>,
    mask: &Array<u8, D>,
    slope: f32,
) -> Array<f32, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(mask, |d, &m| {
        if m == 0 {
            *d *= slope;
        }
    });
    dx
}

/// Logistic sigmoid. The output doubles as the backward cache.
pub fn sigmoid_fwd<D: Dimension>(x: &Array<f32, D>) -> Array<f32, D> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn sigmoid_bwd<D: Dimension>(dy: &Array<f32, D>, y: &Array<f32, D>) -> Array<f32, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &yv| *d *= yv * (1.0 - yv));
    dx
}
