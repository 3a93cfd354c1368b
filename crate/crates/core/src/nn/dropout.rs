//! Inverted dropout: activations are scaled by 1/(1-p) at train time so
//! evaluation is a plain identity.

use crate::rng::Rng;
use ndarray::{Array, Dimension};
use rand::Rng as _;

/// Forward pass. Returns the output and, in train mode with p > 0, the
/// combined keep/scale mask needed by the backward pass.
pub fn dropout_fwd<D: Dimension>(
    x: &Array<f32, D>,
    p: f64,
    train: bool,
    rng: &mut Rng,
) -> (Array<f32, D>, Option<Array<f32, D>>) {
    assert!((0.0..1.0).contains(&p), "dropout p {p} must be in [0, 1)");
    if !train || p == 0.0 {
        return (x.clone(), None);
    }
    let scale = (1.0 / (1.0 - p)) as f32;
    let mask = x.mapv(|_| if rng.gen_bool(1.0 - p) { scale } else { 0.0 });
    (x * &mask, Some(mask))
}

pub fn dropout_bwd<D: Dimension>(dy: &Array<f32, D>, mask: &Option<Array<f32, D>>) -> Array<f32, D> {
    match mask {
        Some(m) => dy * m,
        None => dy.clone(),
    }
}
