//! Minimal CPU neural-network core: explicit forward/backward layers over
//! `ndarray`, an Adam optimizer, and learning-rate schedules.
//!
//! Design choices, in service of reproducibility on a single core:
//! - No autodiff: each layer exposes `forward` (filling a cache struct) and
//!   `backward` (consuming it). Models wire layers explicitly.
//! - All tensor math is sequential with fixed iteration order, so results
//!   are bit-identical across runs for a given seed.
//! - Gradients accumulate (`+=`) into [`Param::g`]; call sites zero them per
//!   optimizer step. This makes weight sharing (applying one layer several
//!   times per step) work without special cases.
//! - Matrix products go through `ndarray::linalg::general_mat_mul`, which
//!   dispatches to a fast single-threaded GEMM.

pub mod act;
pub mod adam;
pub mod conv;
pub mod dropout;
pub mod init;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod pool;
pub mod resize;

pub use act::{
    leaky_relu_bwd, leaky_relu_fwd, relu_bwd, relu_fwd, sigmoid_bwd, sigmoid_fwd, LEAKY_SLOPE,
};
pub use adam::{step_lr, zero_grads, Adam, Plateau};
pub use conv::{Conv2d, ConvCache};
pub use dropout::{dropout_bwd, dropout_fwd};
pub use linear::{Linear, LinearCache};
pub use loss::{mse_elements, mse_rows};
pub use norm::{BatchNorm2d, BnCache};
pub use pool::{global_avg_pool_bwd, global_avg_pool_fwd, MaxPool2d, PoolCache};
pub use resize::{bilinear_bwd, bilinear_fwd};

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD};

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub v: ArrayD<f32>,
    pub g: ArrayD<f32>,
}

impl Param {
    pub fn new(v: ArrayD<f32>) -> Self {
        let g = ArrayD::zeros(v.raw_dim());
        Self { v, g }
    }

    pub fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }

    pub fn numel(&self) -> usize {
        self.v.len()
    }
}

/// Named read-only view of a model tensor (trainable or buffer), used by
/// checkpoint serialization and checksumming.
pub struct TensorRef<'a> {
    pub name: String,
    pub view: ArrayViewD<'a, f32>,
}

/// Named mutable view, used when loading checkpoints.
pub struct TensorMut<'a> {
    pub name: String,
    pub view: ArrayViewMutD<'a, f32>,
}

/// Total number of scalars across a parameter list.
pub fn param_count(params: &[&Param]) -> usize {
    params.iter().map(|p| p.numel()).sum()
}

/// Euclidean norm of all gradients in a parameter list (f64 accumulation).
/// Accepts both `&[&Param]` and `&[&mut Param]` slices.
pub fn grad_norm<P: std::borrow::Borrow<Param>>(params: &[P]) -> f64 {
    let mut acc = 0.0f64;
    for p in params {
        for &g in p.borrow().g.iter() {
            acc += (g as f64) * (g as f64);
        }
    }
    acc.sqrt()
}

/// Concatenate feature maps along the channel axis into a standard-layout
/// array (conv layers require contiguous inputs; `ndarray::concatenate`
/// does not guarantee that).
pub fn concat_channels(parts: &[&ndarray::Array4<f32>]) -> ndarray::Array4<f32> {
    assert!(!parts.is_empty());
    let (n, _, h, w) = parts[0].dim();
    let total_c: usize = parts.iter().map(|p| p.dim().1).sum();
    for p in parts {
        assert_eq!((p.dim().0, p.dim().2, p.dim().3), (n, h, w), "concat spatial/batch dims");
    }
    let mut out = ndarray::Array4::zeros((n, total_c, h, w));
    let mut c0 = 0;
    for p in parts {
        let c = p.dim().1;
        out.slice_mut(ndarray::s![.., c0..c0 + c, .., ..]).assign(p);
        c0 += c;
    }
    out
}
