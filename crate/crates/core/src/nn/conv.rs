//! 2D convolution via im2col + GEMM.
//!
//! Two execution strategies, chosen per layer from the output size alone
//! (so the choice is deterministic and data-independent):
//!
//! * Large feature maps unroll one sample at a time. The column matrix
//!   stays small (a few MB, cache-friendly) and the per-sample GEMM
//!   already has enough columns to run near peak.
//! * Small feature maps (deep layers with a handful of output pixels)
//!   unroll the whole batch into one column matrix. Per-sample GEMMs at
//!   those shapes have too few columns to amortize the kernel and run
//!   several times below peak; one wide GEMM fixes that.
//!
//! Both paths accumulate in a fixed order, keeping training bit-for-bit
//! reproducible.

use super::{init, Param, TensorMut, TensorRef};
use crate::rng::Rng;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Array4, ArrayView2, ArrayViewMut2, Axis};

/// Below this many output pixels per sample, the whole batch is unrolled
/// into a single GEMM. Chosen from microbenchmarks: at ~128+ columns a
/// per-sample GEMM is already efficient, below that it pays kernel setup
/// cost per sample, while the batched column buffer stays tiny.
const BATCHED_GEMM_MAX_PIXELS: usize = 128;

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Saved forward state: the input activation (columns are re-unrolled in
/// backward, trading a little compute for a large memory saving).
#[derive(Debug, Default)]
pub struct ConvCache {
    x: Option<Array4<f32>>,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize, rng: &mut Rng) -> Self {
        let fan_in = in_ch * k * k;
        Self {
            w: Param::new(init::he_normal(&[out_ch, in_ch, k, k], fan_in, rng)),
            b: Param::new(init::constant(&[out_ch], 0.0)),
            in_ch,
            out_ch,
            k,
            stride,
            pad,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    fn w_mat(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape(
            (self.out_ch, self.in_ch * self.k * self.k),
            self.w.v.as_slice().expect("weights are contiguous"),
        )
        .unwrap()
    }

    pub fn forward(&self, x: &Array4<f32>, cache: Option<&mut ConvCache>) -> Array4<f32> {
        let (n, ci, h, w) = x.dim();
        assert_eq!(ci, self.in_ch, "conv input channels");
        let (oh, ow) = self.out_hw(h, w);
        let ohow = oh * ow;
        let mut y = Array4::zeros((n, self.out_ch, oh, ow));
        let wmat = self.w_mat();
        let bias = self.b.v.as_slice().unwrap();
        if n > 1 && ohow < BATCHED_GEMM_MAX_PIXELS {
            // One GEMM over the whole batch: columns of all samples side by side.
            let ckk = self.in_ch * self.k * self.k;
            let mut cols = Array2::zeros((ckk, n * ohow));
            for s in 0..n {
                let xs = x.index_axis(Axis(0), s);
                im2col(
                    xs.as_slice().unwrap(),
                    (ci, h, w),
                    self.k,
                    self.stride,
                    self.pad,
                    (oh, ow),
                    cols.as_slice_mut().unwrap(),
                    n * ohow,
                    s * ohow,
                );
            }
            let mut ymat = Array2::zeros((self.out_ch, n * ohow));
            general_mat_mul(1.0, &wmat, &cols.view(), 0.0, &mut ymat);
            let ym = ymat.as_slice().unwrap();
            let ys = y.as_slice_mut().unwrap();
            for s in 0..n {
                for co in 0..self.out_ch {
                    let src = &ym[co * n * ohow + s * ohow..co * n * ohow + (s + 1) * ohow];
                    let dst = &mut ys[(s * self.out_ch + co) * ohow..(s * self.out_ch + co + 1) * ohow];
                    let bv = bias[co];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = v + bv;
                    }
                }
            }
        } else {
            let mut cols = Array2::zeros((self.in_ch * self.k * self.k, ohow));
            for s in 0..n {
                let xs = x.index_axis(Axis(0), s);
                im2col(
                    xs.as_slice().unwrap(),
                    (ci, h, w),
                    self.k,
                    self.stride,
                    self.pad,
                    (oh, ow),
                    cols.as_slice_mut().unwrap(),
                    ohow,
                    0,
                );
                let mut ys = y.index_axis_mut(Axis(0), s);
                let ys_slice = ys.as_slice_mut().unwrap();
                {
                    let mut ymat =
                        ArrayViewMut2::from_shape((self.out_ch, ohow), ys_slice).unwrap();
                    general_mat_mul(1.0, &wmat, &cols.view(), 0.0, &mut ymat);
                }
                for co in 0..self.out_ch {
                    let bv = bias[co];
                    for v in &mut ys_slice[co * ohow..(co + 1) * ohow] {
                        *v += bv;
                    }
                }
            }
        }
        if let Some(c) = cache {
            c.x = Some(x.clone());
        }
        y
    }

    /// Backward pass: accumulates weight/bias gradients and returns dL/dx.
    pub fn backward(&mut self, dy: &Array4<f32>, cache: &ConvCache) -> Array4<f32> {
        let x = cache.x.as_ref().expect("conv backward without forward cache");
        let (n, ci, h, w) = x.dim();
        let (oh, ow) = self.out_hw(h, w);
        let ohow = oh * ow;
        assert_eq!(dy.dim(), (n, self.out_ch, oh, ow), "conv dy shape");
        let mut dx = Array4::zeros((n, ci, h, w));
        let ckk = self.in_ch * self.k * self.k;
        let wmat = ArrayView2::from_shape(
            (self.out_ch, ckk),
            self.w.v.as_slice().unwrap(),
        )
        .unwrap();
        // Split borrows: gradient views live alongside the weight view above.
        let mut dwmat =
            ArrayViewMut2::from_shape((self.out_ch, ckk), self.w.g.as_slice_mut().unwrap())
                .unwrap();
        let dbias = self.b.g.as_slice_mut().unwrap();
        if n > 1 && ohow < BATCHED_GEMM_MAX_PIXELS {
            let mut cols = Array2::zeros((ckk, n * ohow));
            for s in 0..n {
                let xs = x.index_axis(Axis(0), s);
                im2col(
                    xs.as_slice().unwrap(),
                    (ci, h, w),
                    self.k,
                    self.stride,
                    self.pad,
                    (oh, ow),
                    cols.as_slice_mut().unwrap(),
                    n * ohow,
                    s * ohow,
                );
            }
            // Gather dY into (out_ch, n*ohow) with samples side by side per row.
            let mut dymat = Array2::zeros((self.out_ch, n * ohow));
            {
                let dm = dymat.as_slice_mut().unwrap();
                let ds = dy.as_slice().unwrap();
                for s in 0..n {
                    for co in 0..self.out_ch {
                        let src = &ds[(s * self.out_ch + co) * ohow..(s * self.out_ch + co + 1) * ohow];
                        dm[co * n * ohow + s * ohow..co * n * ohow + (s + 1) * ohow]
                            .copy_from_slice(src);
                    }
                }
            }
            general_mat_mul(1.0, &dymat.view(), &cols.t(), 1.0, &mut dwmat);
            let mut dcols = Array2::zeros((ckk, n * ohow));
            general_mat_mul(1.0, &wmat.t(), &dymat.view(), 0.0, &mut dcols);
            for co in 0..self.out_ch {
                let mut acc = 0.0f32;
                for &v in dymat.row(co) {
                    acc += v;
                }
                dbias[co] += acc;
            }
            for s in 0..n {
                let mut dxs = dx.index_axis_mut(Axis(0), s);
                col2im_add(
                    dcols.as_slice().unwrap(),
                    (ci, h, w),
                    self.k,
                    self.stride,
                    self.pad,
                    (oh, ow),
                    dxs.as_slice_mut().unwrap(),
                    n * ohow,
                    s * ohow,
                );
            }
        } else {
            let mut cols = Array2::zeros((ckk, ohow));
            let mut dcols = Array2::zeros((ckk, ohow));
            for s in 0..n {
                let xs = x.index_axis(Axis(0), s);
                im2col(
                    xs.as_slice().unwrap(),
                    (ci, h, w),
                    self.k,
                    self.stride,
                    self.pad,
                    (oh, ow),
                    cols.as_slice_mut().unwrap(),
                    ohow,
                    0,
                );
                let dys = dy.index_axis(Axis(0), s);
                let dymat =
                    ArrayView2::from_shape((self.out_ch, ohow), dys.as_slice().unwrap()).unwrap();
                // dW += dY · colsᵀ ; dcols = Wᵀ · dY
                general_mat_mul(1.0, &dymat, &cols.t(), 1.0, &mut dwmat);
                general_mat_mul(1.0, &wmat.t(), &dymat, 0.0, &mut dcols);
                for co in 0..self.out_ch {
                    let mut acc = 0.0f32;
                    for &v in dymat.row(co) {
                        acc += v;
                    }
                    dbias[co] += acc;
                }
                let mut dxs = dx.index_axis_mut(Axis(0), s);
                col2im_add(
                    dcols.as_slice().unwrap(),
                    (ci, h, w),
                    self.k,
                    self.stride,
                    self.pad,
                    (oh, ow),
                    dxs.as_slice_mut().unwrap(),
                    ohow,
                    0,
                );
            }
        }
        dx
    }

    pub fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(TensorRef { name: format!("{prefix}.weight"), view: self.w.v.view() });
        out.push(TensorRef { name: format!("{prefix}.bias"), view: self.b.v.view() });
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        out.push(TensorMut { name: format!("{prefix}.weight"), view: self.w.v.view_mut() });
        out.push(TensorMut { name: format!("{prefix}.bias"), view: self.b.v.view_mut() });
    }
}

/// Unroll one sample (C, H, W) into columns of a (C*k*k, row_len) matrix,
/// writing `OH*OW` columns starting at `col_off`, zero-padding out-of-bounds
/// taps. `x` and `cols` are contiguous row-major slices. The per-sample path
/// passes `row_len = OH*OW, col_off = 0`; the batched path interleaves all
/// samples into one matrix.
#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f32],
    (ci, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    cols: &mut [f32],
    row_len: usize,
    col_off: usize,
) {
    for c in 0..ci {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let base = row * row_len + col_off;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut cols[base + oy * ow..base + (oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src_row = c * h * w + iy as usize * w;
                    if stride == 1 {
                        // Valid ox range: 0 <= ox + kx - pad < w.
                        let lo = pad.saturating_sub(kx);
                        let hi = (w + pad - kx).min(ow);
                        dst[..lo.min(ow)].fill(0.0);
                        if hi > lo {
                            let off = lo + kx - pad;
                            dst[lo..hi].copy_from_slice(&x[src_row + off..src_row + off + hi - lo]);
                        }
                        if hi < ow {
                            dst[hi..].fill(0.0);
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            *d = if ix >= 0 && ix < w as isize {
                                x[src_row + ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Transpose of [`im2col`]: scatter-add one sample's columns back onto the
/// image grid, reading from a (C*k*k, row_len) matrix at `col_off`.
#[allow(clippy::too_many_arguments)]
fn col2im_add(
    cols: &[f32],
    (ci, h, w): (usize, usize, usize),
    k: usize,
    stride: usize,
    pad: usize,
    (oh, ow): (usize, usize),
    dx: &mut [f32],
    row_len: usize,
    col_off: usize,
) {
    for c in 0..ci {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let base = row * row_len + col_off;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &cols[base + oy * ow..base + (oy + 1) * ow];
                    let dst_row = c * h * w + iy as usize * w;
                    if stride == 1 {
                        let lo = pad.saturating_sub(kx);
                        let hi = (w + pad - kx).min(ow);
                        if hi > lo {
                            let off = lo + kx - pad;
                            let d = &mut dx[dst_row + off..dst_row + off + hi - lo];
                            for (dv, sv) in d.iter_mut().zip(&src[lo..hi]) {
                                *dv += sv;
                            }
                        }
                    } else {
                        for (ox, sv) in src.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                dx[dst_row + ix as usize] += sv;
                            }
                        }
                    }
                }
            }
        }
    }
}
