//! Bilinear resize layer (used by the decoder to upsample onto skip shapes).
//!
//! Uses the half-pixel-center convention (`src = (dst + 0.5) * scale - 0.5`)
//! with edge clamping — the same convention as image-space resizing in the
//! augmentation stack. Resizing to a target shape (rather than by a fixed
//! factor) lets the decoder mirror an encoder with odd spatial sizes.

use ndarray::{Array4, Axis};

/// Precomputed 1D interpolation taps for one axis.
fn taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = in_len as f32 / out_len as f32;
    (0..out_len)
        .map(|o| {
            let s = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (s.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let f = (s - i0 as f32).clamp(0.0, 1.0);
            (i0, i1, f)
        })
        .collect()
}

/// Resize (N, C, H, W) to (N, C, out_h, out_w).
pub fn bilinear_fwd(x: &Array4<f32>, out_h: usize, out_w: usize) -> Array4<f32> {
    let (n, c, h, w) = x.dim();
    if (h, w) == (out_h, out_w) {
        return x.clone();
    }
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut y = Array4::zeros((n, c, out_h, out_w));
    for s in 0..n {
        for ci in 0..c {
            let xp = x.index_axis(Axis(0), s);
            let xp = xp.index_axis(Axis(0), ci);
            let xs = xp.as_slice().unwrap();
            let mut yp = y.index_axis_mut(Axis(0), s);
            let mut yp = yp.index_axis_mut(Axis(0), ci);
            let ys = yp.as_slice_mut().unwrap();
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = xs[y0 * w + x0] * (1.0 - fx) + xs[y0 * w + x1] * fx;
                    let bot = xs[y1 * w + x0] * (1.0 - fx) + xs[y1 * w + x1] * fx;
                    ys[oy * out_w + ox] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    y
}

/// Backward: scatter each output gradient onto its four source taps.
pub fn bilinear_bwd(dy: &Array4<f32>, in_h: usize, in_w: usize) -> Array4<f32> {
    let (n, c, oh, ow) = dy.dim();
    if (oh, ow) == (in_h, in_w) {
        return dy.clone();
    }
    let ty = taps(in_h, oh);
    let tx = taps(in_w, ow);
    let mut dx = Array4::zeros((n, c, in_h, in_w));
    for s in 0..n {
        for ci in 0..c {
            let dp = dy.index_axis(Axis(0), s);
            let dp = dp.index_axis(Axis(0), ci);
            let ds = dp.as_slice().unwrap();
            let mut op = dx.index_axis_mut(Axis(0), s);
            let mut op = op.index_axis_mut(Axis(0), ci);
            let os = op.as_slice_mut().unwrap();
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let g = ds[oy * ow + ox];
                    os[y0 * in_w + x0] += g * (1.0 - fy) * (1.0 - fx);
                    os[y0 * in_w + x1] += g * (1.0 - fy) * fx;
                    os[y1 * in_w + x0] += g * fy * (1.0 - fx);
                    os[y1 * in_w + x1] += g * fy * fx;
                }
            }
        }
    }
    dx
}
