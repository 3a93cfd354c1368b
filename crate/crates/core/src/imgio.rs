//! Grayscale PNG I/O and small image primitives shared across the pipeline.

use crate::{Error, Result};
use ndarray::Array2;
use std::path::Path;

/// Fixed eye-patch height in pixels.
pub const IMG_H: usize = 36;
/// Fixed eye-patch width in pixels.
pub const IMG_W: usize = 60;

/// Load an 8-bit grayscale PNG into a (H, W) array.
pub fn load_gray_png(path: &Path) -> Result<Array2<u8>> {
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("{}: failed to decode PNG: {e}", path.display())))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw();
    Array2::from_shape_vec((h, w), data)
        .map_err(|e| Error::Data(format!("{}: bad PNG buffer: {e}", path.display())))
}

/// Save a (H, W) array as an 8-bit grayscale PNG.
pub fn save_gray_png(path: &Path, img: &Array2<u8>) -> Result<()> {
    let (h, w) = img.dim();
    let buf: Vec<u8> = img.iter().copied().collect();
    let out = image::GrayImage::from_raw(w as u32, h as u32, buf)
        .expect("buffer size matches dimensions");
    out.save(path)
        .map_err(|e| Error::Data(format!("{}: failed to write PNG: {e}", path.display())))
}

/// Save an RGB (H, W, 3) buffer as PNG. Used by plot rendering.
pub fn save_rgb_png(path: &Path, h: usize, w: usize, buf: Vec<u8>) -> Result<()> {
    assert_eq!(buf.len(), h * w * 3);
    let out = image::RgbImage::from_raw(w as u32, h as u32, buf)
        .expect("buffer size matches dimensions");
    out.save(path)
        .map_err(|e| Error::Data(format!("{}: failed to write PNG: {e}", path.display())))
}

/// Convert a u8 image to f32 without rescaling (values stay in [0, 255]).
pub fn to_f32(img: &Array2<u8>) -> Array2<f32> {
    img.mapv(|v| v as f32)
}

/// Quantize an f32 image in [0, 255] back to u8 with round-half-away-from-zero.
pub fn to_u8(img: &Array2<f32>) -> Array2<u8> {
    img.mapv(|v| v.round().clamp(0.0, 255.0) as u8)
}

/// Bilinear resample to an arbitrary target size using the half-pixel-center
/// convention: `src = (dst + 0.5) * (src_len / dst_len) - 0.5`, edges clamped.
///
/// The same convention is used by the decoder upsampling inside the network,
/// so augmentation-time downscaling and model-time resizing agree.
pub fn bilinear_resize(src: &Array2<f32>, out_h: usize, out_w: usize) -> Array2<f32> {
    let (in_h, in_w) = src.dim();
    assert!(in_h > 0 && in_w > 0 && out_h > 0 && out_w > 0);
    if (in_h, in_w) == (out_h, out_w) {
        return src.clone();
    }
    let scale_y = in_h as f32 / out_h as f32;
    let scale_x = in_w as f32 / out_w as f32;
    let mut out = Array2::zeros((out_h, out_w));
    for oy in 0..out_h {
        let sy = ((oy as f32 + 0.5) * scale_y - 0.5).max(0.0);
        let y0 = (sy.floor() as usize).min(in_h - 1);
        let y1 = (y0 + 1).min(in_h - 1);
        let fy = (sy - y0 as f32).clamp(0.0, 1.0);
        for ox in 0..out_w {
            let sx = ((ox as f32 + 0.5) * scale_x - 0.5).max(0.0);
            let x0 = (sx.floor() as usize).min(in_w - 1);
            let x1 = (x0 + 1).min(in_w - 1);
            let fx = (sx - x0 as f32).clamp(0.0, 1.0);
            let top = src[[y0, x0]] * (1.0 - fx) + src[[y0, x1]] * fx;
            let bot = src[[y1, x0]] * (1.0 - fx) + src[[y1, x1]] * fx;
            out[[oy, ox]] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Integer points of an 8-connected Bresenham line from `a` to `b`, inclusive.
/// Coordinates are (row, col).
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut r0, mut c0) = a;
    let (r1, c1) = b;
    let dr = (r1 - r0).abs();
    let dc = (c1 - c0).abs();
    let sr = if r0 < r1 { 1 } else { -1 };
    let sc = if c0 < c1 { 1 } else { -1 };
    let mut err = dc - dr;
    let mut pts = Vec::with_capacity((dr.max(dc) + 1) as usize);
    loop {
        pts.push((r0, c0));
        if r0 == r1 && c0 == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c0 += sc;
        }
        if e2 < dc {
            err += dc;
            r0 += sr;
        }
    }
    pts
}
