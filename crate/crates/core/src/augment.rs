//! Domain-randomization augmentations for 8-bit grayscale eye images.
//!
//! Images are carried as `Array2<f32>` on the integer grid [0, 255]; every
//! transform re-quantizes (round + clamp) before returning so repeated
//! augmentation cannot drift off the 8-bit lattice. Parameter-identity cases
//! (sigma = 0, factor = 0, full contrast range) return the input bit-exactly.

use crate::rng::Rng;
use crate::{contract, Result};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Enable flag and application probability for one transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformToggle {
    pub enabled: bool,
    pub p: f64,
}

impl Default for TransformToggle {
    fn default() -> Self {
        Self { enabled: true, p: 0.5 }
    }
}

/// Configuration for the randomized augmentation stack.
///
/// Ranges are inclusive and validated against the supported envelopes:
/// noise sigma within [0, 10] intensity levels, blur sigma within [0, 2] px,
/// cutout sides within [1, 10] px, downscale factor within [0, 0.5], at most
/// 2 random lines, contrast endpoints within [0, 100] and [155, 255].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub noise: TransformToggle,
    pub noise_sigma: (f64, f64),
    pub blur: TransformToggle,
    pub blur_sigma: (f64, f64),
    pub cutout: TransformToggle,
    pub cutout_side: (u32, u32),
    pub downscale: TransformToggle,
    pub downscale_factor: (f64, f64),
    pub lines: TransformToggle,
    pub lines_max: u32,
    pub contrast: TransformToggle,
    pub contrast_min: (f64, f64),
    pub contrast_max: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise: TransformToggle::default(),
            noise_sigma: (0.0, 10.0),
            blur: TransformToggle::default(),
            blur_sigma: (0.0, 2.0),
            cutout: TransformToggle::default(),
            cutout_side: (1, 10),
            downscale: TransformToggle::default(),
            downscale_factor: (0.0, 0.5),
            lines: TransformToggle::default(),
            lines_max: 2,
            contrast: TransformToggle::default(),
            contrast_min: (0.0, 100.0),
            contrast_max: (155.0, 255.0),
        }
    }
}

impl AugmentConfig {
    /// Disable every transform (used for evaluation-time loading).
    pub fn disabled() -> Self {
        let off = TransformToggle { enabled: false, p: 0.0 };
        Self {
            noise: off,
            blur: off,
            cutout: off,
            downscale: off,
            lines: off,
            contrast: off,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_range = |name: &str, r: (f64, f64), lo: f64, hi: f64| -> Result<()> {
            contract!(
                r.0.is_finite() && r.1.is_finite() && r.0 <= r.1 && r.0 >= lo && r.1 <= hi,
                "{name} range {:?} outside supported [{lo}, {hi}]",
                r
            );
            Ok(())
        };
        check_range("noise_sigma", self.noise_sigma, 0.0, 10.0)?;
        check_range("blur_sigma", self.blur_sigma, 0.0, 2.0)?;
        check_range("downscale_factor", self.downscale_factor, 0.0, 0.5)?;
        check_range("contrast_min", self.contrast_min, 0.0, 100.0)?;
        check_range("contrast_max", self.contrast_max, 155.0, 255.0)?;
        contract!(
            (1..=10).contains(&self.cutout_side.0)
                && self.cutout_side.0 <= self.cutout_side.1
                && self.cutout_side.1 <= 10,
            "cutout_side range {:?} outside supported [1, 10]",
            self.cutout_side
        );
        contract!(self.lines_max <= 2, "lines_max {} exceeds 2", self.lines_max);
        for (name, t) in [
            ("noise", self.noise),
            ("blur", self.blur),
            ("cutout", self.cutout),
            ("downscale", self.downscale),
            ("lines", self.lines),
            ("contrast", self.contrast),
        ] {
            contract!(
                (0.0..=1.0).contains(&t.p),
                "{name} probability {} outside [0, 1]",
                t.p
            );
        }
        Ok(())
    }
}

fn quantize(img: &mut Array2<f32>) {
    img.mapv_inplace(|v| v.round().clamp(0.0, 255.0));
}

/// Add iid Gaussian noise with standard deviation `sigma` intensity levels.
pub fn gaussian_noise(img: &mut Array2<f32>, sigma: f64, rng: &mut Rng) -> Result<()> {
    contract!((0.0..=10.0).contains(&sigma), "noise sigma {sigma} outside [0, 10]");
    if sigma == 0.0 {
        return Ok(());
    }
    let dist = Normal::new(0.0, sigma).expect("validated sigma");
    img.mapv_inplace(|v| v + dist.sample(rng) as f32);
    quantize(img);
    Ok(())
}

fn reflect101(i: i64, n: i64) -> usize {
    // Border reflection without edge repetition: -1 -> 1, n -> n-2.
    let r = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
    r.clamp(0, n - 1) as usize
}

/// 3x3 Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &mut Array2<f32>, sigma: f64) -> Result<()> {
    contract!((0.0..=2.0).contains(&sigma), "blur sigma {sigma} outside [0, 2]");
    if sigma == 0.0 {
        return Ok(());
    }
    let mut k = [[0.0f32; 3]; 3];
    let mut sum = 0.0f32;
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let v = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() as f32;
            k[(dy + 1) as usize][(dx + 1) as usize] = v;
            sum += v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    let (h, w) = img.dim();
    let src = img.clone();
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0f32;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let sy = reflect101(y as i64 + dy, h as i64);
                    let sx = reflect101(x as i64 + dx, w as i64);
                    acc += k[(dy + 1) as usize][(dx + 1) as usize] * src[[sy, sx]];
                }
            }
            img[[y, x]] = acc;
        }
    }
    quantize(img);
    Ok(())
}

/// Zero out a random rectangle with side lengths drawn from `side_range`.
pub fn cutout(img: &mut Array2<f32>, side_range: (u32, u32), rng: &mut Rng) -> Result<()> {
    let (h, w) = img.dim();
    contract!(
        side_range.0 >= 1 && side_range.0 <= side_range.1,
        "invalid cutout side range {side_range:?}"
    );
    contract!(
        side_range.1 as usize <= h && side_range.1 as usize <= w,
        "cutout side {} exceeds image {h}x{w}",
        side_range.1
    );
    let ch = rng.gen_range(side_range.0..=side_range.1) as usize;
    let cw = rng.gen_range(side_range.0..=side_range.1) as usize;
    let y0 = rng.gen_range(0..=h - ch);
    let x0 = rng.gen_range(0..=w - cw);
    img.slice_mut(ndarray::s![y0..y0 + ch, x0..x0 + cw]).fill(0.0);
    Ok(())
}

/// Simulate resolution loss: bilinear-resize to `round((1 - factor) * dims)`
/// and back to the original size.
pub fn downscale(img: &mut Array2<f32>, factor: f64) -> Result<()> {
    contract!((0.0..=0.5).contains(&factor), "downscale factor {factor} outside [0, 0.5]");
    if factor == 0.0 {
        return Ok(());
    }
    let (h, w) = img.dim();
    let sh = ((1.0 - factor) * h as f64).round().max(1.0) as usize;
    let sw = ((1.0 - factor) * w as f64).round().max(1.0) as usize;
    if (sh, sw) == (h, w) {
        return Ok(());
    }
    let small = crate::imgio::bilinear_resize(img, sh, sw);
    *img = crate::imgio::bilinear_resize(&small, h, w);
    quantize(img);
    Ok(())
}

/// Draw `count <= max_count` one-pixel lines between random border points,
/// each with a random constant intensity. `count` itself is random.
pub fn random_lines(img: &mut Array2<f32>, max_count: u32, rng: &mut Rng) -> Result<()> {
    contract!(max_count <= 2, "lines max_count {max_count} exceeds 2");
    let (h, w) = img.dim();
    contract!(h >= 2 && w >= 2, "random_lines needs at least 2x2 image");
    let count = rng.gen_range(0..=max_count);
    for _ in 0..count {
        let a = random_border_point(h, w, rng);
        let b = random_border_point(h, w, rng);
        let v = rng.gen_range(0.0..=255.0f32);
        for (r, c) in crate::imgio::bresenham(a, b) {
            img[[r as usize, c as usize]] = v;
        }
    }
    if count > 0 {
        quantize(img);
    }
    Ok(())
}

fn random_border_point(h: usize, w: usize, rng: &mut Rng) -> (i64, i64) {
    match rng.gen_range(0..4u8) {
        0 => (0, rng.gen_range(0..w) as i64),
        1 => (h as i64 - 1, rng.gen_range(0..w) as i64),
        2 => (rng.gen_range(0..h) as i64, 0),
        _ => (rng.gen_range(0..h) as i64, w as i64 - 1),
    }
}

/// Affine contrast remap: `out = r_min + in * (r_max - r_min) / 255`.
pub fn contrast_change(img: &mut Array2<f32>, r_min: f64, r_max: f64) -> Result<()> {
    contract!((0.0..=100.0).contains(&r_min), "contrast r_min {r_min} outside [0, 100]");
    contract!((155.0..=255.0).contains(&r_max), "contrast r_max {r_max} outside [155, 255]");
    if r_min == 0.0 && r_max == 255.0 {
        return Ok(());
    }
    let (a, b) = (r_min as f32, (r_max - r_min) as f32 / 255.0);
    img.mapv_inplace(|v| a + v * b);
    quantize(img);
    Ok(())
}

/// Apply the full randomized stack in fixed order
/// (contrast, blur, downscale, noise, lines, cutout), each transform gated by
/// its own probability and drawing fresh parameters from the config ranges.
pub fn apply_random(img: &mut Array2<f32>, cfg: &AugmentConfig, rng: &mut Rng) -> Result<()> {
    cfg.validate()?;
    if cfg.contrast.enabled && rng.gen_bool(cfg.contrast.p) {
        let r_min = rng.gen_range(cfg.contrast_min.0..=cfg.contrast_min.1);
        let r_max = rng.gen_range(cfg.contrast_max.0..=cfg.contrast_max.1);
        contrast_change(img, r_min, r_max)?;
    }
    if cfg.blur.enabled && rng.gen_bool(cfg.blur.p) {
        let sigma = rng.gen_range(cfg.blur_sigma.0..=cfg.blur_sigma.1);
        gaussian_blur(img, sigma)?;
    }
    if cfg.downscale.enabled && rng.gen_bool(cfg.downscale.p) {
        let f = rng.gen_range(cfg.downscale_factor.0..=cfg.downscale_factor.1);
        downscale(img, f)?;
    }
    if cfg.noise.enabled && rng.gen_bool(cfg.noise.p) {
        let sigma = rng.gen_range(cfg.noise_sigma.0..=cfg.noise_sigma.1);
        gaussian_noise(img, sigma, rng)?;
    }
    if cfg.lines.enabled && rng.gen_bool(cfg.lines.p) {
        random_lines(img, cfg.lines_max, rng)?;
    }
    if cfg.cutout.enabled && rng.gen_bool(cfg.cutout.p) {
        cutout(img, cfg.cutout_side, rng)?;
    }
    Ok(())
}
