//! Procedural synthetic eye renderer with analytically exact landmarks.
//!
//! The model is 2D-layered and orthographic: an eyeball sphere of fixed
//! projected radius sits behind two parabolic eyelid arcs; the iris is the
//! gaze-rotated disk on that sphere, projecting to an ellipse; a darker
//! pupil and an optional specular glint sit inside it; everything is scaled
//! by a light-intensity factor. Landmarks fall out of the same geometry, so
//! masks rasterized from them agree with the image by construction.
//!
//! All texture terms are functions of the distance to the eyeball center,
//! the vertical coordinate, or the (even) elliptical harmonics of the iris
//! angle. That makes the rendered image mirror-symmetric: negating gaze yaw
//! and head yaw and reflecting the eyeball center about the vertical image
//! axis yields the horizontally flipped image (up to quantization).

use crate::maskgen;
use crate::metrics::GazeLabel;
use crate::rng::{derived_rng, Rng};
use crate::{contract, Error, Result};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Image height (rows).
pub const H: usize = crate::imgio::IMG_H;
/// Image width (columns).
pub const W: usize = crate::imgio::IMG_W;
/// Projected eyeball radius in pixels (orthographic).
pub const EYEBALL_RADIUS_PX: f64 = 12.0;
/// Minimum eyelid aperture before the arcs degenerate.
pub const MIN_APERTURE: f64 = 0.05;

/// Half-width of the eye opening (corner distance from eyeball center).
const EYE_HALF_WIDTH: f64 = 21.0;
/// Upper/lower lid apex heights at aperture 1.0.
const UPPER_LID_HEIGHT: f64 = 9.0;
const LOWER_LID_HEIGHT: f64 = 5.5;
/// Anti-aliasing ramp width in pixels.
const AA: f64 = 0.7;

/// Full scene description; rendering is a pure function of this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeSceneParams {
    pub gaze: GazeLabel,
    /// (pitch, yaw) in radians.
    pub head_pose: (f64, f64),
    pub light_intensity: f64,
    pub iris_radius_px: f64,
    /// (x, y) in pixel coordinates.
    pub eyeball_center_px: [f64; 2],
    /// Eyelid opening fraction in (0, 1].
    pub aperture: f64,
    pub texture_seed: u64,
}

/// Sampling ranges for every scene parameter (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamRanges {
    pub gaze_pitch: (f64, f64),
    pub gaze_yaw: (f64, f64),
    pub head_pitch: (f64, f64),
    pub head_yaw: (f64, f64),
    pub light: (f64, f64),
    pub iris_radius: (f64, f64),
    pub eyeball_cx: (f64, f64),
    pub eyeball_cy: (f64, f64),
    pub aperture: (f64, f64),
}

impl Default for ParamRanges {
    fn default() -> Self {
        let d = |deg: f64| deg.to_radians();
        Self {
            gaze_pitch: (-d(49.49), d(49.49)),
            gaze_yaw: (-d(78.28), d(78.28)),
            head_pitch: (-d(20.0), d(20.0)),
            head_yaw: (-d(40.0), d(40.0)),
            light: (0.60, 1.20),
            iris_radius: (8.0, 10.0),
            eyeball_cx: (29.0, 31.0),
            eyeball_cy: (17.5, 18.5),
            aperture: (0.55, 1.0),
        }
    }
}

impl ParamRanges {
    /// Check internal consistency and the supported envelope.
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("gaze_pitch", self.gaze_pitch, -(49.49f64.to_radians()), 49.49f64.to_radians()),
            ("gaze_yaw", self.gaze_yaw, -(78.28f64.to_radians()), 78.28f64.to_radians()),
            ("head_pitch", self.head_pitch, -(20.0f64.to_radians()), 20.0f64.to_radians()),
            ("head_yaw", self.head_yaw, -(40.0f64.to_radians()), 40.0f64.to_radians()),
            ("light", self.light, 0.60, 1.20),
            ("iris_radius", self.iris_radius, 6.0, 10.5),
            ("eyeball_cx", self.eyeball_cx, 25.0, 35.0),
            ("eyeball_cy", self.eyeball_cy, 15.0, 21.0),
            ("aperture", self.aperture, MIN_APERTURE, 1.0),
        ];
        for (name, (lo, hi), min, max) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("range {name}: min {lo} > max {hi} or non-finite")));
            }
            if lo < min - 1e-12 || hi > max + 1e-12 {
                return Err(Error::Config(format!(
                    "range {name} [{lo}, {hi}] outside supported [{min}, {max}]"
                )));
            }
        }
        Ok(())
    }
}

/// One rendered sample: image plus exact landmark annotations.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub image: Array2<u8>,
    /// 32 points on the projected iris ellipse, counterclockwise from the
    /// rightmost point.
    pub iris_landmarks: Vec<[f64; 2]>,
    /// 16 interior contour points: outer corner, 7 upper-lid points,
    /// inner corner, 7 lower-lid points.
    pub interior_landmarks: Vec<[f64; 2]>,
    /// 6 points clustered at the inner corner.
    pub caruncle_landmarks: Vec<[f64; 2]>,
    pub gaze: GazeLabel,
    pub params: EyeSceneParams,
}

/// Draw scene parameters uniformly and independently within `ranges`.
pub fn sample_scene(rng: &mut Rng, ranges: &ParamRanges) -> Result<EyeSceneParams> {
    ranges.validate()?;
    let mut draw = |r: (f64, f64)| -> f64 {
        if r.0 == r.1 {
            r.0
        } else {
            rng.gen_range(r.0..=r.1)
        }
    };
    let gaze_pitch = draw(ranges.gaze_pitch);
    let gaze_yaw = draw(ranges.gaze_yaw);
    let head_pitch = draw(ranges.head_pitch);
    let head_yaw = draw(ranges.head_yaw);
    let light = draw(ranges.light);
    let iris_radius = draw(ranges.iris_radius);
    let cx = draw(ranges.eyeball_cx);
    let cy = draw(ranges.eyeball_cy);
    let aperture = draw(ranges.aperture);
    let texture_seed = rng.gen::<u64>();
    Ok(EyeSceneParams {
        gaze: GazeLabel::new(gaze_pitch, gaze_yaw)?,
        head_pose: (head_pitch, head_yaw),
        light_intensity: light,
        iris_radius_px: iris_radius,
        eyeball_center_px: [cx, cy],
        aperture,
        texture_seed,
    })
}

/// Per-sample texture parameters, derived deterministically from the seed.
struct Texture {
    skin_base: f64,
    skin_amp: f64,
    skin_freq: f64,
    skin_phase: f64,
    vgrad: f64,
    scl_base: f64,
    scl_amp: f64,
    scl_freq: f64,
    scl_phase: f64,
    corner_dark: f64,
    iris_base: f64,
    streak_amp: f64,
    harmonics: [f64; 3],
    limbal: f64,
    pupil_ratio: f64,
    pupil_base: f64,
}

impl Texture {
    fn from_seed(seed: u64) -> Self {
        let mut r = derived_rng(seed, "texture", 0);
        let mut u = |lo: f64, hi: f64| r.gen_range(lo..=hi);
        Self {
            skin_base: u(172.0, 186.0),
            skin_amp: u(4.0, 8.0),
            skin_freq: u(0.10, 0.16),
            skin_phase: u(0.0, std::f64::consts::TAU),
            vgrad: u(-0.5, 0.5),
            scl_base: u(226.0, 240.0),
            scl_amp: u(3.0, 6.0),
            scl_freq: u(0.25, 0.45),
            scl_phase: u(0.0, std::f64::consts::TAU),
            corner_dark: u(14.0, 22.0),
            iris_base: u(68.0, 92.0),
            streak_amp: u(6.0, 14.0),
            harmonics: [u(0.3, 1.0), u(0.3, 1.0), u(0.3, 1.0)],
            limbal: u(12.0, 20.0),
            pupil_ratio: u(0.38, 0.46),
            pupil_base: u(22.0, 36.0),
        }
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Eyelid geometry shared by the rasterizer and the landmark generator.
struct Lids {
    outer: [f64; 2],
    inner: [f64; 2],
    upper_h: f64,
    lower_h: f64,
}

impl Lids {
    fn new(p: &EyeSceneParams) -> Self {
        let [cx, cy] = p.eyeball_center_px;
        let (hp, hy) = p.head_pose;
        // Head pose slides the eye opening across the (fixed) eyeball.
        let sx = 3.0 * hy.sin();
        let sy = 1.5 * hp.sin();
        let corner_y = cy + 0.8 + sy;
        Self {
            outer: [cx - EYE_HALF_WIDTH + sx, corner_y],
            inner: [cx + EYE_HALF_WIDTH + sx, corner_y],
            upper_h: UPPER_LID_HEIGHT * p.aperture,
            lower_h: LOWER_LID_HEIGHT * p.aperture,
        }
    }

    /// Point on a lid arc at parameter s in [0, 1] (0 = outer corner).
    fn arc(&self, s: f64, upper: bool) -> [f64; 2] {
        let x = self.outer[0] + (self.inner[0] - self.outer[0]) * s;
        let y = self.outer[1] + (self.inner[1] - self.outer[1]) * s;
        let bulge = 4.0 * s * (1.0 - s);
        if upper {
            [x, y - self.upper_h * bulge]
        } else {
            [x, y + self.lower_h * bulge]
        }
    }

    /// Upper and lower lid y at a given x (None when x is outside the span).
    fn lid_y(&self, x: f64) -> Option<(f64, f64)> {
        let span = self.inner[0] - self.outer[0];
        let s = (x - self.outer[0]) / span;
        if !(0.0..=1.0).contains(&s) {
            return None;
        }
        let up = self.arc(s, true);
        let lo = self.arc(s, false);
        Some((up[1], lo[1]))
    }
}

/// Iris projection geometry.
struct IrisGeom {
    center: [f64; 2],
    /// Unit major-axis direction (x-positive half-plane).
    u_maj: [f64; 2],
    /// Unit minor-axis direction.
    u_min: [f64; 2],
    /// Semi-axes: major = r, minor = r * foreshortening.
    a: f64,
    b: f64,
}

impl IrisGeom {
    fn new(p: &EyeSceneParams) -> Self {
        let [cx, cy] = p.eyeball_center_px;
        let r = p.iris_radius_px;
        let v = p.gaze.to_vector();
        // Orthographic projection of the iris-disk center on the sphere.
        let d = (EYEBALL_RADIUS_PX * EYEBALL_RADIUS_PX - r * r).sqrt();
        let center = [cx - d * v[0], cy + d * v[1]];
        // Foreshortening along the gaze tilt direction.
        let q = v[2].abs().max(0.05);
        let tilt = [-v[0], v[1]];
        let n = (tilt[0] * tilt[0] + tilt[1] * tilt[1]).sqrt();
        let t = if n > 1e-9 { [tilt[0] / n, tilt[1] / n] } else { [1.0, 0.0] };
        // Major axis is perpendicular to the tilt, canonicalized to the
        // x-positive half-plane; minor axis follows with fixed handedness.
        let mut u_maj = [-t[1], t[0]];
        if u_maj[0] < 0.0 || (u_maj[0] == 0.0 && u_maj[1] < 0.0) {
            u_maj = [-u_maj[0], -u_maj[1]];
        }
        let u_min = [-u_maj[1], u_maj[0]];
        Self { center, u_maj, u_min, a: r, b: r * q }
    }

    /// Normalized elliptical radius (1 on the rim) and angle of a point.
    fn rho_theta(&self, px: f64, py: f64) -> (f64, f64) {
        let dx = px - self.center[0];
        let dy = py - self.center[1];
        let am = dx * self.u_maj[0] + dy * self.u_maj[1];
        let bm = dx * self.u_min[0] + dy * self.u_min[1];
        let rho = ((am / self.a).powi(2) + (bm / self.b).powi(2)).sqrt();
        (rho, bm.atan2(am))
    }

    fn landmark(&self, theta: f64) -> [f64; 2] {
        let (s, c) = theta.sin_cos();
        [
            self.center[0] + self.a * c * self.u_maj[0] + self.b * s * self.u_min[0],
            self.center[1] + self.a * c * self.u_maj[1] + self.b * s * self.u_min[1],
        ]
    }
}

fn clamp_landmark(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, (W as f64) - 1e-3), p[1].clamp(0.0, (H as f64) - 1e-3)]
}

/// Render a sample from scene parameters. Deterministic.
pub fn render_eye(params: &EyeSceneParams) -> Result<SynthSample> {
    contract!(
        params.light_intensity > 0.0 && params.light_intensity.is_finite(),
        "light_intensity {} must be positive",
        params.light_intensity
    );
    contract!(
        params.iris_radius_px > 0.0 && params.iris_radius_px < EYEBALL_RADIUS_PX,
        "iris radius {} must lie in (0, {EYEBALL_RADIUS_PX})",
        params.iris_radius_px
    );
    if params.aperture < MIN_APERTURE {
        return Err(Error::Render(format!(
            "aperture {} below {MIN_APERTURE}: eyelid arcs collapse and the contour self-intersects",
            params.aperture
        )));
    }
    let tex = Texture::from_seed(params.texture_seed);
    let lids = Lids::new(params);
    let iris = IrisGeom::new(params);
    let [cx, cy] = params.eyeball_center_px;
    let q = params.gaze.to_vector()[2].abs();
    let pupil_a = iris.a * tex.pupil_ratio;
    let pupil_b = iris.b * tex.pupil_ratio;
    // Glint: a small bright disk above the iris center; skipped at extreme
    // angles where the iris sliver is too thin to keep it a minority region.
    let glint = if q >= 0.55 {
        Some(([iris.center[0], iris.center[1] - 0.35 * iris.b], 1.0))
    } else {
        None
    };

    let mut image = Array2::<u8>::zeros((H, W));
    for row in 0..H {
        let yc = row as f64 + 0.5;
        for col in 0..W {
            let xc = col as f64 + 0.5;
            let dxc = xc - cx;
            let dyc = yc - cy;
            let rho_c = (dxc * dxc + dyc * dyc).sqrt();
            // Skin base layer.
            let mut val = tex.skin_base
                + tex.skin_amp * (tex.skin_freq * rho_c + tex.skin_phase).cos()
                + tex.vgrad * dyc;
            // Eye opening.
            let alpha_lid = match lids.lid_y(xc) {
                Some((yu, yl)) => {
                    let au = smoothstep((yc - yu) / AA);
                    let al = smoothstep((yl - yc) / AA);
                    au * al
                }
                None => 0.0,
            };
            if alpha_lid > 0.0 {
                let d_o = ((xc - lids.outer[0]).powi(2) + (yc - lids.outer[1]).powi(2)).sqrt();
                let d_i = ((xc - lids.inner[0]).powi(2) + (yc - lids.inner[1]).powi(2)).sqrt();
                let sclera = tex.scl_base + tex.scl_amp * (tex.scl_freq * dyc + tex.scl_phase).cos()
                    - tex.corner_dark
                        * ((-d_o * d_o / 24.5).exp() + (-d_i * d_i / 24.5).exp());
                let (rho, theta) = iris.rho_theta(xc, yc);
                let alpha_iris = smoothstep((1.0 - rho) * iris.b.max(0.8) / AA);
                let mut interior = sclera;
                if alpha_iris > 0.0 {
                    // Even angular harmonics keep the texture mirrorable.
                    let wr = (4.0 * rho * (1.0 - rho)).max(0.0);
                    let streaks = tex.streak_amp
                        * wr
                        * (tex.harmonics[0] * (2.0 * theta).cos()
                            + tex.harmonics[1] * (4.0 * theta).cos()
                            + tex.harmonics[2] * (6.0 * theta).cos())
                        / 3.0;
                    let limbal = -tex.limbal * smoothstep((rho - 0.78) / 0.22);
                    let mut iris_val = tex.iris_base + streaks + limbal;
                    // Pupil.
                    let dxp = xc - iris.center[0];
                    let dyp = yc - iris.center[1];
                    let am = dxp * iris.u_maj[0] + dyp * iris.u_maj[1];
                    let bm = dxp * iris.u_min[0] + dyp * iris.u_min[1];
                    let rho_p = ((am / pupil_a).powi(2) + (bm / pupil_b).powi(2)).sqrt();
                    let alpha_pup = smoothstep((1.0 - rho_p) * pupil_b.max(0.8) / AA);
                    iris_val = iris_val * (1.0 - alpha_pup) + tex.pupil_base * alpha_pup;
                    if let Some((gc, gr)) = glint {
                        let dg = ((xc - gc[0]).powi(2) + (yc - gc[1]).powi(2)).sqrt();
                        let ag = smoothstep((gr - dg) / AA);
                        iris_val = iris_val * (1.0 - ag) + 248.0 * ag;
                    }
                    interior = interior * (1.0 - alpha_iris) + iris_val * alpha_iris;
                }
                val = val * (1.0 - alpha_lid) + interior * alpha_lid;
            }
            image[[row, col]] = (val * params.light_intensity).round().clamp(0.0, 255.0) as u8;
        }
    }

    // Landmarks.
    let iris_landmarks: Vec<[f64; 2]> = (0..32)
        .map(|k| clamp_landmark(iris.landmark(std::f64::consts::TAU * k as f64 / 32.0)))
        .collect();
    let mut interior_landmarks = Vec::with_capacity(16);
    interior_landmarks.push(clamp_landmark(lids.arc(0.0, true)));
    for i in 1..=7 {
        interior_landmarks.push(clamp_landmark(lids.arc(i as f64 / 8.0, true)));
    }
    interior_landmarks.push(clamp_landmark(lids.arc(1.0, true)));
    for i in (1..=7).rev() {
        interior_landmarks.push(clamp_landmark(lids.arc(i as f64 / 8.0, false)));
    }
    let mut crng = derived_rng(params.texture_seed, "caruncle", 0);
    let jitter = Normal::new(0.0, 0.5).unwrap();
    let caruncle_landmarks: Vec<[f64; 2]> = (0..6)
        .map(|_| {
            clamp_landmark([
                lids.inner[0] + 1.3 + jitter.sample(&mut crng),
                lids.inner[1] + jitter.sample(&mut crng),
            ])
        })
        .collect();

    Ok(SynthSample {
        image,
        iris_landmarks,
        interior_landmarks,
        caruncle_landmarks,
        gaze: params.gaze,
        params: *params,
    })
}

/// Ground-truth masks for a rendered sample.
pub fn sample_masks(s: &SynthSample) -> Result<maskgen::MaskPair> {
    maskgen::make_masks(
        &s.iris_landmarks,
        &s.interior_landmarks,
        &s.caruncle_landmarks,
        H,
        W,
    )
}

/// Generate `n` samples into `out_dir` and write `manifest.json`.
///
/// Every emitted byte is a pure function of `(n, ranges, seed)`: each sample
/// uses a seed derived from the master seed and its index, so regeneration
/// (even sharded) is byte-identical. Samples are split 3:1 train/val by
/// index. On any failure all files written so far are removed.
pub fn generate_dataset(
    n: usize,
    ranges: &ParamRanges,
    seed: u64,
    out_dir: &Path,
) -> Result<crate::dataset::DatasetManifest> {
    use crate::dataset::{DatasetManifest, LabelJson, ManifestEntry, Split, SplitCounts, GENERATOR_VERSION};

    contract!(n >= 1, "dataset size must be at least 1, got {n}");
    ranges.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut written: Vec<std::path::PathBuf> = Vec::new();
    let cleanup = |written: &[std::path::PathBuf]| {
        for p in written {
            let _ = std::fs::remove_file(p);
        }
    };

    let mut entries = Vec::with_capacity(n);
    let mut counts = SplitCounts { train: 0, val: 0 };
    for i in 0..n {
        let result = (|| -> Result<ManifestEntry> {
            let mut rng = derived_rng(seed, "synth-sample", i as u64);
            let params = sample_scene(&mut rng, ranges)?;
            let sample = render_eye(&params)?;
            let id = format!("{i:06}");
            let image_name = format!("{id}.png");
            let label_name = format!("{id}.json");
            let image_path = out_dir.join(&image_name);
            crate::imgio::save_gray_png(&image_path, &sample.image)?;
            written.push(image_path);
            let label_path = out_dir.join(&label_name);
            LabelJson::from_sample(&sample).write(&label_path)?;
            written.push(label_path);
            let split = if i % 4 == 3 { Split::Val } else { Split::Train };
            Ok(ManifestEntry { id, image: image_name, label: label_name, split })
        })();
        match result {
            Ok(entry) => {
                match entry.split {
                    Split::Train => counts.train += 1,
                    Split::Val => counts.val += 1,
                }
                entries.push(entry);
            }
            Err(e) => {
                cleanup(&written);
                return Err(e);
            }
        }
    }

    let manifest = DatasetManifest { seed, version: GENERATOR_VERSION.to_owned(), counts, entries };
    if let Err(e) = manifest.write(out_dir) {
        cleanup(&written);
        return Err(e);
    }
    Ok(manifest)
}
