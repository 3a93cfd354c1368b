//! Evaluation metrics: gaze geometry, angular error, mask IoU, and a
//! reference-free image noise estimator.

use crate::maskgen::MaskPair;
use crate::{contract, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Gaze direction as (pitch, yaw) in radians.
///
/// Pitch is positive looking up, yaw positive looking toward +x in camera
/// space. Valid ranges: |pitch| <= pi/2, |yaw| <= pi.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeLabel {
    pub pitch: f64,
    pub yaw: f64,
}

impl GazeLabel {
    pub fn new(pitch: f64, yaw: f64) -> Result<Self> {
        contract!(pitch.is_finite() && yaw.is_finite(), "gaze angles must be finite");
        contract!(
            pitch.abs() <= std::f64::consts::FRAC_PI_2 + 1e-12,
            "pitch {pitch} outside [-pi/2, pi/2]"
        );
        contract!(yaw.abs() <= std::f64::consts::PI + 1e-12, "yaw {yaw} outside [-pi, pi]");
        Ok(Self { pitch, yaw })
    }

    /// Unit gaze vector in camera coordinates:
    /// `(-cos(pitch) sin(yaw), -sin(pitch), -cos(pitch) cos(yaw))`.
    ///
    /// Zero pitch and yaw looks straight into the camera along -z.
    pub fn to_vector(self) -> [f64; 3] {
        let (sp, cp) = self.pitch.sin_cos();
        let (sy, cy) = self.yaw.sin_cos();
        [-cp * sy, -sp, -cp * cy]
    }
}

/// Angular error in degrees between two gaze labels.
///
/// `delta = arccos(clamp(g . g_hat, -1, 1))` on the unit gaze vectors. The
/// clamp protects against rounding pushing the dot product out of arccos's
/// domain for (anti)parallel vectors, and identical labels short-circuit to
/// exactly 0 (arccos is ill-conditioned at 1, where a 1-ulp dot error would
/// otherwise surface as ~1e-7 degrees).
pub fn angular_error_deg(gt: GazeLabel, pred: GazeLabel) -> f64 {
    if gt == pred {
        return 0.0;
    }
    let a = gt.to_vector();
    let b = pred.to_vector();
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    dot.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Intersection-over-union of two binary grids.
///
/// Both empty counts as a perfect match (IoU = 1), so absent regions do not
/// poison dataset averages.
pub fn iou(a: &Array2<f32>, b: &Array2<f32>) -> Result<f64> {
    contract!(a.dim() == b.dim(), "IoU shape mismatch: {:?} vs {:?}", a.dim(), b.dim());
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.iter().zip(b.iter()) {
        contract!(x == 0.0 || x == 1.0, "IoU requires binary masks, found {x}");
        contract!(y == 0.0 || y == 1.0, "IoU requires binary masks, found {y}");
        let (x, y) = (x == 1.0, y == 1.0);
        inter += (x && y) as u64;
        union += (x || y) as u64;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mean IoU over samples and regions: per-sample IoU is computed for the iris
/// and visible-eyeball masks separately, averaged per sample, then averaged
/// over the set. Soft masks are rejected; binarize first.
pub fn miou(pred: &[MaskPair], gt: &[MaskPair]) -> Result<f64> {
    contract!(
        pred.len() == gt.len() && !pred.is_empty(),
        "mIoU needs equal-length non-empty sets (got {} vs {})",
        pred.len(),
        gt.len()
    );
    let mut total = 0.0f64;
    for (p, g) in pred.iter().zip(gt.iter()) {
        contract!(!p.soft && !g.soft, "mIoU requires hard masks; binarize soft predictions first");
        total += 0.5 * (iou(&p.iris, &g.iris)? + iou(&p.visible, &g.visible)?);
    }
    Ok(total / pred.len() as f64)
}

/// 3x3 high-pass operator used by the noise-variance estimator.
pub const NOISE_OPERATOR: [[f64; 3]; 3] = [[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]];

/// Reference-free additive-noise variance estimate for a grayscale image.
///
/// Convolves with [`NOISE_OPERATOR`] at all valid (interior) positions and
/// returns `sum(response^2) / (36 (W-2) (H-2))`. The operator annihilates
/// constant and planar content exactly, so the statistic responds to
/// pixel-level noise rather than smooth structure. Accumulation is f64 in
/// raster order for exact reproducibility.
pub fn estimate_noise_variance(img: &Array2<f64>) -> Result<f64> {
    let (h, w) = img.dim();
    contract!(h >= 3 && w >= 3, "noise estimator needs at least 3x3 input, got {h}x{w}");
    contract!(img.iter().all(|v| v.is_finite()), "noise estimator requires finite pixels");
    let mut acc = 0.0f64;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut r = 0.0f64;
            for (dy, row) in NOISE_OPERATOR.iter().enumerate() {
                for (dx, &k) in row.iter().enumerate() {
                    r += k * img[[y + dy - 1, x + dx - 1]];
                }
            }
            acc += r * r;
        }
    }
    Ok(acc / (36.0 * ((w - 2) as f64) * ((h - 2) as f64)))
}

/// Convenience: noise variance of a u8 image.
pub fn estimate_noise_variance_u8(img: &Array2<u8>) -> Result<f64> {
    estimate_noise_variance(&img.mapv(|v| v as f64))
}
