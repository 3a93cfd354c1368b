//! Ground-truth mask rasterization from landmark polygons.
//!
//! Landmarks live in continuous image coordinates (x right, y down, origin at
//! the top-left pixel corner). A pixel `(x, y)` belongs to a region when its
//! center `(x + 0.5, y + 0.5)` lies inside the region polygon under the
//! even-odd rule. Boundary ties resolve top/left-inclusive: scanlines use the
//! half-open vertical span `[y_min, y_max)` per edge and the half-open
//! horizontal span `[x_left, x_right)` per crossing pair, so abutting
//! polygons never double-fill or leave gaps.

use crate::{contract, Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Anatomical region a mask describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    Iris,
    VisibleEyeball,
}

/// Hard {0, 1} occupancy grid for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    grid: Array2<u8>,
    region: RegionKind,
}

impl BinaryMask {
    /// Wrap a grid, enforcing binary values.
    pub fn new(grid: Array2<u8>, region: RegionKind) -> Result<Self> {
        contract!(
            grid.iter().all(|&v| v <= 1),
            "BinaryMask requires values in {{0,1}}, found {}",
            grid.iter().find(|&&v| v > 1).unwrap()
        );
        Ok(Self { grid, region })
    }

    pub fn grid(&self) -> &Array2<u8> {
        &self.grid
    }

    pub fn region(&self) -> RegionKind {
        self.region
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.grid.iter().filter(|&&v| v == 1).count()
    }
}

/// Iris + visible-eyeball masks for one sample.
///
/// Grids are f32 so the same type carries hard rasterized masks (values in
/// {0, 1}, `soft == false`) and network probability maps (values in [0, 1],
/// `soft == true`).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub iris: Array2<f32>,
    pub visible: Array2<f32>,
    pub soft: bool,
}

impl MaskPair {
    /// Build a hard pair from binary masks.
    pub fn hard(iris: BinaryMask, visible: BinaryMask) -> Self {
        Self {
            iris: iris.grid.mapv(|v| v as f32),
            visible: visible.grid.mapv(|v| v as f32),
            soft: false,
        }
    }

    /// Build a soft pair from probability maps in [0, 1].
    pub fn soft(iris: Array2<f32>, visible: Array2<f32>) -> Result<Self> {
        for g in [&iris, &visible] {
            contract!(
                g.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)),
                "soft mask values must lie in [0,1]"
            );
        }
        Ok(Self { iris, visible, soft: true })
    }

    /// Threshold a soft pair into a hard one (`p >= threshold` maps to 1).
    pub fn binarize(&self, threshold: f32) -> MaskPair {
        let f = |g: &Array2<f32>| g.mapv(|v| if v >= threshold { 1.0 } else { 0.0 });
        MaskPair { iris: f(&self.iris), visible: f(&self.visible), soft: false }
    }

    /// View a hard pair as typed binary masks; contract error when soft.
    pub fn to_binary(&self) -> Result<(BinaryMask, BinaryMask)> {
        contract!(!self.soft, "expected a hard (binarized) mask pair, got a soft one");
        let cast = |g: &Array2<f32>, region| {
            BinaryMask::new(g.mapv(|v| v as u8), region)
        };
        Ok((cast(&self.iris, RegionKind::Iris)?, cast(&self.visible, RegionKind::VisibleEyeball)?))
    }
}

/// Rasterize a polygon onto an `h x w` grid under the even-odd rule.
///
/// Vertices are consecutive polygon corners in continuous coordinates; the
/// closing edge back to the first vertex is implicit. Degenerate polygons
/// (fewer than 3 vertices, zero area) rasterize to an all-zero mask rather
/// than erroring so downstream IoU handles the empty-region case uniformly.
pub fn bin_enc(vertices: &[[f64; 2]], h: usize, w: usize, region: RegionKind) -> Result<BinaryMask> {
    contract!(
        vertices.iter().all(|p| p[0].is_finite() && p[1].is_finite()),
        "polygon vertices must be finite"
    );
    let mut grid = Array2::<u8>::zeros((h, w));
    if vertices.len() >= 3 {
        let n = vertices.len();
        let mut xs: Vec<f64> = Vec::with_capacity(8);
        for row in 0..h {
            let yc = row as f64 + 0.5;
            xs.clear();
            for i in 0..n {
                let [x0, y0] = vertices[i];
                let [x1, y1] = vertices[(i + 1) % n];
                if y0 == y1 {
                    continue; // horizontal edges contribute no crossings
                }
                let (ylo, yhi, xlo, xhi) =
                    if y0 < y1 { (y0, y1, x0, x1) } else { (y1, y0, x1, x0) };
                if ylo <= yc && yc < yhi {
                    xs.push(xlo + (yc - ylo) * (xhi - xlo) / (yhi - ylo));
                }
            }
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            debug_assert!(xs.len() % 2 == 0);
            for pair in xs.chunks_exact(2) {
                let (xa, xb) = (pair[0], pair[1]);
                // Fill columns whose center lies in [xa, xb).
                let c0 = (xa - 0.5).ceil().max(0.0) as i64;
                let c1 = ((xb - 0.5).ceil() - 1.0).min(w as f64 - 1.0) as i64;
                for c in c0..=c1.min(w as i64 - 1) {
                    if c >= 0 {
                        grid[[row, c as usize]] = 1;
                    }
                }
            }
        }
    }
    BinaryMask::new(grid, region)
}

/// Centroid (arithmetic mean) of the six caruncle landmarks.
pub fn caruncle_centroid(points: &[[f64; 2]]) -> Result<[f64; 2]> {
    contract!(points.len() == 6, "caruncle centroid needs 6 points, got {}", points.len());
    contract!(
        points.iter().all(|p| p[0].is_finite() && p[1].is_finite()),
        "caruncle landmarks must be finite"
    );
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in points {
        sx += p[0];
        sy += p[1];
    }
    Ok([sx / 6.0, sy / 6.0])
}

/// Index of the inner eye corner within the 16-point interior contour.
///
/// Contour convention (fixed across the pipeline): index 0 is the outer
/// corner, 1..=7 trace the upper lid outward-to-inward, index 8 is the inner
/// corner, and 9..=15 trace the lower lid back toward the outer corner.
pub const INNER_CORNER_INDEX: usize = 8;

/// Build the 17-vertex visible-eyeball polygon: the 16 interior landmarks
/// with the caruncle centroid inserted immediately after the inner corner.
pub fn visible_polygon(interior: &[[f64; 2]], caruncle: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    contract!(interior.len() == 16, "visible polygon needs 16 interior landmarks, got {}", interior.len());
    let centroid = caruncle_centroid(caruncle)?;
    let mut poly = Vec::with_capacity(17);
    poly.extend_from_slice(&interior[..=INNER_CORNER_INDEX]);
    poly.push(centroid);
    poly.extend_from_slice(&interior[INNER_CORNER_INDEX + 1..]);
    Ok(poly)
}

/// Rasterize the ground-truth mask pair for one sample from its landmarks.
pub fn make_masks(
    iris_landmarks: &[[f64; 2]],
    interior_landmarks: &[[f64; 2]],
    caruncle_landmarks: &[[f64; 2]],
    h: usize,
    w: usize,
) -> Result<MaskPair> {
    contract!(iris_landmarks.len() == 32, "iris polygon needs 32 landmarks, got {}", iris_landmarks.len());
    let iris = bin_enc(iris_landmarks, h, w, RegionKind::Iris)?;
    let poly = visible_polygon(interior_landmarks, caruncle_landmarks)?;
    let vis = bin_enc(&poly, h, w, RegionKind::VisibleEyeball)?;
    Ok(MaskPair::hard(iris, vis))
}

/// Persist a hard mask as a 0/255 grayscale PNG.
pub fn save_mask_png(path: &Path, mask: &Array2<f32>) -> Result<()> {
    let grid = mask.mapv(|v| {
        debug_assert!(v == 0.0 || v == 1.0);
        if v >= 0.5 { 255u8 } else { 0u8 }
    });
    crate::imgio::save_gray_png(path, &grid)
}

/// Load a 0/255 mask PNG back into a {0, 1} f32 grid.
pub fn load_mask_png(path: &Path) -> Result<Array2<f32>> {
    let img = crate::imgio::load_gray_png(path)?;
    for &v in img.iter() {
        if v != 0 && v != 255 {
            return Err(Error::Data(format!(
                "{}: mask PNG must contain only 0 or 255, found {v}",
                path.display()
            )));
        }
    }
    Ok(img.mapv(|v| if v == 255 { 1.0 } else { 0.0 }))
}
