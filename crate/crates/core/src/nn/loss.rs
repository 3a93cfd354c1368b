//! Mean-squared-error losses with analytic gradients.

use ndarray::{Array, Dimension};

/// MSE averaged over every element of the tensor (used by the mask decoder:
/// per-sample pixel count includes both mask channels).
///
/// Returns (loss, dloss/dpred).
pub fn mse_elements<D: Dimension>(pred: &Array<f32, D>, gt: &Array<f32, D>) -> (f64, Array<f32, D>) {
    assert_eq!(pred.raw_dim(), gt.raw_dim(), "mse shape mismatch");
    let n = pred.len() as f64;
    let mut acc = 0.0f64;
    let mut grad = pred.clone();
    for (g, (&p, &t)) in grad.iter_mut().zip(pred.iter().zip(gt.iter())) {
        let d = (p - t) as f64;
        acc += d * d;
        *g = (2.0 * d / n) as f32;
    }
    (acc / n, grad)
}

/// Gaze regression loss: mean over samples of the squared Euclidean distance
/// between predicted and true (pitch, yaw) rows.
///
/// `loss = (1/N) * sum_n ||pred_n - gt_n||^2`. Returns (loss, dloss/dpred).
pub fn mse_rows(pred: &ndarray::Array2<f32>, gt: &ndarray::Array2<f32>) -> (f64, ndarray::Array2<f32>) {
    assert_eq!(pred.dim(), gt.dim(), "mse shape mismatch");
    let n = pred.nrows() as f64;
    let mut acc = 0.0f64;
    let mut grad = pred.clone();
    for (g, (&p, &t)) in grad.iter_mut().zip(pred.iter().zip(gt.iter())) {
        let d = (p - t) as f64;
        acc += d * d;
        *g = (2.0 * d / n) as f32;
    }
    (acc / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array4};

    #[test]
    fn element_mse_analytic_cases() {
        // Perfect prediction -> 0.
        let gt = Array4::from_shape_fn((2, 2, 3, 3), |(_, c, y, x)| ((c + y + x) % 2) as f32);
        let (l, _) = mse_elements(&gt, &gt);
        assert_eq!(l, 0.0);
        // All-wrong binary prediction -> 1.0.
        let flipped = gt.mapv(|v| 1.0 - v);
        let (l, _) = mse_elements(&flipped, &gt);
        assert_eq!(l, 1.0);
        // Uniform 0.5 against binary targets -> 0.25 exactly.
        let half = Array4::from_elem((2, 2, 3, 3), 0.5f32);
        let (l, g) = mse_elements(&half, &gt);
        assert_eq!(l, 0.25);
        // Gradient: 2*(p-t)/len.
        let len = gt.len() as f32;
        for (gv, tv) in g.iter().zip(gt.iter()) {
            assert_eq!(*gv, 2.0 * (0.5 - tv) / len);
        }
    }

    #[test]
    fn row_mse_matches_expansion() {
        let gt = Array2::from_shape_fn((4, 2), |(r, c)| (r as f32) * 0.1 + c as f32);
        let mut pred = gt.clone();
        for r in 0..4 {
            pred[[r, 0]] += 0.1; // offset (0.1, 0) per sample
        }
        let (l, g) = mse_rows(&pred, &gt);
        // f32 storage of 0.1 leaves ~3e-10 slack against the exact 0.01.
        assert!((l - 0.01).abs() < 1e-9, "loss {l}");
        assert_eq!(g[[0, 0]], 2.0 * 0.1 / 4.0);
        assert_eq!(g[[0, 1]], 0.0);
    }
}
