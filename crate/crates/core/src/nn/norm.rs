//! Batch normalization over (N, H, W) per channel.
//!
//! Semantics match the common deep-learning convention: normalization uses
//! the biased batch variance, while the running variance update uses the
//! unbiased estimate; running stats blend with momentum 0.1; eval mode
//! normalizes with the running statistics.

use super::{init, Param, TensorMut, TensorRef};
use ndarray::{Array1, Array4, Axis};

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    pub momentum: f64,
    pub eps: f64,
    pub ch: usize,
}

#[derive(Debug, Default)]
pub struct BnCache {
    xhat: Option<Array4<f32>>,
    invstd: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(ch: usize) -> Self {
        Self {
            gamma: Param::new(init::constant(&[ch], 1.0)),
            beta: Param::new(init::constant(&[ch], 0.0)),
            running_mean: Array1::zeros(ch),
            running_var: Array1::ones(ch),
            momentum: 0.1,
            eps: 1e-5,
            ch,
        }
    }

    pub fn forward(&mut self, x: &Array4<f32>, train: bool, cache: Option<&mut BnCache>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.ch, "batchnorm channels");
        let m = (n * h * w) as f64;
        let mut y = Array4::zeros((n, c, h, w));
        let mut xhat_store = if cache.is_some() { Some(Array4::zeros((n, c, h, w))) } else { None };
        let mut invstds = vec![0.0f64; c];
        for ci in 0..c {
            let (mean, var) = if train {
                let mut sum = 0.0f64;
                let mut sumsq = 0.0f64;
                for s in 0..n {
                    let plane = x.index_axis(Axis(0), s);
                    let plane = plane.index_axis(Axis(0), ci);
                    for &v in plane.as_slice().unwrap() {
                        sum += v as f64;
                        sumsq += (v as f64) * (v as f64);
                    }
                }
                let mean = sum / m;
                let var = (sumsq / m - mean * mean).max(0.0);
                // Running stats: unbiased variance, momentum blend.
                let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
                let mom = self.momentum;
                self.running_mean[ci] =
                    ((1.0 - mom) * self.running_mean[ci] as f64 + mom * mean) as f32;
                self.running_var[ci] =
                    ((1.0 - mom) * self.running_var[ci] as f64 + mom * unbiased) as f32;
                (mean, var)
            } else {
                (self.running_mean[ci] as f64, self.running_var[ci] as f64)
            };
            let invstd = 1.0 / (var + self.eps).sqrt();
            invstds[ci] = invstd;
            let (g, b) = (self.gamma.v[[ci]] as f64, self.beta.v[[ci]] as f64);
            for s in 0..n {
                let xp = x.index_axis(Axis(0), s);
                let xp = xp.index_axis(Axis(0), ci);
                let xs = xp.as_slice().unwrap();
                let mut yp = y.index_axis_mut(Axis(0), s);
                let mut yp = yp.index_axis_mut(Axis(0), ci);
                let ys = yp.as_slice_mut().unwrap();
                if let Some(store) = xhat_store.as_mut() {
                    let mut hp = store.index_axis_mut(Axis(0), s);
                    let mut hp = hp.index_axis_mut(Axis(0), ci);
                    let hs = hp.as_slice_mut().unwrap();
                    for i in 0..xs.len() {
                        let xh = (xs[i] as f64 - mean) * invstd;
                        hs[i] = xh as f32;
                        ys[i] = (g * xh + b) as f32;
                    }
                } else {
                    for i in 0..xs.len() {
                        let xh = (xs[i] as f64 - mean) * invstd;
                        ys[i] = (g * xh + b) as f32;
                    }
                }
            }
        }
        if let Some(cache) = cache {
            cache.xhat = xhat_store;
            cache.invstd = invstds;
        }
        y
    }

    /// Train-mode backward. Accumulates dgamma/dbeta and returns dx.
    pub fn backward(&mut self, dy: &Array4<f32>, cache: &BnCache) -> Array4<f32> {
        let xhat = cache.xhat.as_ref().expect("batchnorm backward without cache");
        let (n, c, h, w) = dy.dim();
        assert_eq!(xhat.dim(), dy.dim());
        let m = (n * h * w) as f64;
        let mut dx = Array4::zeros((n, c, h, w));
        for ci in 0..c {
            // Reductions: sum(dy), sum(dy * xhat).
            let mut sum_dy = 0.0f64;
            let mut sum_dy_xhat = 0.0f64;
            for s in 0..n {
                let dp = dy.index_axis(Axis(0), s);
                let dp = dp.index_axis(Axis(0), ci);
                let hp = xhat.index_axis(Axis(0), s);
                let hp = hp.index_axis(Axis(0), ci);
                for (&d, &xh) in dp.as_slice().unwrap().iter().zip(hp.as_slice().unwrap()) {
                    sum_dy += d as f64;
                    sum_dy_xhat += (d as f64) * (xh as f64);
                }
            }
            self.gamma.g[[ci]] += sum_dy_xhat as f32;
            self.beta.g[[ci]] += sum_dy as f32;
            let g = self.gamma.v[[ci]] as f64;
            let invstd = cache.invstd[ci];
            // dx = (g * invstd / m) * (m * dy - sum(dy) - xhat * sum(dy * xhat))
            let scale = g * invstd / m;
            for s in 0..n {
                let dp = dy.index_axis(Axis(0), s);
                let dp = dp.index_axis(Axis(0), ci);
                let hp = xhat.index_axis(Axis(0), s);
                let hp = hp.index_axis(Axis(0), ci);
                let mut op = dx.index_axis_mut(Axis(0), s);
                let mut op = op.index_axis_mut(Axis(0), ci);
                let ds = dp.as_slice().unwrap();
                let hs = hp.as_slice().unwrap();
                let os = op.as_slice_mut().unwrap();
                for i in 0..ds.len() {
                    os[i] = (scale
                        * (m * ds[i] as f64 - sum_dy - hs[i] as f64 * sum_dy_xhat))
                        as f32;
                }
            }
        }
        dx
    }

    pub fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(TensorRef { name: format!("{prefix}.gamma"), view: self.gamma.v.view() });
        out.push(TensorRef { name: format!("{prefix}.beta"), view: self.beta.v.view() });
        out.push(TensorRef {
            name: format!("{prefix}.running_mean"),
            view: self.running_mean.view().into_dyn(),
        });
        out.push(TensorRef {
            name: format!("{prefix}.running_var"),
            view: self.running_var.view().into_dyn(),
        });
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        out.push(TensorMut { name: format!("{prefix}.gamma"), view: self.gamma.v.view_mut() });
        out.push(TensorMut { name: format!("{prefix}.beta"), view: self.beta.v.view_mut() });
        out.push(TensorMut {
            name: format!("{prefix}.running_mean"),
            view: self.running_mean.view_mut().into_dyn(),
        });
        out.push(TensorMut {
            name: format!("{prefix}.running_var"),
            view: self.running_var.view_mut().into_dyn(),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;
    use rand::Rng as _;

    #[test]
    fn train_output_is_normalized_per_channel() {
        let mut rng = rng_from_seed(8);
        let mut bn = BatchNorm2d::new(3);
        let x = Array4::from_shape_fn((4, 3, 5, 6), |_| rng.gen_range(-3.0..9.0f32));
        let y = bn.forward(&x, true, None);
        for ci in 0..3 {
            let vals: Vec<f64> = y
                .index_axis(Axis(1), ci)
                .iter()
                .map(|&v| v as f64)
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-5);
            assert_abs_diff_eq!(var, 1.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn eval_uses_running_stats() {
        let mut rng = rng_from_seed(9);
        let mut bn = BatchNorm2d::new(2);
        // Several train batches from a shifted distribution.
        for _ in 0..200 {
            let x = Array4::from_shape_fn((8, 2, 4, 4), |_| 5.0 + 2.0 * rng.gen_range(-1.0..1.0f32));
            bn.forward(&x, true, None);
        }
        assert!((bn.running_mean[0] - 5.0).abs() < 0.3, "{}", bn.running_mean[0]);
        // Eval on a constant input: output should be (c - mean)/sqrt(var+eps).
        let x = Array4::from_elem((1, 2, 4, 4), 5.0f32);
        let y = bn.forward(&x, false, None);
        let expect = (5.0 - bn.running_mean[0]) / (bn.running_var[0] + 1e-5).sqrt();
        assert_abs_diff_eq!(y[[0, 0, 0, 0]], expect, epsilon = 1e-5);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng_from_seed(10);
        let mut bn = BatchNorm2d::new(2);
        bn.gamma.v[[0]] = 1.3;
        bn.beta.v[[1]] = -0.4;
        let x = Array4::from_shape_fn((3, 2, 3, 4), |_| rng.gen_range(-2.0..2.0f32));
        let gt = Array4::from_shape_fn((3, 2, 3, 4), |_| rng.gen_range(-2.0..2.0f32));
        let loss = |bn: &BatchNorm2d, xin: &Array4<f32>| -> f64 {
            // Forward logic without mutating running stats (fresh clone).
            let mut b2 = bn.clone();
            let y = b2.forward(xin, true, None);
            y.iter().zip(gt.iter()).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>()
                / y.len() as f64
        };
        let mut cache = BnCache::default();
        let y = bn.clone().forward(&x, true, Some(&mut cache));
        let dy = {
            let mut d = y.clone();
            for (d, (a, b)) in d.iter_mut().zip(y.iter().zip(gt.iter())) {
                *d = 2.0 * (a - b) / y.len() as f32;
            }
            d
        };
        let dx = bn.backward(&dy, &cache);
        let h = 1e-3f32;
        let mut x2 = x.clone();
        for &(s, c, yy, xx) in &[(0, 0, 0, 0), (2, 1, 2, 3), (1, 0, 1, 1)] {
            let orig = x2[[s, c, yy, xx]];
            x2[[s, c, yy, xx]] = orig + h;
            let fp = loss(&bn, &x2);
            x2[[s, c, yy, xx]] = orig - h;
            let fm = loss(&bn, &x2);
            x2[[s, c, yy, xx]] = orig;
            let num = (fp - fm) / (2.0 * h as f64);
            let ana = dx[[s, c, yy, xx]] as f64;
            assert!(
                (num - ana).abs() <= 2e-2 * ana.abs().max(1e-3),
                "dX num {num} vs ana {ana}"
            );
        }
        // dgamma/dbeta.
        let mut bn2 = bn.clone();
        let orig = bn2.gamma.v[[0]];
        bn2.gamma.v[[0]] = orig + h;
        let fp = loss(&bn2, &x);
        bn2.gamma.v[[0]] = orig - h;
        let fm = loss(&bn2, &x);
        let num = (fp - fm) / (2.0 * h as f64);
        assert!(
            (num - bn.gamma.g[[0]] as f64).abs() <= 2e-2 * num.abs().max(1e-3),
            "dgamma {num} vs {}",
            bn.gamma.g[[0]]
        );
    }
}
