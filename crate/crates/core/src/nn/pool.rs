//! Max pooling (2x2, stride 2, floor) and global average pooling.

use ndarray::{Array2, Array4, Axis};

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped
/// (floor semantics), which is what produces the 36x60 -> 18x30 -> 9x15 ->
/// 4x7 -> 2x3 encoder ladder.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPool2d;

/// Cache: flat (h*w) argmax index per output element plus the input size.
#[derive(Debug, Default)]
pub struct PoolCache {
    argmax: Option<Array4<u32>>,
    in_hw: (usize, usize),
}

impl MaxPool2d {
    pub fn out_hw(h: usize, w: usize) -> (usize, usize) {
        (h / 2, w / 2)
    }

    pub fn forward(&self, x: &Array4<f32>, cache: Option<&mut PoolCache>) -> Array4<f32> {
        let (n, c, h, w) = x.dim();
        let (oh, ow) = Self::out_hw(h, w);
        assert!(oh > 0 && ow > 0, "pooling would produce an empty map from {h}x{w}");
        let mut y = Array4::zeros((n, c, oh, ow));
        let mut am = Array4::<u32>::zeros((n, c, oh, ow));
        for s in 0..n {
            for ci in 0..c {
                let xp = x.index_axis(Axis(0), s);
                let xp = xp.index_axis(Axis(0), ci);
                let xs = xp.as_slice().unwrap();
                for oy in 0..oh {
                    for ox in 0..ow {
                        let (iy, ix) = (oy * 2, ox * 2);
                        // Ties resolve to the first element in scan order.
                        let mut best = xs[iy * w + ix];
                        let mut bidx = (iy * w + ix) as u32;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = (iy + dy) * w + ix + dx;
                            if xs[idx] > best {
                                best = xs[idx];
                                bidx = idx as u32;
                            }
                        }
                        y[[s, ci, oy, ox]] = best;
                        am[[s, ci, oy, ox]] = bidx;
                    }
                }
            }
        }
        if let Some(cache) = cache {
            cache.argmax = Some(am);
            cache.in_hw = (h, w);
        }
        y
    }

    pub fn backward(&self, dy: &Array4<f32>, cache: &PoolCache) -> Array4<f32> {
        let am = cache.argmax.as_ref().expect("maxpool backward without cache");
        let (n, c, oh, ow) = dy.dim();
        let (h, w) = cache.in_hw;
        let mut dx = Array4::zeros((n, c, h, w));
        for s in 0..n {
            for ci in 0..c {
                let mut dp = dx.index_axis_mut(Axis(0), s);
                let mut dp = dp.index_axis_mut(Axis(0), ci);
                let ds = dp.as_slice_mut().unwrap();
                for oy in 0..oh {
                    for ox in 0..ow {
                        ds[am[[s, ci, oy, ox]] as usize] += dy[[s, ci, oy, ox]];
                    }
                }
            }
        }
        dx
    }
}

/// Global average pooling (N, C, H, W) -> (N, C).
pub fn global_avg_pool_fwd(x: &Array4<f32>) -> Array2<f32> {
    let (n, c, h, w) = x.dim();
    let scale = 1.0 / (h * w) as f64;
    let mut y = Array2::zeros((n, c));
    for s in 0..n {
        for ci in 0..c {
            let xp = x.index_axis(Axis(0), s);
            let xp = xp.index_axis(Axis(0), ci);
            let mut acc = 0.0f64;
            for &v in xp.as_slice().unwrap() {
                acc += v as f64;
            }
            y[[s, ci]] = (acc * scale) as f32;
        }
    }
    y
}

pub fn global_avg_pool_bwd(dy: &Array2<f32>, in_hw: (usize, usize)) -> Array4<f32> {
    let (n, c) = dy.dim();
    let (h, w) = in_hw;
    let scale = 1.0 / (h * w) as f32;
    let mut dx = Array4::zeros((n, c, h, w));
    for s in 0..n {
        for ci in 0..c {
            let g = dy[[s, ci]] * scale;
            dx.index_axis_mut(Axis(0), s).index_axis_mut(Axis(0), ci).fill(g);
        }
    }
    dx
}
