//! Independent reference implementations ("oracles") used by the
//! integration suites. Everything here is deliberately written from the
//! mathematical definitions with naive algorithms, sharing no code with the
//! library's optimized implementations.

#![allow(dead_code)]

use msgaze::checkpoint::Checkpoint;
use ndarray::{Array2, Array4, ArrayD};

// ---------------------------------------------------------------------------
// Angular error: explicit trig + compensated (double-double) dot + arccos
// ---------------------------------------------------------------------------

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

/// Dot product with exact product/sum error compensation: the result is the
/// correctly rounded sum of all products to well below 1 ulp.
fn dd_dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for i in 0..3 {
        let (p, pe) = two_prod(a[i], b[i]);
        let (t, e) = two_sum(s, p);
        s = t;
        c += e + pe;
    }
    s + c
}

fn gaze_vector(pitch: f64, yaw: f64) -> [f64; 3] {
    [
        -pitch.cos() * yaw.sin(),
        -pitch.sin(),
        -pitch.cos() * yaw.cos(),
    ]
}

/// Brute-force angular error in degrees between two (pitch, yaw) gazes.
pub fn oracle_angular_error_deg(gt: (f64, f64), pred: (f64, f64)) -> f64 {
    let a = gaze_vector(gt.0, gt.1);
    let b = gaze_vector(pred.0, pred.1);
    let na = dd_dot(&a, &a).sqrt();
    let nb = dd_dot(&b, &b).sqrt();
    let cos = (dd_dot(&a, &b) / (na * nb)).clamp(-1.0, 1.0);
    cos.acos().to_degrees()
}

// ---------------------------------------------------------------------------
// Per-pixel even-odd rasterization oracle
// ---------------------------------------------------------------------------

/// Rasterize a polygon by testing every pixel center `(col + 0.5, row + 0.5)`
/// against the even-odd rule directly (ray cast toward +x, edges treated as
/// half-open vertical spans `[y_min, y_max)`, crossings strictly right of
/// the center counted).
pub fn oracle_rasterize(vertices: &[[f64; 2]], h: usize, w: usize) -> Array2<u8> {
    let mut grid = Array2::zeros((h, w));
    if vertices.len() < 3 {
        return grid;
    }
    let n = vertices.len();
    for row in 0..h {
        let cy = row as f64 + 0.5;
        for col in 0..w {
            let cx = col as f64 + 0.5;
            let mut inside = false;
            for i in 0..n {
                let [x0, y0] = vertices[i];
                let [x1, y1] = vertices[(i + 1) % n];
                if y0 == y1 {
                    continue;
                }
                let (ylo, yhi, xlo, xhi) =
                    if y0 < y1 { (y0, y1, x0, x1) } else { (y1, y0, x1, x0) };
                if ylo <= cy && cy < yhi {
                    let xc = xlo + (cy - ylo) * (xhi - xlo) / (yhi - ylo);
                    if xc > cx {
                        inside = !inside;
                    }
                }
            }
            grid[[row, col]] = u8::from(inside);
        }
    }
    grid
}

// ---------------------------------------------------------------------------
// f64 reference forward for the isolation U-Net
// ---------------------------------------------------------------------------

fn conv2d_f64(
    x: &Array4<f64>,
    w: &ArrayD<f64>,
    b: &[f64],
    stride: usize,
    pad: usize,
) -> Array4<f64> {
    let (n, ci, h, ww) = x.dim();
    let co = w.shape()[0];
    let k = w.shape()[2];
    assert_eq!(w.shape()[1], ci, "reference conv channel mismatch");
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (ww + 2 * pad - k) / stride + 1;
    let mut y = Array4::zeros((n, co, oh, ow));
    for s in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[o];
                    for c in 0..ci {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < ww as isize {
                                    acc += w[[o, c, ky, kx]]
                                        * x[[s, c, iy as usize, ix as usize]];
                                }
                            }
                        }
                    }
                    y[[s, o, oy, ox]] = acc;
                }
            }
        }
    }
    y
}

/// Train-mode batch norm: biased batch variance, eps 1e-5.
fn bn_train_f64(x: &Array4<f64>, gamma: &[f64], beta: &[f64]) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let m = (n * h * w) as f64;
    let mut y = Array4::zeros((n, c, h, w));
    for ci in 0..c {
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    let v = x[[s, ci, yy, xx]];
                    sum += v;
                    sumsq += v * v;
                }
            }
        }
        let mean = sum / m;
        let var = (sumsq / m - mean * mean).max(0.0);
        let invstd = 1.0 / (var + 1e-5).sqrt();
        for s in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    y[[s, ci, yy, xx]] =
                        gamma[ci] * (x[[s, ci, yy, xx]] - mean) * invstd + beta[ci];
                }
            }
        }
    }
    y
}

fn relu_f64(x: &Array4<f64>) -> Array4<f64> {
    x.mapv(|v| v.max(0.0))
}

fn maxpool2_f64(x: &Array4<f64>) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Array4::zeros((n, c, oh, ow));
    for s in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let (iy, ix) = (oy * 2, ox * 2);
                    let mut best = x[[s, ci, iy, ix]];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let v = x[[s, ci, iy + dy, ix + dx]];
                        if v > best {
                            best = v;
                        }
                    }
                    y[[s, ci, oy, ox]] = best;
                }
            }
        }
    }
    y
}

/// Bilinear resize with half-pixel centers and edge clamping. Tap positions
/// use f32 arithmetic to match the library's sampling grid exactly.
fn bilinear_f64(x: &Array4<f64>, out_h: usize, out_w: usize) -> Array4<f64> {
    let (n, c, h, w) = x.dim();
    if (h, w) == (out_h, out_w) {
        return x.clone();
    }
    let taps = |in_len: usize, out_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = in_len as f32 / out_len as f32;
        (0..out_len)
            .map(|o| {
                let s = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(in_len - 1);
                let i1 = (i0 + 1).min(in_len - 1);
                let f = (s - i0 as f32).clamp(0.0, 1.0);
                (i0, i1, f as f64)
            })
            .collect()
    };
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut y = Array4::zeros((n, c, out_h, out_w));
    for s in 0..n {
        for ci in 0..c {
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let top = x[[s, ci, y0, x0]] * (1.0 - fx) + x[[s, ci, y0, x1]] * fx;
                    let bot = x[[s, ci, y1, x0]] * (1.0 - fx) + x[[s, ci, y1, x1]] * fx;
                    y[[s, ci, oy, ox]] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    y
}

fn concat_ch_f64(a: &Array4<f64>, b: &Array4<f64>) -> Array4<f64> {
    let (n, ca, h, w) = a.dim();
    let cb = b.dim().1;
    let mut y = Array4::zeros((n, ca + cb, h, w));
    for s in 0..n {
        for c in 0..ca {
            for yy in 0..h {
                for xx in 0..w {
                    y[[s, c, yy, xx]] = a[[s, c, yy, xx]];
                }
            }
        }
        for c in 0..cb {
            for yy in 0..h {
                for xx in 0..w {
                    y[[s, ca + c, yy, xx]] = b[[s, c, yy, xx]];
                }
            }
        }
    }
    y
}

struct RefDouble {
    w1: ArrayD<f64>,
    b1: Vec<f64>,
    g1: Vec<f64>,
    be1: Vec<f64>,
    w2: ArrayD<f64>,
    b2: Vec<f64>,
    g2: Vec<f64>,
    be2: Vec<f64>,
}

impl RefDouble {
    fn load(ck: &Checkpoint, prefix: &str) -> RefDouble {
        let arr = |name: String| -> ArrayD<f64> {
            ck.tensor(&name).expect("tensor present").mapv(|v| v as f64)
        };
        let vec = |name: String| -> Vec<f64> { arr(name).iter().copied().collect() };
        RefDouble {
            w1: arr(format!("{prefix}.conv1.weight")),
            b1: vec(format!("{prefix}.conv1.bias")),
            g1: vec(format!("{prefix}.bn1.gamma")),
            be1: vec(format!("{prefix}.bn1.beta")),
            w2: arr(format!("{prefix}.conv2.weight")),
            b2: vec(format!("{prefix}.conv2.bias")),
            g2: vec(format!("{prefix}.bn2.gamma")),
            be2: vec(format!("{prefix}.bn2.beta")),
        }
    }

    fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let t = conv2d_f64(x, &self.w1, &self.b1, 1, 1);
        let t = relu_f64(&bn_train_f64(&t, &self.g1, &self.be1));
        let t = conv2d_f64(&t, &self.w2, &self.b2, 1, 1);
        relu_f64(&bn_train_f64(&t, &self.g2, &self.be2))
    }
}

/// Naive f64 re-implementation of the isolation U-Net's train-mode forward
/// pass, reading weights from a checkpoint.
pub struct RefUnet {
    enc: Vec<RefDouble>,
    dec: Vec<RefDouble>,
    head_w: ArrayD<f64>,
    head_b: Vec<f64>,
}

impl RefUnet {
    pub fn from_checkpoint(ck: &Checkpoint) -> RefUnet {
        RefUnet {
            enc: (0..5).map(|i| RefDouble::load(ck, &format!("enc{i}"))).collect(),
            dec: (0..4).map(|i| RefDouble::load(ck, &format!("dec{i}"))).collect(),
            head_w: ck.tensor("head.weight").expect("head weight").mapv(|v| v as f64),
            head_b: ck
                .tensor("head.bias")
                .expect("head bias")
                .iter()
                .map(|&v| v as f64)
                .collect(),
        }
    }

    /// Probability maps (sigmoid outputs), shape (n, 2, h, w).
    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let mut skips: Vec<Array4<f64>> = Vec::with_capacity(4);
        let mut t = x.clone();
        for (i, stage) in self.enc.iter().enumerate() {
            if i > 0 {
                t = maxpool2_f64(&t);
            }
            t = stage.forward(&t);
            if i < 4 {
                skips.push(t.clone());
            }
        }
        for (d, stage) in self.dec.iter().enumerate() {
            let skip = &skips[3 - d];
            let up = bilinear_f64(&t, skip.dim().2, skip.dim().3);
            let cat = concat_ch_f64(skip, &up);
            t = stage.forward(&cat);
        }
        let logits = conv2d_f64(&t, &self.head_w, &self.head_b, 1, 0);
        logits.mapv(|v| 1.0 / (1.0 + (-v).exp()))
    }
}

/// Mean-squared error over every element, matching the training loss.
pub fn ref_unet_loss(ck: &Checkpoint, x: &Array4<f64>, gt: &Array4<f64>) -> f64 {
    let y = RefUnet::from_checkpoint(ck).forward(x);
    assert_eq!(y.dim(), gt.dim());
    let n = y.len() as f64;
    y.iter().zip(gt.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

/// Perturb one named tensor element in a cloned checkpoint.
pub fn perturbed(ck: &Checkpoint, name: &str, flat_index: usize, delta: f64) -> Checkpoint {
    let mut out = ck.clone();
    let t = out
        .tensors
        .iter_mut()
        .find(|t| t.name == name)
        .unwrap_or_else(|| panic!("tensor {name} not found"));
    let v = t.data.as_slice_mut().expect("contiguous tensor");
    v[flat_index] += delta as f32;
    out
}

/// Read one element of a named checkpoint tensor.
pub fn tensor_value(ck: &Checkpoint, name: &str, flat_index: usize) -> f64 {
    let t = ck.tensor(name).expect("tensor present");
    t.as_slice().expect("contiguous tensor")[flat_index] as f64
}

/// Trainable-parameter names in the model's parameter-vector order (conv
/// weight/bias and batch-norm gamma/beta; running statistics are buffers,
/// not parameters).
pub fn unet_param_names(ck: &Checkpoint) -> Vec<String> {
    ck.tensors
        .iter()
        .map(|t| t.name.clone())
        .filter(|n| {
            n.ends_with(".weight")
                || n.ends_with(".bias")
                || n.ends_with(".gamma")
                || n.ends_with(".beta")
                || n == "head.weight"
                || n == "head.bias"
        })
        .collect()
}
