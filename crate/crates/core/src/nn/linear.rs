//! Fully connected layer.

use super::{init, Param, TensorMut, TensorRef};
use crate::rng::Rng;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

/// y = x Wᵀ + b with W of shape (out, in).
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Default)]
pub struct LinearCache {
    x: Option<Array2<f32>>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        Self {
            w: Param::new(init::he_normal(&[out_dim, in_dim], in_dim, rng)),
            b: Param::new(init::constant(&[out_dim], 0.0)),
            in_dim,
            out_dim,
        }
    }

    fn w_view(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.out_dim, self.in_dim), self.w.v.as_slice().unwrap()).unwrap()
    }

    pub fn forward(&self, x: &Array2<f32>, cache: Option<&mut LinearCache>) -> Array2<f32> {
        let (n, d) = x.dim();
        assert_eq!(d, self.in_dim, "linear input dim");
        let mut y = Array2::zeros((n, self.out_dim));
        general_mat_mul(1.0, &x.view(), &self.w_view().t(), 0.0, &mut y.view_mut());
        let b = self.b.v.as_slice().unwrap();
        for mut row in y.rows_mut() {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        if let Some(c) = cache {
            c.x = Some(x.clone());
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f32>, cache: &LinearCache) -> Array2<f32> {
        let x = cache.x.as_ref().expect("linear backward without cache");
        let (n, _) = x.dim();
        assert_eq!(dy.dim(), (n, self.out_dim), "linear dy shape");
        {
            let mut dw =
                ArrayViewMut2::from_shape((self.out_dim, self.in_dim), self.w.g.as_slice_mut().unwrap())
                    .unwrap();
            general_mat_mul(1.0, &dy.t(), &x.view(), 1.0, &mut dw);
        }
        let db = self.b.g.as_slice_mut().unwrap();
        for row in dy.rows() {
            for (g, &d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = Array2::zeros((n, self.in_dim));
        general_mat_mul(1.0, &dy.view(), &self.w_view(), 0.0, &mut dx.view_mut());
        dx
    }

    pub fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        out.push(&mut self.w);
        out.push(&mut self.b);
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(TensorRef { name: format!("{prefix}.weight"), view: self.w.v.view() });
        out.push(TensorRef { name: format!("{prefix}.bias"), view: self.b.v.view() });
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        out.push(TensorMut { name: format!("{prefix}.weight"), view: self.w.v.view_mut() });
        out.push(TensorMut { name: format!("{prefix}.bias"), view: self.b.v.view_mut() });
    }
}
