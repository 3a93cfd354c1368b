//! Adam optimizer and the two learning-rate schedules used by the pipeline.

use super::Param;
use ndarray::ArrayD;

/// Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8).
///
/// Moment state is keyed by parameter position, so `step` must always be
/// called with the same parameter list in the same order — models guarantee
/// a stable registration order.
#[derive(Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: Vec<(ArrayD<f32>, ArrayD<f32>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, state: Vec::new() }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update step over all parameters; gradients are left untouched
    /// (call [`zero_grads`] before the next backward pass).
    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.state.is_empty() {
            self.state = params
                .iter()
                .map(|p| (ArrayD::zeros(p.v.raw_dim()), ArrayD::zeros(p.v.raw_dim())))
                .collect();
        }
        assert_eq!(self.state.len(), params.len(), "optimizer/param list mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let lr = self.lr;
        for (p, (m, v)) in params.iter_mut().zip(self.state.iter_mut()) {
            debug_assert_eq!(p.v.raw_dim(), m.raw_dim());
            let pv = p.v.as_slice_mut().unwrap();
            let pg = p.g.as_slice().unwrap();
            let ms = m.as_slice_mut().unwrap();
            let vs = v.as_slice_mut().unwrap();
            for i in 0..pv.len() {
                let g = pg[i];
                ms[i] = b1 * ms[i] + (1.0 - b1) * g;
                vs[i] = b2 * vs[i] + (1.0 - b2) * g * g;
                let mhat = ms[i] as f64 / bc1;
                let vhat = vs[i] as f64 / bc2;
                pv[i] -= (lr * mhat / (vhat.sqrt() + self.eps)) as f32;
            }
        }
    }
}

/// Zero all gradient accumulators.
pub fn zero_grads(params: &mut [&mut Param]) {
    for p in params.iter_mut() {
        p.zero_grad();
    }
}

/// Step decay: multiply the base rate by `gamma` once per `step_size` epochs.
/// `epoch` is zero-based, so epochs 0..step_size-1 use the base rate.
pub fn step_lr(base_lr: f64, step_size: usize, gamma: f64, epoch: usize) -> f64 {
    assert!(step_size > 0);
    base_lr * gamma.powi((epoch / step_size) as i32)
}

/// Reduce-on-plateau: halve (times `factor`) when the validation loss fails
/// to improve for `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct Plateau {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
    pub lr: f64,
}

impl Plateau {
    pub fn new(initial_lr: f64, factor: f64, patience: usize) -> Self {
        Self { factor, patience, best: f64::INFINITY, bad_epochs: 0, lr: initial_lr }
    }

    /// Feed one epoch's validation loss; returns true when the rate dropped.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }
}
