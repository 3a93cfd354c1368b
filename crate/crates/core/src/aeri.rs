//! Anatomical eye-region isolation: a U-Net mapping a 1×36×60 grayscale
//! image to a 2-channel soft mask (iris, visible eyeball).
//!
//! Encoder: five double-conv blocks (3×3 conv → BN → ReLU, twice) with 2×2
//! max-pooling between them; channel widths double from 64 to 1024, scaled
//! by a width multiplier for CPU-scale runs. Decoder: four double-conv
//! blocks, each fed the bilinear-upsampled deeper features concatenated
//! with the matching encoder skip. Head: 1×1 conv to 2 channels + sigmoid.

use crate::augment::AugmentConfig;
use crate::checkpoint::{Checkpoint, NamedTensor};
use crate::maskgen::MaskPair;
use crate::metrics;
use crate::nn::{
    self, bilinear_fwd, bilinear_bwd, mse_elements, relu_bwd, relu_fwd, sigmoid_bwd, sigmoid_fwd,
    Adam, BatchNorm2d, BnCache, Conv2d, ConvCache, MaxPool2d, Param, PoolCache, TensorRef,
};
use crate::rng::{derived_rng, rng_from_seed, Rng};
use crate::{contract, Error, Result};
use ndarray::{s, Array2, Array4};
use serde::{Deserialize, Serialize};

/// Base channel plan before width scaling.
const BASE_WIDTHS: [usize; 5] = [64, 128, 256, 512, 1024];
/// Network input/output spatial dims.
pub const IN_H: usize = crate::imgio::IMG_H;
pub const IN_W: usize = crate::imgio::IMG_W;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeriArchitecture {
    /// Scales every channel width; 1.0 is the full model, 0.5 the CPU profile.
    pub width_multiplier: f64,
}

impl Default for AeriArchitecture {
    fn default() -> Self {
        Self { width_multiplier: 1.0 }
    }
}

impl AeriArchitecture {
    pub fn validate(&self) -> Result<()> {
        if !(self.width_multiplier > 0.0 && self.width_multiplier <= 2.0) {
            return Err(Error::Config(format!(
                "width_multiplier {} outside (0, 2]",
                self.width_multiplier
            )));
        }
        Ok(())
    }

    /// Scaled channel widths for the five encoder depths.
    pub fn widths(&self) -> [usize; 5] {
        BASE_WIDTHS.map(|w| (((w as f64) * self.width_multiplier).round() as usize).max(2))
    }
}

/// Two 3×3 convolutions, each followed by batch norm and ReLU.
struct DoubleConv {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
}

#[derive(Default)]
struct DoubleConvCache {
    c1: ConvCache,
    b1: BnCache,
    m1: Array4<u8>,
    c2: ConvCache,
    b2: BnCache,
    m2: Array4<u8>,
}

impl DoubleConv {
    fn new(in_ch: usize, out_ch: usize, rng: &mut Rng) -> Self {
        Self {
            conv1: Conv2d::new(in_ch, out_ch, 3, 1, 1, rng),
            bn1: BatchNorm2d::new(out_ch),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(out_ch),
        }
    }

    fn forward(
        &mut self,
        x: &Array4<f32>,
        train: bool,
        mut cache: Option<&mut DoubleConvCache>,
    ) -> Array4<f32> {
        let t = self.conv1.forward(x, cache.as_deref_mut().map(|c| &mut c.c1));
        let t = self.bn1.forward(&t, train, cache.as_deref_mut().map(|c| &mut c.b1));
        let (t, m1) = relu_fwd(&t);
        let t = self.conv2.forward(&t, cache.as_deref_mut().map(|c| &mut c.c2));
        let t = self.bn2.forward(&t, train, cache.as_deref_mut().map(|c| &mut c.b2));
        let (t, m2) = relu_fwd(&t);
        if let Some(c) = cache {
            c.m1 = m1;
            c.m2 = m2;
        }
        t
    }

    fn backward(&mut self, dy: &Array4<f32>, cache: &DoubleConvCache) -> Array4<f32> {
        let t = relu_bwd(dy, &cache.m2);
        let t = self.bn2.backward(&t, &cache.b2);
        let t = self.conv2.backward(&t, &cache.c2);
        let t = relu_bwd(&t, &cache.m1);
        let t = self.bn1.backward(&t, &cache.b1);
        self.conv1.backward(&t, &cache.c1)
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.conv1.params_mut(out);
        self.bn1.params_mut(out);
        self.conv2.params_mut(out);
        self.bn2.params_mut(out);
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        self.conv1.tensors(&format!("{prefix}.conv1"), out);
        self.bn1.tensors(&format!("{prefix}.bn1"), out);
        self.conv2.tensors(&format!("{prefix}.conv2"), out);
        self.bn2.tensors(&format!("{prefix}.bn2"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<nn::TensorMut<'a>>) {
        self.conv1.tensors_mut(&format!("{prefix}.conv1"), out);
        self.bn1.tensors_mut(&format!("{prefix}.bn1"), out);
        self.conv2.tensors_mut(&format!("{prefix}.conv2"), out);
        self.bn2.tensors_mut(&format!("{prefix}.bn2"), out);
    }
}

/// Training cache for one forward pass.
pub struct UnetCache {
    enc: Vec<DoubleConvCache>,
    pools: Vec<PoolCache>,
    dec: Vec<DoubleConvCache>,
    head: ConvCache,
    /// Sigmoid outputs (needed for its backward).
    out: Array4<f32>,
    /// Spatial dims of each decoder-stage upsample input.
    up_in_dims: Vec<(usize, usize)>,
    /// Channel split (skip, up) at each decoder concat.
    cat_split: Vec<(usize, usize)>,
}

impl Default for UnetCache {
    fn default() -> Self {
        Self {
            enc: (0..5).map(|_| DoubleConvCache::default()).collect(),
            pools: (0..4).map(|_| PoolCache::default()).collect(),
            dec: (0..4).map(|_| DoubleConvCache::default()).collect(),
            head: ConvCache::default(),
            out: Array4::zeros((0, 0, 0, 0)),
            up_in_dims: Vec::new(),
            cat_split: Vec::new(),
        }
    }
}

pub struct UnetModel {
    pub arch: AeriArchitecture,
    enc: Vec<DoubleConv>,
    dec: Vec<DoubleConv>,
    head: Conv2d,
    pool: MaxPool2d,
}

impl UnetModel {
    pub fn new(arch: AeriArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let w = arch.widths();
        let mut rng = rng_from_seed(seed);
        let mut enc = Vec::with_capacity(5);
        for (i, &ch) in w.iter().enumerate() {
            let in_ch = if i == 0 { 1 } else { w[i - 1] };
            enc.push(DoubleConv::new(in_ch, ch, &mut rng));
        }
        // dec[0] is the deepest stage (consumes the bottleneck).
        let mut dec = Vec::with_capacity(4);
        for i in (0..4).rev() {
            dec.push(DoubleConv::new(w[i + 1] + w[i], w[i], &mut rng));
        }
        let mut head = Conv2d::new(w[0], 2, 1, 1, 0, &mut rng);
        // Bias the sigmoid head toward the empty-mask prior so early
        // training pushes probabilities from ~0.1 rather than 0.5.
        head.b.v.fill(-2.2);
        Ok(Self { arch, enc, dec, head, pool: MaxPool2d })
    }

    /// Forward pass; input (n, 1, 36, 60) normalized to [0,1], output
    /// (n, 2, 36, 60) of sigmoid probabilities. Pass a cache when a
    /// backward pass will follow.
    pub fn forward(
        &mut self,
        x: &Array4<f32>,
        train: bool,
        mut cache: Option<&mut UnetCache>,
    ) -> Array4<f32> {
        assert_eq!(x.shape()[1], 1, "AERI expects a single input channel");
        let mut skips: Vec<Array4<f32>> = Vec::with_capacity(4);
        let mut t = x.clone();
        for i in 0..5 {
            if i > 0 {
                t = self
                    .pool
                    .forward(&t, cache.as_deref_mut().map(|c| &mut c.pools[i - 1]));
            }
            t = self.enc[i].forward(&t, train, cache.as_deref_mut().map(|c| &mut c.enc[i]));
            if i < 4 {
                skips.push(t.clone());
            }
        }
        if let Some(c) = cache.as_deref_mut() {
            c.up_in_dims.clear();
            c.cat_split.clear();
        }
        for (d, skip_idx) in (0..4).zip((0..4).rev()) {
            let skip = &skips[skip_idx];
            let (sh, sw) = (skip.shape()[2], skip.shape()[3]);
            if let Some(c) = cache.as_deref_mut() {
                c.up_in_dims.push((t.shape()[2], t.shape()[3]));
                c.cat_split.push((skip.shape()[1], t.shape()[1]));
            }
            let up = bilinear_fwd(&t, sh, sw);
            let cat = nn::concat_channels(&[skip, &up]);
            t = self.dec[d].forward(&cat, train, cache.as_deref_mut().map(|c| &mut c.dec[d]));
        }
        let logits = self.head.forward(&t, cache.as_deref_mut().map(|c| &mut c.head));
        let out = sigmoid_fwd(&logits);
        if let Some(c) = cache {
            c.out = out.clone();
        }
        out
    }

    /// Backward from d(loss)/d(output); accumulates parameter gradients.
    pub fn backward(&mut self, dy: &Array4<f32>, cache: &UnetCache) {
        let t = sigmoid_bwd(dy, &cache.out);
        let mut t = self.head.backward(&t, &cache.head);
        // Decoder stages in reverse; collect skip gradients on the way.
        let mut skip_grads: Vec<Option<Array4<f32>>> = vec![None; 4];
        for d in (0..4).rev() {
            let dcat = self.dec[d].backward(&t, &cache.dec[d]);
            let (skip_ch, _up_ch) = cache.cat_split[d];
            let d_skip = dcat.slice(s![.., ..skip_ch, .., ..]).to_owned();
            let d_up = dcat.slice(s![.., skip_ch.., .., ..]).to_owned();
            let skip_idx = 3 - d;
            skip_grads[skip_idx] = Some(d_skip);
            let (ih, iw) = cache.up_in_dims[d];
            t = bilinear_bwd(&d_up, ih, iw);
        }
        // Encoder chain in reverse.
        for i in (0..5).rev() {
            let mut dy_i = t;
            if i < 4 {
                if let Some(g) = &skip_grads[i] {
                    dy_i += g;
                }
            }
            t = self.enc[i].backward(&dy_i, &cache.enc[i]);
            if i > 0 {
                t = self.pool.backward(&t, &cache.pools[i - 1]);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for e in &mut self.enc {
            e.params_mut(&mut out);
        }
        for d in &mut self.dec {
            d.params_mut(&mut out);
        }
        self.head.params_mut(&mut out);
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.numel()).sum()
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (i, e) in self.enc.iter().enumerate() {
            e.tensors(&format!("enc{i}"), &mut out);
        }
        for (i, d) in self.dec.iter().enumerate() {
            d.tensors(&format!("dec{i}"), &mut out);
        }
        self.head.tensors("head", &mut out);
        out
    }

    /// Weight checksum over all tensors (including BN buffers).
    pub fn weights_checksum(&self) -> String {
        self.as_checkpoint(serde_json::Value::Null).weights_checksum()
    }

    pub fn as_checkpoint(&self, provenance: serde_json::Value) -> Checkpoint {
        let mut ckpt = Checkpoint::new(
            "aeri",
            serde_json::to_value(self.arch).expect("arch serializes"),
            provenance,
        );
        for t in self.tensors() {
            ckpt.tensors.push(NamedTensor { name: t.name, data: t.view.to_owned() });
        }
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.kind != "aeri" {
            return Err(Error::Checkpoint(format!(
                "expected an aeri checkpoint, found kind {:?}",
                ckpt.kind
            )));
        }
        let arch: AeriArchitecture = serde_json::from_value(ckpt.arch.clone())
            .map_err(|e| Error::Checkpoint(format!("arch descriptor: {e}")))?;
        let mut model = Self::new(arch, 0)?;
        let mut slots = Vec::new();
        for (i, e) in model.enc.iter_mut().enumerate() {
            e.tensors_mut(&format!("enc{i}"), &mut slots);
        }
        for (i, d) in model.dec.iter_mut().enumerate() {
            d.tensors_mut(&format!("dec{i}"), &mut slots);
        }
        model.head.tensors_mut("head", &mut slots);
        contract!(
            slots.len() == ckpt.tensors.len(),
            "checkpoint has {} tensors, model expects {}",
            ckpt.tensors.len(),
            slots.len()
        );
        for mut slot in slots {
            let data = ckpt.tensor(&slot.name)?;
            if data.shape() != slot.view.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} shape {:?} does not match model {:?}",
                    slot.name,
                    data.shape(),
                    slot.view.shape()
                )));
            }
            slot.view.assign(data);
        }
        Ok(model)
    }
}

/// Eq.-style mask loss: mean squared error over every output element.
/// Returns (loss, d loss / d pred).
pub fn aeri_loss(pred: &Array4<f32>, gt: &Array4<f32>) -> Result<(f64, Array4<f32>)> {
    contract!(
        pred.shape() == gt.shape(),
        "prediction shape {:?} != ground truth {:?}",
        pred.shape(),
        gt.shape()
    );
    Ok(mse_elements(pred, gt))
}

/// Stack images (u8, 0..=255) into a normalized (n,1,h,w) input tensor.
pub fn images_to_input(images: &[Array2<u8>]) -> Array4<f32> {
    let n = images.len();
    let (h, w) = images.first().map(|i| i.dim()).unwrap_or((IN_H, IN_W));
    let mut x = Array4::zeros((n, 1, h, w));
    for (i, img) in images.iter().enumerate() {
        for ((r, c), &v) in img.indexed_iter() {
            x[[i, 0, r, c]] = v as f32 / 255.0;
        }
    }
    x
}

/// Stack mask pairs into the 2-channel target tensor (iris then visible).
pub fn masks_to_target(masks: &[MaskPair]) -> Array4<f32> {
    let n = masks.len();
    let (h, w) = masks.first().map(|m| m.iris.dim()).unwrap_or((IN_H, IN_W));
    let mut y = Array4::zeros((n, 2, h, w));
    for (i, m) in masks.iter().enumerate() {
        y.slice_mut(s![i, 0, .., ..]).assign(&m.iris);
        y.slice_mut(s![i, 1, .., ..]).assign(&m.visible);
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeriTrainConfig {
    pub arch: AeriArchitecture,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Step scheduler: multiply lr by `sched_gamma` every `sched_step` epochs.
    pub sched_step: usize,
    pub sched_gamma: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for AeriTrainConfig {
    fn default() -> Self {
        Self {
            arch: AeriArchitecture::default(),
            lr: 1e-5,
            batch_size: 32,
            epochs: 30,
            sched_step: 5,
            sched_gamma: 0.1,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl AeriTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.augment.validate()?;
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.sched_step == 0 {
            return Err(Error::Config("epochs, batch_size, sched_step must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AeriEpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_miou: f64,
}

pub struct AeriTrainResult {
    pub model: UnetModel,
    pub log: Vec<AeriEpochStats>,
    /// Validation mIoU of the untrained model (reference point).
    pub untrained_miou: f64,
}

/// Mean IoU of thresholded predictions against hard ground-truth masks.
pub fn eval_miou(pred: &Array4<f32>, gt: &[MaskPair], threshold: f32) -> Result<f64> {
    let pred_pairs = split_mask_outputs(pred).into_iter().map(|p| p.binarize(threshold));
    let mut pairs = Vec::with_capacity(gt.len());
    for (p, g) in pred_pairs.zip(gt.iter()) {
        pairs.push((p, g.clone()));
    }
    let preds: Vec<MaskPair> = pairs.iter().map(|(p, _)| p.clone()).collect();
    let gts: Vec<MaskPair> = pairs.into_iter().map(|(_, g)| g).collect();
    metrics::miou(&preds, &gts)
}

/// Split a (n,2,h,w) network output into per-sample soft mask pairs.
pub fn split_mask_outputs(out: &Array4<f32>) -> Vec<MaskPair> {
    (0..out.shape()[0])
        .map(|i| MaskPair {
            iris: out.slice(s![i, 0, .., ..]).to_owned(),
            visible: out.slice(s![i, 1, .., ..]).to_owned(),
            soft: true,
        })
        .collect()
}

/// Run a full evaluation pass in inference mode, batched.
pub fn infer(model: &mut UnetModel, x: &Array4<f32>, batch: usize) -> Array4<f32> {
    let n = x.shape()[0];
    let mut out = Array4::zeros((n, 2, x.shape()[2], x.shape()[3]));
    let mut i = 0;
    while i < n {
        let j = (i + batch).min(n);
        let xb = x.slice(s![i..j, .., .., ..]).to_owned();
        let yb = model.forward(&xb, false, None);
        out.slice_mut(s![i..j, .., .., ..]).assign(&yb);
        i = j;
    }
    out
}

/// Train the U-Net on synthetic images with domain-randomizing augmentation.
///
/// Model selection: the returned weights are the epoch snapshot with the
/// lowest validation MSE. The epoch log carries train/val loss and val mIoU.
pub fn train_aeri(
    train_images: &[Array2<u8>],
    train_masks: &[MaskPair],
    val_images: &[Array2<u8>],
    val_masks: &[MaskPair],
    cfg: &AeriTrainConfig,
) -> Result<AeriTrainResult> {
    cfg.validate()?;
    contract!(!train_images.is_empty(), "training set is empty");
    contract!(
        train_images.len() == train_masks.len() && val_images.len() == val_masks.len(),
        "image/mask counts disagree"
    );

    let mut model = UnetModel::new(cfg.arch, crate::rng::derive_seed(cfg.seed, "aeri-init", 0))?;
    let mut opt = Adam::new(cfg.lr);
    let val_x = images_to_input(val_images);
    let val_y = masks_to_target(val_masks);
    let train_y_full = masks_to_target(train_masks);

    let untrained_miou = if val_images.is_empty() {
        0.0
    } else {
        let out = infer(&mut model, &val_x, cfg.batch_size);
        eval_miou(&out, val_masks, 0.5)?
    };

    let n = train_images.len();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut cache = UnetCache::default();
    let mut best: Option<(f64, Vec<ndarray::ArrayD<f32>>)> = None;
    for epoch in 0..cfg.epochs {
        let lr = nn::step_lr(cfg.lr, cfg.sched_step, cfg.sched_gamma, epoch);
        opt.lr = lr;
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = derived_rng(cfg.seed, "aeri-shuffle", epoch as u64);
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);

        let mut train_loss_sum = 0.0;
        let mut batches = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // Augment in f32 [0,255], then normalize.
            let mut xb = Array4::zeros((chunk.len(), 1, IN_H, IN_W));
            let mut yb = Array4::zeros((chunk.len(), 2, IN_H, IN_W));
            for (k, &idx) in chunk.iter().enumerate() {
                let mut img = train_images[idx].mapv(|v| v as f32);
                let mut aug_rng = derived_rng(
                    cfg.seed,
                    "aeri-aug",
                    (epoch * n + bi * cfg.batch_size + k) as u64,
                );
                crate::augment::apply_random(&mut img, &cfg.augment, &mut aug_rng)?;
                for ((r, c), &v) in img.indexed_iter() {
                    xb[[k, 0, r, c]] = v / 255.0;
                }
                yb.slice_mut(s![k, .., .., ..])
                    .assign(&train_y_full.slice(s![idx, .., .., ..]));
            }
            let out = model.forward(&xb, true, Some(&mut cache));
            let (loss, dldp) = aeri_loss(&out, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "non-finite training loss at epoch {epoch} batch {bi} (lr {lr:e})"
                )));
            }
            model.backward(&dldp, &cache);
            let mut params = model.params_mut();
            opt.step(&mut params);
            nn::zero_grads(&mut params);
            train_loss_sum += loss;
            batches += 1.0;
        }

        let (val_loss, val_miou) = if val_images.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let out = infer(&mut model, &val_x, cfg.batch_size);
            let (l, _) = aeri_loss(&out, &val_y)?;
            (l, eval_miou(&out, val_masks, 0.5)?)
        };
        let stats = AeriEpochStats {
            epoch: epoch + 1,
            lr,
            train_loss: train_loss_sum / batches,
            val_loss,
            val_miou,
        };
        tracing::info!(
            epoch = stats.epoch,
            lr = stats.lr,
            train_loss = stats.train_loss,
            val_loss = stats.val_loss,
            val_miou = stats.val_miou,
            "aeri epoch"
        );
        let select_metric = if val_images.is_empty() { stats.train_loss } else { val_loss };
        if best.as_ref().map_or(true, |(b, _)| select_metric < *b) {
            best = Some((
                select_metric,
                model.tensors().iter().map(|t| t.view.to_owned()).collect(),
            ));
        }
        log.push(stats);
    }

    // Restore the best snapshot.
    if let Some((_, snap)) = best {
        let names: Vec<String> = model.tensors().iter().map(|t| t.name.clone()).collect();
        let mut slots = Vec::new();
        for (i, e) in model.enc.iter_mut().enumerate() {
            e.tensors_mut(&format!("enc{i}"), &mut slots);
        }
        for (i, d) in model.dec.iter_mut().enumerate() {
            d.tensors_mut(&format!("dec{i}"), &mut slots);
        }
        model.head.tensors_mut("head", &mut slots);
        debug_assert_eq!(names.len(), snap.len());
        for (mut slot, data) in slots.into_iter().zip(snap.iter()) {
            slot.view.assign(data);
        }
    }

    Ok(AeriTrainResult { model, log, untrained_miou })
}

/// Frozen inference: binarized mask pairs for a set of images.
pub fn export_masks(
    model: &mut UnetModel,
    images: &[Array2<u8>],
    threshold: f32,
) -> Result<Vec<MaskPair>> {
    contract!(
        threshold > 0.0 && threshold < 1.0,
        "threshold {threshold} outside (0, 1)"
    );
    for img in images {
        contract!(
            img.dim() == (IN_H, IN_W),
            "image shape {:?} != ({IN_H}, {IN_W})",
            img.dim()
        );
    }
    let x = images_to_input(images);
    let out = infer(model, &x, 32);
    Ok(split_mask_outputs(&out).into_iter().map(|p| p.binarize(threshold)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> AeriArchitecture {
        AeriArchitecture { width_multiplier: 0.0625 }
    }

    #[test]
    fn forward_shape_contract() {
        let mut model = UnetModel::new(tiny_arch(), 1).unwrap();
        for batch in [1usize, 3] {
            let x = Array4::zeros((batch, 1, IN_H, IN_W));
            let y = model.forward(&x, false, None);
            assert_eq!(y.shape(), &[batch, 2, IN_H, IN_W]);
            assert!(y.iter().all(|&v| v.is_finite() && v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = UnetModel::new(tiny_arch(), 7).unwrap();
        let b = UnetModel::new(tiny_arch(), 7).unwrap();
        let at = a.tensors();
        let bt = b.tensors();
        assert_eq!(at.len(), bt.len());
        for (x, y) in at.iter().zip(bt.iter()) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.view, y.view);
        }
        let c = UnetModel::new(tiny_arch(), 8).unwrap();
        assert_ne!(a.weights_checksum(), c.weights_checksum());
    }

    #[test]
    fn width_multiplier_scales_plan() {
        assert_eq!(AeriArchitecture { width_multiplier: 1.0 }.widths(), [64, 128, 256, 512, 1024]);
        assert_eq!(AeriArchitecture { width_multiplier: 0.5 }.widths(), [32, 64, 128, 256, 512]);
        assert!(AeriArchitecture { width_multiplier: 0.0 }.validate().is_err());
    }

    #[test]
    fn loss_analytic_cases() {
        let gt = Array4::from_shape_fn((2, 2, 4, 5), |(_, c, y, x)| ((c + y + x) % 2) as f32);
        let (l, _) = aeri_loss(&gt.clone(), &gt).unwrap();
        assert_eq!(l, 0.0);
        let flipped = gt.mapv(|v| 1.0 - v);
        let (l, _) = aeri_loss(&flipped, &gt).unwrap();
        assert_eq!(l, 1.0);
        let half = Array4::from_elem((2, 2, 4, 5), 0.5f32);
        let (l, _) = aeri_loss(&half, &gt).unwrap();
        assert_eq!(l, 0.25);
        let bad = Array4::zeros((2, 2, 4, 6));
        assert!(aeri_loss(&bad, &gt).is_err());
    }

    // Finite-difference gradient verification lives in the integration
    // suite (tests/gradcheck.rs), which compares against a double-precision
    // reference forward — single-precision FD through ReLU kinks is too
    // biased for a tight tolerance.

    #[test]
    fn checkpoint_roundtrip_preserves_outputs() {
        let mut model = UnetModel::new(tiny_arch(), 11).unwrap();
        let x = Array4::from_shape_fn((2, 1, IN_H, IN_W), |(_, _, r, c)| {
            ((r * 60 + c) % 255) as f32 / 255.0
        });
        let before = model.forward(&x, false, None);
        let ckpt = model.as_checkpoint(serde_json::json!({"seed": 11}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aeri.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let mut model2 = UnetModel::from_checkpoint(&loaded).unwrap();
        let after = model2.forward(&x, false, None);
        assert_eq!(before, after);
        assert_eq!(model.weights_checksum(), model2.weights_checksum());
    }

    #[test]
    fn export_masks_is_frozen_and_deterministic() {
        let mut model = UnetModel::new(tiny_arch(), 13).unwrap();
        let img = Array2::from_shape_fn((IN_H, IN_W), |(r, c)| ((r * c) % 251) as u8);
        let before = model.weights_checksum();
        let a = export_masks(&mut model, &[img.clone()], 0.5).unwrap();
        let b = export_masks(&mut model, &[img], 0.5).unwrap();
        assert_eq!(model.weights_checksum(), before);
        assert_eq!(a[0].iris, b[0].iris);
        assert_eq!(a[0].visible, b[0].visible);
        assert!(!a[0].soft);
        assert!(a[0].iris.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn threshold_on_uniform_output() {
        // threshold 0.5 on an output forced to ~0.7 → all ones.
        let mut model = UnetModel::new(tiny_arch(), 17).unwrap();
        // Zero every weight, then set the head bias so sigmoid ≈ 0.7.
        for p in model.params_mut() {
            p.v.fill(0.0);
        }
        model.head.b.v.fill(0.8472979); // logit(0.7)
        let img = Array2::from_elem((IN_H, IN_W), 128u8);
        let masks = export_masks(&mut model, &[img], 0.5).unwrap();
        assert!(masks[0].iris.iter().all(|&v| v == 1.0));
        assert!(masks[0].visible.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn overfit_tiny_set() {
        // A narrow model on 8 samples must drive train loss well down,
        // and the final-epoch loss must be below epoch 1's.
        let ranges = crate::synth::ParamRanges::default();
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for i in 0..8 {
            let mut rng = derived_rng(400, "sample", i);
            let p = crate::synth::sample_scene(&mut rng, &ranges).unwrap();
            let s = crate::synth::render_eye(&p).unwrap();
            masks.push(crate::synth::sample_masks(&s).unwrap());
            images.push(s.image);
        }
        let cfg = AeriTrainConfig {
            arch: AeriArchitecture { width_multiplier: 0.125 },
            lr: 2e-3,
            batch_size: 8,
            epochs: 150,
            sched_step: 75,
            sched_gamma: 0.5,
            augment: AugmentConfig::disabled(),
            seed: 42,
        };
        let result = train_aeri(&images, &masks, &images, &masks, &cfg).unwrap();
        let first = result.log.first().unwrap().train_loss;
        let last = result.log.last().unwrap().train_loss;
        assert!(last < first, "no learning: {first} -> {last}");
        assert!(last < 0.05, "failed to overfit: final loss {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let ranges = crate::synth::ParamRanges::default();
        let mut images = Vec::new();
        let mut masks = Vec::new();
        for i in 0..4 {
            let mut rng = derived_rng(500, "sample", i);
            let p = crate::synth::sample_scene(&mut rng, &ranges).unwrap();
            let s = crate::synth::render_eye(&p).unwrap();
            masks.push(crate::synth::sample_masks(&s).unwrap());
            images.push(s.image);
        }
        let cfg = AeriTrainConfig {
            arch: tiny_arch(),
            lr: 1e-4,
            batch_size: 4,
            epochs: 2,
            ..AeriTrainConfig::default()
        };
        let a = train_aeri(&images, &masks, &images, &masks, &cfg).unwrap();
        let b = train_aeri(&images, &masks, &images, &masks, &cfg).unwrap();
        assert_eq!(a.log[0].train_loss, b.log[0].train_loss);
        assert_eq!(a.model.weights_checksum(), b.model.weights_checksum());
    }
}
