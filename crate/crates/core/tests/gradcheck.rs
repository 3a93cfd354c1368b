//! Finite-difference gradient checks for the region-isolation network,
//! using an independent f64 reference forward pass (see `common`).

mod common;

use common::{perturbed, ref_unet_loss, tensor_value, unet_param_names, RefUnet};
use msgaze::aeri::{aeri_loss, AeriArchitecture, UnetCache, UnetModel, IN_H, IN_W};
use msgaze::nn::zero_grads;
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ARCH: AeriArchitecture = AeriArchitecture { width_multiplier: 0.25 };

fn random_batch(seed: u64, n: usize) -> (Array4<f32>, Array4<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array4::from_shape_fn((n, 1, IN_H, IN_W), |_| rng.gen_range(0.0f32..1.0));
    let gt = Array4::from_shape_fn((n, 2, IN_H, IN_W), |_| {
        if rng.gen_bool(0.3) {
            1.0f32
        } else {
            0.0
        }
    });
    (x, gt)
}

#[test]
fn reference_forward_matches_library() {
    let mut model = UnetModel::new(ARCH, 7).expect("model builds");
    let (x, gt) = random_batch(99, 2);
    let pred = model.forward(&x, true, None);

    let ck = model.as_checkpoint(serde_json::Value::Null);
    let reference = RefUnet::from_checkpoint(&ck);
    let yref = reference.forward(&x.mapv(f64::from));

    assert_eq!(pred.dim(), yref.dim());
    let max_diff = pred
        .iter()
        .zip(yref.iter())
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        max_diff < 1e-3,
        "f32 forward and f64 reference disagree: max diff {max_diff}"
    );

    let (loss, _) = aeri_loss(&pred, &gt).expect("loss");
    let loss_ref = ref_unet_loss(&ck, &x.mapv(f64::from), &gt.mapv(f64::from));
    assert!(
        (loss - loss_ref).abs() < 1e-4,
        "loss mismatch: lib {loss} vs reference {loss_ref}"
    );
}

#[test]
fn param_order_matches_checkpoint_names() {
    let mut model = UnetModel::new(ARCH, 7).expect("model builds");
    let ck = model.as_checkpoint(serde_json::Value::Null);
    let names = unet_param_names(&ck);
    let params = model.params_mut();
    assert_eq!(
        names.len(),
        params.len(),
        "trainable tensor count drifted between checkpoint and parameter vector"
    );
    for (name, p) in names.iter().zip(params.iter()) {
        let t = ck.tensor(name).expect("named tensor");
        assert_eq!(t.len(), p.numel(), "shape mismatch for {name}");
    }
}

#[test]
fn finite_difference_matches_backward_across_layer_types() {
    let mut model = UnetModel::new(ARCH, 11).expect("model builds");
    let (x, gt) = random_batch(13, 2);
    let xref = x.mapv(f64::from);
    let gtref = gt.mapv(f64::from);

    // Analytic gradients.
    {
        let mut params = model.params_mut();
        zero_grads(&mut params);
    }
    let mut cache = UnetCache::default();
    let pred = model.forward(&x, true, Some(&mut cache));
    let (_, dpred) = aeri_loss(&pred, &gt).expect("loss");
    model.backward(&dpred, &cache);

    let ck = model.as_checkpoint(serde_json::Value::Null);
    let names = unet_param_names(&ck);
    let grads: Vec<Vec<f64>> = model
        .params_mut()
        .iter()
        .map(|p| p.g.iter().map(|&v| v as f64).collect())
        .collect();
    assert_eq!(names.len(), grads.len());

    // Sample weights across every layer kind that has a well-conditioned
    // gradient. Convolution biases feeding a batch-norm are excluded: the
    // normalization makes the output exactly invariant to them, so both the
    // analytic and numerical gradients are ~0 and their ratio is noise.
    let targets: [(&str, usize); 10] = [
        ("enc0.conv1.weight", 2),
        ("enc1.conv2.weight", 1),
        ("enc4.conv1.weight", 1),
        ("dec0.conv2.weight", 1),
        ("dec3.conv1.weight", 1),
        ("head.weight", 2),
        ("head.bias", 1),
        ("enc0.bn1.gamma", 1),
        ("enc2.bn2.beta", 1),
        ("dec1.bn1.gamma", 1),
    ];

    // Step size: the loss has strong curvature in early-layer weights via
    // the batch statistics, so large steps leave visible O(h^2) truncation;
    // h = 1e-4 brings truncation well under the tolerance while staying far
    // above f32 weight quantization (the actual step is read back below).
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let h = 1e-4f64;
    let mut checked = 0usize;
    for (name, count) in targets {
        let pos = names.iter().position(|n| n == name).expect("known tensor");
        let tensor_grads = &grads[pos];
        let numel = tensor_grads.len();
        // Coordinates whose gradient is far below the tensor's typical
        // magnitude sit at the f32-vs-f64 activation-regime noise floor, so
        // the error is measured against max(|fd|, |g|, rms) — a 1% check at
        // the scale the coordinate actually lives at.
        let rms = (tensor_grads.iter().map(|v| v * v).sum::<f64>() / numel as f64).sqrt();
        for _ in 0..count {
            let idx = rng.gen_range(0..numel);
            let ckp = perturbed(&ck, name, idx, h);
            let ckm = perturbed(&ck, name, idx, -h);
            // Use the actual (f32-quantized) step between the two weights.
            let denom = tensor_value(&ckp, name, idx) - tensor_value(&ckm, name, idx);
            assert!(denom > 0.0, "degenerate perturbation for {name}[{idx}]");
            let fd = (ref_unet_loss(&ckp, &xref, &gtref) - ref_unet_loss(&ckm, &xref, &gtref))
                / denom;
            let g = tensor_grads[idx];
            let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(rms).max(1e-7);
            assert!(
                rel < 1e-2,
                "gradient mismatch at {name}[{idx}]: analytic {g}, finite-difference {fd}, rel {rel}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 12);
}
