//! Command-line entry point: one binary, nine subcommands covering the full
//! pipeline (data synthesis → isolation-network training → mask export →
//! gaze training → evaluation, robustness, ablations, and figure export).
//!
//! Configuration precedence: defaults ← flags ← `--config` file (file wins).
//! Every run persists its resolved config next to the outputs and prints its
//! canonical SHA-256. Outputs are never clobbered without `--overwrite`.
//! Exit codes: 0 success, 1 runtime failure (one-line `error[category]:`
//! message on stderr), 2 usage error.

use crate::aeri::{self, UnetModel};
use crate::checkpoint::Checkpoint;
use crate::config::{self, FileConfig, RunConfig};
use crate::dataset::{DatasetIndex, DatasetManifest, IndexSample, LoadedSet, SourceTag, Split};
use crate::error::{Error, Result};
use crate::gazenet::{self, GazeModel, VariantKind};
use crate::harness::{self, ProtocolTag};
use crate::metrics::angular_error_deg;
use crate::synth::ParamRanges;
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "msgaze", version, about = "Multistream gaze estimation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML config file; its values override flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed; every stage derives its randomness from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Draw the master seed from OS entropy (it is logged for replay).
    #[arg(long, global = true)]
    non_deterministic: bool,

    /// Emit logs as line-delimited JSON.
    #[arg(long, global = true)]
    log_json: bool,

    /// Log filter (error|warn|info|debug|trace).
    #[arg(long, global = true)]
    log_level: Option<String>,

    /// Allow existing outputs to be replaced.
    #[arg(long, global = true)]
    overwrite: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic eye dataset (grayscale images + JSON labels).
    SynthGen {
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the anatomical-region isolation network on synthetic data.
    TrainAeri {
        /// Synthetic dataset directory (from synth-gen).
        #[arg(long)]
        data: PathBuf,
        /// Output directory (checkpoint + training log).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Channel width multiplier (1.0 full model, 0.5 CPU profile).
        #[arg(long)]
        width: Option<f64>,
        /// Disable the domain-randomization augmentation stack.
        #[arg(long)]
        no_augment: bool,
    },
    /// Export binarized iris/visible-eyeball masks for a dataset.
    ExportMasks {
        /// Isolation-network checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        /// Dataset directory or index JSON.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for `<id>_iris.png` / `<id>_vis.png`.
        #[arg(long)]
        out: PathBuf,
        /// Binarization threshold in (0, 1).
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Train the gaze estimator with masks from a frozen isolation network.
    TrainGaze {
        /// Training dataset directory or index JSON.
        #[arg(long)]
        data: PathBuf,
        /// Frozen isolation-network checkpoint.
        #[arg(long)]
        aeri: PathBuf,
        /// Output directory (checkpoint + training log).
        #[arg(long)]
        out: PathBuf,
        /// Optional validation dataset directory or index JSON.
        #[arg(long)]
        val_data: Option<PathBuf>,
        /// Directory of pre-exported masks (skips mask inference).
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Network variant (e.g. full, no_masks, single_encoder).
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Predict gaze for one image; optionally render an arrow overlay.
    Predict {
        /// Gaze-estimator checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        /// Isolation-network checkpoint.
        #[arg(long)]
        aeri: PathBuf,
        /// Input grayscale PNG.
        #[arg(long)]
        image: PathBuf,
        /// Optional label JSON; adds the ground-truth arrow and the error.
        #[arg(long)]
        label: Option<PathBuf>,
        /// Optional overlay PNG path.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f32>,
    },
    /// Evaluate a gaze checkpoint on a dataset, writing a report CSV + JSON.
    Eval {
        /// Gaze-estimator checkpoint.
        #[arg(long)]
        ckpt: PathBuf,
        /// Isolation-network checkpoint.
        #[arg(long)]
        aeri: PathBuf,
        /// Dataset directory or index JSON.
        #[arg(long)]
        data: PathBuf,
        /// Directory of pre-exported masks.
        #[arg(long)]
        masks: Option<PathBuf>,
        /// Report CSV path (a JSON summary is written alongside).
        #[arg(long)]
        out: PathBuf,
    },
    /// Bucket a report's rows by estimated noise variance (CSV + plot).
    Robustness {
        /// Report CSV from `eval`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
        /// Curve CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Plot PNG path (defaults to the CSV path with .png).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Run the cross-validation protocol once per network variant.
    Ablate {
        /// Dataset directory or index JSON.
        #[arg(long)]
        data: PathBuf,
        /// Isolation-network checkpoint.
        #[arg(long)]
        aeri: PathBuf,
        /// Comma-separated variant list, or "all" (default).
        #[arg(long)]
        kinds: Option<String>,
        /// Table CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Run the augmentation ablation instead (retrains the isolation
        /// network per row; `--data` must be a synthetic dataset directory).
        #[arg(long)]
        augmentations: bool,
        /// Protocol override (loso|kfold).
        #[arg(long)]
        protocol: Option<String>,
        /// Fold count for kfold.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Render pred-vs-gt heatmaps (pitch and yaw) for a report.
    Heatmap {
        /// Report CSV from `eval`.
        #[arg(long)]
        report: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
}

/// Parse and execute; returns the process exit code.
pub fn run(argv: Vec<OsString>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::default();
    apply_flags(cli, &mut cfg);
    if let Some(path) = &cli.config {
        let file: FileConfig = config::load_file(path)?;
        cfg.apply_file(&file);
    }
    if !cfg.global.deterministic {
        cfg.global.seed = rand::RngCore::next_u64(&mut rand::rngs::OsRng);
    }
    cfg.finalize()?;
    init_logging(&cfg.global.log_level, cli.log_json);
    if !cfg.global.deterministic {
        tracing::info!(seed = cfg.global.seed, "seed drawn from OS entropy");
    }
    dispatch(cli, &cfg)
}

/// Overlay command-line flag values onto the default config (the config
/// file, applied afterwards, wins over these).
fn apply_flags(cli: &Cli, cfg: &mut RunConfig) {
    fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
        if let Some(v) = src {
            *dst = v.clone();
        }
    }
    set(&mut cfg.global.seed, &cli.seed);
    if cli.non_deterministic {
        cfg.global.deterministic = false;
    }
    set(&mut cfg.global.log_level, &cli.log_level);
    match &cli.command {
        Command::SynthGen { n, .. } => set(&mut cfg.synth.n, n),
        Command::TrainAeri { epochs, batch_size, lr, width, no_augment, .. } => {
            set(&mut cfg.aeri.epochs, epochs);
            set(&mut cfg.aeri.batch_size, batch_size);
            set(&mut cfg.aeri.lr, lr);
            set(&mut cfg.aeri.arch.width_multiplier, width);
            if *no_augment {
                cfg.aeri.augment = crate::augment::AugmentConfig::disabled();
            }
        }
        Command::ExportMasks { threshold, .. } | Command::Predict { threshold, .. } => {
            set(&mut cfg.protocol.mask_threshold, threshold);
        }
        Command::TrainGaze { epochs, batch_size, lr, .. } => {
            set(&mut cfg.gaze.epochs, epochs);
            set(&mut cfg.gaze.batch_size, batch_size);
            set(&mut cfg.gaze.lr, lr);
        }
        Command::Robustness { bins, .. } => set(&mut cfg.report.bins, bins),
        Command::Heatmap { bins, .. } => set(&mut cfg.report.heatmap_bins, bins),
        Command::Ablate { k, .. } => set(&mut cfg.protocol.k, k),
        Command::Eval { .. } => {}
    }
    // String-typed flags that need parsing are handled in dispatch, where
    // errors can surface as config errors.
}

fn init_logging(level: &str, json: bool) {
    use std::sync::Once;
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        let filter = tracing_subscriber::EnvFilter::try_new(level)
            .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
        if json {
            let _ = tracing_subscriber::fmt().with_env_filter(filter).json().try_init();
        } else {
            let _ = tracing_subscriber::fmt().with_env_filter(filter).try_init();
        }
    });
}

/// Refuse to clobber existing outputs unless `--overwrite` was given.
fn guard_overwrite(path: &Path, overwrite: bool) -> Result<()> {
    if overwrite {
        return Ok(());
    }
    if path.is_file() {
        return Err(Error::Config(format!(
            "{} already exists; pass --overwrite to replace it",
            path.display()
        )));
    }
    if path.is_dir() {
        let nonempty = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .next()
            .is_some();
        if nonempty {
            return Err(Error::Config(format!(
                "{} already exists and is not empty; pass --overwrite to replace its contents",
                path.display()
            )));
        }
    }
    Ok(())
}

/// Interpret `data` as either an index JSON file or a synthetic dataset
/// directory (pseudo-subjects assigned round-robin).
fn load_index(data: &Path, n_subjects: usize) -> Result<DatasetIndex> {
    if data.is_file() {
        DatasetIndex::from_index_json(data)
    } else {
        DatasetIndex::from_synth_dir(data, n_subjects)
    }
}

/// Build an index over one split of a synthetic dataset directory (subjects
/// are irrelevant for isolation-network training).
fn index_for_split(dir: &Path, split: Split) -> Result<DatasetIndex> {
    let manifest = DatasetManifest::read(dir)?;
    let samples: Vec<IndexSample> = manifest
        .entries
        .iter()
        .filter(|e| e.split == split)
        .map(|e| IndexSample {
            id: e.id.clone(),
            subject_id: "s00".into(),
            image: dir.join(&e.image),
            label: dir.join(&e.label),
            iris_mask: None,
            visible_mask: None,
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Data(format!(
            "dataset {} has no {:?} entries",
            dir.display(),
            split
        )));
    }
    Ok(DatasetIndex { samples, source: SourceTag::Synthetic })
}

fn provenance(cfg: &RunConfig, command: &str) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "command": command,
        "config_sha256": cfg.hash()?,
        "seed": cfg.global.seed,
    }))
}

fn persist_and_announce(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (path, hash) = cfg.persist(out)?;
    println!("config_sha256: {hash}");
    tracing::info!(config = %path.display(), hash, "resolved config persisted");
    Ok(())
}

fn parse_kinds(spec: Option<&str>) -> Result<Vec<VariantKind>> {
    match spec {
        None => Ok(VariantKind::ALL.to_vec()),
        Some(s) if s.trim().eq_ignore_ascii_case("all") => Ok(VariantKind::ALL.to_vec()),
        Some(s) => s
            .split(',')
            .map(|k| k.trim().parse::<VariantKind>())
            .collect::<Result<Vec<VariantKind>>>(),
    }
}

fn build_plan(
    index: &DatasetIndex,
    kind: ProtocolTag,
    k: usize,
    seed: u64,
) -> Result<harness::FoldPlan> {
    match kind {
        ProtocolTag::Loso => harness::split_loso(index),
        ProtocolTag::Kfold => harness::split_kfold_subjects(index, k, seed),
    }
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::SynthGen { out, .. } => synth_gen(cfg, out, cli.overwrite),
        Command::TrainAeri { data, out, .. } => train_aeri(cfg, data, out, cli.overwrite),
        Command::ExportMasks { ckpt, data, out, .. } => {
            export_masks(cfg, ckpt, data, out, cli.overwrite)
        }
        Command::TrainGaze { data, aeri, out, val_data, masks, variant, .. } => train_gaze(
            cfg,
            data,
            aeri,
            out,
            val_data.as_deref(),
            masks.as_deref(),
            variant.as_deref(),
            cli.overwrite,
        ),
        Command::Predict { ckpt, aeri, image, label, out, .. } => {
            predict(cfg, ckpt, aeri, image, label.as_deref(), out.as_deref(), cli.overwrite)
        }
        Command::Eval { ckpt, aeri, data, masks, out } => {
            eval(cfg, ckpt, aeri, data, masks.as_deref(), out, cli.overwrite)
        }
        Command::Robustness { report, out, plot, .. } => {
            robustness(cfg, report, out, plot.as_deref(), cli.overwrite)
        }
        Command::Ablate { data, aeri, kinds, out, augmentations, protocol, .. } => ablate(
            cfg,
            data,
            aeri,
            kinds.as_deref(),
            out,
            *augmentations,
            protocol.as_deref(),
            cli.overwrite,
        ),
        Command::Heatmap { report, out, .. } => heatmap(cfg, report, out, cli.overwrite),
    }
}

// ---------------------------------------------------------------------------
// Command bodies
// ---------------------------------------------------------------------------

fn synth_gen(cfg: &RunConfig, out: &Path, overwrite: bool) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let manifest =
        crate::synth::generate_dataset(cfg.synth.n, &ParamRanges::default(), cfg.global.seed, out)?;
    persist_and_announce(cfg, out)?;
    println!(
        "generated: {} samples ({} train / {} val) -> {}",
        manifest.entries.len(),
        manifest.counts.train,
        manifest.counts.val,
        out.display()
    );
    Ok(())
}

fn train_aeri(cfg: &RunConfig, data: &Path, out: &Path, overwrite: bool) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let train = LoadedSet::load(&index_for_split(data, Split::Train)?)?;
    let val = LoadedSet::load(&index_for_split(data, Split::Val)?)?;
    let train_masks = train.gt_masks()?;
    let val_masks = val.gt_masks()?;
    let result = aeri::train_aeri(&train.images, &train_masks, &val.images, &val_masks, &cfg.aeri)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ckpt_path = out.join("aeri.ckpt");
    result.model.as_checkpoint(provenance(cfg, "train-aeri")?).save(&ckpt_path)?;
    let log_path = out.join("train_log.csv");
    let mut w = csv::Writer::from_path(&log_path).map_err(|e| Error::Data(format!("{e}")))?;
    for row in &result.log {
        w.serialize(row).map_err(|e| Error::Data(format!("write log row: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(&log_path, e))?;
    persist_and_announce(cfg, out)?;
    let last = result.log.last().expect("training ran at least one epoch");
    println!(
        "trained: val_miou {:.4} (untrained {:.4}) -> {}",
        last.val_miou,
        result.untrained_miou,
        ckpt_path.display()
    );
    Ok(())
}

fn export_masks(
    cfg: &RunConfig,
    ckpt: &Path,
    data: &Path,
    out: &Path,
    overwrite: bool,
) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let index = load_index(data, cfg.synth.n_subjects)?;
    let set = LoadedSet::load(&index)?;
    let mut model = UnetModel::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let masks = aeri::export_masks(&mut model, &set.images, cfg.protocol.mask_threshold)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (id, pair) in set.ids.iter().zip(masks.iter()) {
        crate::maskgen::save_mask_png(&out.join(format!("{id}_iris.png")), &pair.iris)?;
        crate::maskgen::save_mask_png(&out.join(format!("{id}_vis.png")), &pair.visible)?;
    }
    persist_and_announce(cfg, out)?;
    println!("exported: {} mask pairs -> {}", masks.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_gaze(
    cfg: &RunConfig,
    data: &Path,
    aeri_path: &Path,
    out: &Path,
    val_data: Option<&Path>,
    masks: Option<&Path>,
    variant: Option<&str>,
    overwrite: bool,
) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let mut gaze_cfg = cfg.gaze.clone();
    if let Some(v) = variant {
        gaze_cfg.variant = v.parse()?;
    }
    let aeri_ckpt = Checkpoint::load(aeri_path)?;
    let load_with_masks = |path: &Path| -> Result<LoadedSet> {
        let mut index = load_index(path, cfg.synth.n_subjects)?;
        if let Some(dir) = masks {
            index = index.with_masks(dir);
        }
        let mut set = LoadedSet::load(&index)?;
        harness::ensure_masks(&mut set, &aeri_ckpt, cfg.protocol.mask_threshold)?;
        Ok(set)
    };
    let train_set = load_with_masks(data)?;
    let val_set = val_data.map(load_with_masks).transpose()?;
    let result = gazenet::train_gaze(&train_set, val_set.as_ref(), &aeri_ckpt, &gaze_cfg)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let ckpt_path = out.join("gaze.ckpt");
    result.model.as_checkpoint(provenance(cfg, "train-gaze")?).save(&ckpt_path)?;
    let log_path = out.join("train_log.csv");
    let mut w = csv::Writer::from_path(&log_path).map_err(|e| Error::Data(format!("{e}")))?;
    for row in &result.log {
        w.serialize(row).map_err(|e| Error::Data(format!("write log row: {e}")))?;
    }
    w.flush().map_err(|e| Error::io(&log_path, e))?;
    persist_and_announce(cfg, out)?;
    let last = result.log.last().expect("training ran at least one epoch");
    println!(
        "trained: variant {} train_loss {:.6} val_deg {} freeze_ok {} -> {}",
        gaze_cfg.variant,
        last.train_loss,
        last.val_angular_err_deg.map_or("n/a".into(), |d| format!("{d:.3}")),
        result.freeze.checksum_unchanged && result.freeze.max_grad_norm == 0.0,
        ckpt_path.display()
    );
    Ok(())
}

fn predict(
    cfg: &RunConfig,
    ckpt: &Path,
    aeri_path: &Path,
    image: &Path,
    label: Option<&Path>,
    out: Option<&Path>,
    overwrite: bool,
) -> Result<()> {
    let img = crate::imgio::load_gray_png(image)?;
    let mut unet = UnetModel::from_checkpoint(&Checkpoint::load(aeri_path)?)?;
    let masks = aeri::export_masks(&mut unet, std::slice::from_ref(&img), cfg.protocol.mask_threshold)?;
    let mut model = GazeModel::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let pred = gazenet::predict_gaze(&mut model, &[&img], &[&masks[0]])?[0];
    let gt = label
        .map(|p| crate::dataset::LabelJson::read(p)?.gaze_label())
        .transpose()?;
    let mut line = serde_json::json!({
        "pitch_rad": pred.pitch,
        "yaw_rad": pred.yaw,
        "pitch_deg": pred.pitch.to_degrees(),
        "yaw_deg": pred.yaw.to_degrees(),
    });
    if let Some(gt) = gt {
        line["gt_pitch_rad"] = gt.pitch.into();
        line["gt_yaw_rad"] = gt.yaw.into();
        line["angular_error_deg"] = angular_error_deg(gt, pred).into();
    }
    println!("{line}");
    if let Some(path) = out {
        guard_overwrite(path, overwrite)?;
        harness::arrow_overlay_png(&img, pred, gt, path)?;
        tracing::info!(overlay = %path.display(), "overlay written");
    }
    Ok(())
}

fn eval(
    cfg: &RunConfig,
    ckpt: &Path,
    aeri_path: &Path,
    data: &Path,
    masks: Option<&Path>,
    out: &Path,
    overwrite: bool,
) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let started = std::time::Instant::now();
    let mut index = load_index(data, cfg.synth.n_subjects)?;
    if let Some(dir) = masks {
        index = index.with_masks(dir);
    }
    let mut set = LoadedSet::load(&index)?;
    let aeri_ckpt = Checkpoint::load(aeri_path)?;
    harness::ensure_masks(&mut set, &aeri_ckpt, cfg.protocol.mask_threshold)?;
    let mut model = GazeModel::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    let rows = harness::evaluate_rows(&mut model, &set, 0)?;
    let report = harness::EvalReport::from_rows(
        rows,
        cfg.hash()?,
        started.elapsed().as_secs_f64(),
        Vec::new(),
    )?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let (csv_path, json_path) = report.write(out)?;
    persist_and_announce(cfg, out)?;
    println!(
        "evaluated: {} rows, mean_deg {:.4} -> {} / {}",
        report.rows.len(),
        report.mean_deg,
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn robustness(
    cfg: &RunConfig,
    report: &Path,
    out: &Path,
    plot: Option<&Path>,
    overwrite: bool,
) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let rep = harness::EvalReport::read_rows_csv(report)?;
    let curve = harness::robustness_curve(&rep, cfg.report.bins)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    harness::write_robustness_csv(&curve, out)?;
    let plot_path = plot.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("png"));
    guard_overwrite(&plot_path, overwrite)?;
    harness::write_robustness_plot(&curve, &plot_path)?;
    persist_and_announce(cfg, out)?;
    println!(
        "robustness: {} populated bins -> {} / {}",
        curve.len(),
        out.display(),
        plot_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn ablate(
    cfg: &RunConfig,
    data: &Path,
    aeri_path: &Path,
    kinds: Option<&str>,
    out: &Path,
    augmentations: bool,
    protocol: Option<&str>,
    overwrite: bool,
) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let proto_kind = match protocol {
        None => cfg.protocol.kind,
        Some("loso") => ProtocolTag::Loso,
        Some("kfold") => ProtocolTag::Kfold,
        Some(other) => {
            return Err(Error::Config(format!("unknown protocol {other:?} (loso|kfold)")))
        }
    };
    let index = load_index(data, cfg.synth.n_subjects)?;
    let plan = build_plan(&index, proto_kind, cfg.protocol.k, cfg.global.seed)?;
    let proto_cfg = harness::ProtocolConfig {
        gaze: cfg.gaze.clone(),
        mask_threshold: cfg.protocol.mask_threshold,
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    if augmentations {
        let aeri_train = LoadedSet::load(&index_for_split(data, Split::Train)?)?;
        let aeri_val = LoadedSet::load(&index_for_split(data, Split::Val)?)?;
        let specs = harness::augmentation_rows(&cfg.aeri.augment);
        let rows = harness::augmentation_ablation(
            &aeri_train,
            &aeri_val,
            &cfg.aeri,
            &index,
            &plan,
            &proto_cfg,
            &specs,
        )?;
        harness::write_aug_ablation_csv(&rows, out)?;
        persist_and_announce(cfg, out)?;
        println!("ablation: {} augmentation rows -> {}", rows.len(), out.display());
    } else {
        let kinds = parse_kinds(kinds)?;
        let aeri_ckpt = Checkpoint::load(aeri_path)?;
        let rows = harness::ablation_suite(&index, &plan, &kinds, &proto_cfg, &aeri_ckpt)?;
        harness::write_ablation_csv(&rows, out)?;
        persist_and_announce(cfg, out)?;
        println!("ablation: {} variant rows -> {}", rows.len(), out.display());
    }
    Ok(())
}

fn heatmap(cfg: &RunConfig, report: &Path, out: &Path, overwrite: bool) -> Result<()> {
    guard_overwrite(out, overwrite)?;
    let rep = harness::EvalReport::read_rows_csv(report)?;
    let files = harness::heatmap_export(&rep, out, cfg.report.heatmap_bins)?;
    persist_and_announce(cfg, out)?;
    for f in &files {
        println!("wrote: {}", f.display());
    }
    Ok(())
}
