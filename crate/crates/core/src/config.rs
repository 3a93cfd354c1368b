//! Run configuration: a global section plus per-command sections, resolved
//! as defaults ← command-line flags ← config file (the file wins), with the
//! merged result persisted next to the outputs and hashed canonically.
//!
//! Unknown keys anywhere in the file are rejected. Per-stage seeds are not
//! configurable individually: all randomness flows from the single global
//! seed, which is copied into every stage config during resolution.

use crate::aeri::AeriTrainConfig;
use crate::augment::AugmentConfig;
use crate::checkpoint::sha256_hex;
use crate::error::{Error, Result};
use crate::gazenet::{GazeTrainConfig, VariantKind};
use crate::harness::ProtocolTag;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Compute device. Only the CPU backend exists; the selector is here so
/// configs stay forward-compatible and typos fail loudly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Device {
    #[default]
    Cpu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub seed: u64,
    /// When false, the seed is drawn from OS entropy at startup (and logged);
    /// everything downstream still flows from that one value.
    pub deterministic: bool,
    pub device: Device,
    pub log_level: String,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: true,
            device: Device::Cpu,
            log_level: "info".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    /// Samples to generate with `synth-gen`.
    pub n: usize,
    /// Pseudo-subjects assigned round-robin when indexing a synthetic
    /// directory for subject-disjoint protocols.
    pub n_subjects: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { n: 256, n_subjects: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub kind: ProtocolTag,
    /// Fold count for the k-fold protocol.
    pub k: usize,
    /// Binarization threshold for masks exported by the frozen isolation
    /// network.
    pub mask_threshold: f32,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self { kind: ProtocolTag::Kfold, k: 3, mask_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Quantile bins for robustness curves.
    pub bins: usize,
    /// Axis bins for pred-vs-gt heatmaps.
    pub heatmap_bins: usize,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { bins: 10, heatmap_bins: 24 }
    }
}

/// Fully resolved configuration for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub global: GlobalConfig,
    pub synth: SynthSection,
    pub aeri: AeriTrainConfig,
    pub gaze: GazeTrainConfig,
    pub protocol: ProtocolSection,
    pub report: ReportSection,
}

impl RunConfig {
    /// Copy the global seed into every stage and bounds-check each section.
    pub fn finalize(&mut self) -> Result<()> {
        self.aeri.seed = self.global.seed;
        self.gaze.seed = self.global.seed;
        self.aeri.validate()?;
        self.gaze.validate()?;
        if self.protocol.k < 2 {
            return Err(Error::Config(format!(
                "protocol.k must be at least 2, got {}",
                self.protocol.k
            )));
        }
        if !(self.protocol.mask_threshold > 0.0 && self.protocol.mask_threshold < 1.0) {
            return Err(Error::Config(format!(
                "protocol.mask_threshold must lie in (0, 1), got {}",
                self.protocol.mask_threshold
            )));
        }
        if self.synth.n == 0 || self.synth.n_subjects == 0 {
            return Err(Error::Config("synth.n and synth.n_subjects must be positive".into()));
        }
        if self.report.bins == 0 || self.report.heatmap_bins == 0 {
            return Err(Error::Config("report bin counts must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form: TOML with the struct's fixed field order.
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    /// SHA-256 of the canonical text form.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.canonical_toml()?.as_bytes()))
    }

    /// Write the resolved config next to `out` (inside it when `out` is a
    /// directory target, as a `<stem>_config.toml` sibling when it is a
    /// file target). Returns the sidecar path and the config hash.
    pub fn persist(&self, out: &Path) -> Result<(PathBuf, String)> {
        let path = resolved_config_path(out);
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let text = self.canonical_toml()?;
        std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        Ok((path, sha256_hex(text.as_bytes())))
    }

    /// Overlay file values on top of the current (default+flag) values.
    pub fn apply_file(&mut self, file: &FileConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        if let Some(g) = &file.global {
            set(&mut self.global.seed, &g.seed);
            set(&mut self.global.deterministic, &g.deterministic);
            set(&mut self.global.device, &g.device);
            set(&mut self.global.log_level, &g.log_level);
        }
        if let Some(s) = &file.synth {
            set(&mut self.synth.n, &s.n);
            set(&mut self.synth.n_subjects, &s.n_subjects);
        }
        if let Some(a) = &file.aeri {
            set(&mut self.aeri.arch.width_multiplier, &a.width_multiplier);
            set(&mut self.aeri.lr, &a.lr);
            set(&mut self.aeri.batch_size, &a.batch_size);
            set(&mut self.aeri.epochs, &a.epochs);
            set(&mut self.aeri.sched_step, &a.sched_step);
            set(&mut self.aeri.sched_gamma, &a.sched_gamma);
            set(&mut self.aeri.augment, &a.augment);
        }
        if let Some(g) = &file.gaze {
            set(&mut self.gaze.variant, &g.variant);
            set(&mut self.gaze.fc_widths, &g.fc_widths);
            set(&mut self.gaze.lr, &g.lr);
            set(&mut self.gaze.batch_size, &g.batch_size);
            set(&mut self.gaze.epochs, &g.epochs);
            set(&mut self.gaze.plateau_factor, &g.plateau_factor);
            set(&mut self.gaze.plateau_patience, &g.plateau_patience);
            set(&mut self.gaze.block_dropout, &g.block_dropout);
            set(&mut self.gaze.head_dropout, &g.head_dropout);
            set(&mut self.gaze.verify_freeze_every, &g.verify_freeze_every);
        }
        if let Some(p) = &file.protocol {
            set(&mut self.protocol.kind, &p.kind);
            set(&mut self.protocol.k, &p.k);
            set(&mut self.protocol.mask_threshold, &p.mask_threshold);
        }
        if let Some(r) = &file.report {
            set(&mut self.report.bins, &r.bins);
            set(&mut self.report.heatmap_bins, &r.heatmap_bins);
        }
    }
}

/// Where the resolved config sidecar lives for a given output target.
pub fn resolved_config_path(out: &Path) -> PathBuf {
    if out.extension().is_some() {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}_config.toml"))
    } else {
        out.join("resolved_config.toml")
    }
}

// ---------------------------------------------------------------------------
// File-side mirrors (every field optional; unknown keys rejected)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub global: Option<FileGlobal>,
    pub synth: Option<FileSynth>,
    pub aeri: Option<FileAeri>,
    pub gaze: Option<FileGaze>,
    pub protocol: Option<FileProtocol>,
    pub report: Option<FileReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileGlobal {
    pub seed: Option<u64>,
    pub deterministic: Option<bool>,
    pub device: Option<Device>,
    pub log_level: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSynth {
    pub n: Option<usize>,
    pub n_subjects: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileAeri {
    pub width_multiplier: Option<f64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub sched_step: Option<usize>,
    pub sched_gamma: Option<f64>,
    pub augment: Option<AugmentConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileGaze {
    pub variant: Option<VariantKind>,
    pub fc_widths: Option<Vec<usize>>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub plateau_factor: Option<f64>,
    pub plateau_patience: Option<usize>,
    pub block_dropout: Option<f64>,
    pub head_dropout: Option<f64>,
    pub verify_freeze_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileProtocol {
    pub kind: Option<ProtocolTag>,
    pub k: Option<usize>,
    pub mask_threshold: Option<f32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileReport {
    pub bins: Option<usize>,
    pub heatmap_bins: Option<usize>,
}

/// Parse a config file, rejecting unknown keys.
pub fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
