//! Dataset plumbing: label/manifest file formats, dataset indexes with
//! subject ids, and in-RAM loading for training.
//!
//! On-disk layout of a generated dataset directory:
//! - `<id>.png`   8-bit grayscale, 60×36
//! - `<id>.json`  label (gaze, head pose, landmarks, light)
//! - `manifest.json`  seed, generator version, split counts, entries
//!
//! External real datasets are ingested only in a normalized form: the same
//! per-sample files plus an `index.json` assigning a subject id to every
//! sample. Synthetic data gets deterministic pseudo-subjects instead.

use crate::imgio;
use crate::maskgen::{self, MaskPair};
use crate::metrics::GazeLabel;
use crate::synth::SynthSample;
use crate::{contract, Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

/// Generator version stamped into manifests.
pub const GENERATOR_VERSION: &str = "synth-eye-1";

/// Per-sample label file contents (`<id>.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelJson {
    /// [pitch, yaw] in radians.
    pub gaze: [f64; 2],
    /// [pitch, yaw] in radians.
    pub head_pose: [f64; 2],
    pub iris_landmarks: Vec<[f64; 2]>,
    pub interior_landmarks: Vec<[f64; 2]>,
    pub caruncle_landmarks: Vec<[f64; 2]>,
    pub light: f64,
}

impl LabelJson {
    pub fn from_sample(s: &SynthSample) -> Self {
        Self {
            gaze: [s.gaze.pitch, s.gaze.yaw],
            head_pose: [s.params.head_pose.0, s.params.head_pose.1],
            iris_landmarks: s.iris_landmarks.clone(),
            interior_landmarks: s.interior_landmarks.clone(),
            caruncle_landmarks: s.caruncle_landmarks.clone(),
            light: s.params.light_intensity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        contract!(self.iris_landmarks.len() == 32, "expected 32 iris landmarks, got {}", self.iris_landmarks.len());
        contract!(
            self.interior_landmarks.len() == 16,
            "expected 16 interior landmarks, got {}",
            self.interior_landmarks.len()
        );
        contract!(
            self.caruncle_landmarks.len() == 6,
            "expected 6 caruncle landmarks, got {}",
            self.caruncle_landmarks.len()
        );
        let finite = |v: &[[f64; 2]]| v.iter().all(|p| p[0].is_finite() && p[1].is_finite());
        contract!(
            finite(&self.iris_landmarks) && finite(&self.interior_landmarks) && finite(&self.caruncle_landmarks),
            "non-finite landmark coordinate"
        );
        Ok(())
    }

    pub fn gaze_label(&self) -> Result<GazeLabel> {
        GazeLabel::new(self.gaze[0], self.gaze[1])
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("serialize label: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let label: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        label.validate()?;
        Ok(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: String,
    pub label: String,
    pub split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
}

/// `manifest.json` contents for a generated dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub version: String,
    pub counts: SplitCounts,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self, dir: &Path) -> Result<()> {
        let (mut train, mut val) = (0, 0);
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            contract!(seen.insert(&e.id), "duplicate id {}", e.id);
            match e.split {
                Split::Train => train += 1,
                Split::Val => val += 1,
            }
            for rel in [&e.image, &e.label] {
                let p = dir.join(rel);
                if !p.is_file() {
                    return Err(Error::Data(format!("manifest references missing file {}", p.display())));
                }
            }
        }
        contract!(
            train == self.counts.train && val == self.counts.val,
            "manifest counts {}/{} disagree with entries {train}/{val}",
            self.counts.train,
            self.counts.val
        );
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Data(format!("serialize manifest: {e}")))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        m.validate(dir)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    Synthetic,
    ExternalNormalized,
}

/// One indexed sample, optionally with pre-exported mask paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSample {
    pub id: String,
    pub subject_id: String,
    pub image: PathBuf,
    pub label: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iris_mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_mask: Option<PathBuf>,
}

/// A dataset view with subject assignments, the harness's working unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub samples: Vec<IndexSample>,
    pub source: SourceTag,
}

impl DatasetIndex {
    /// Index a generated dataset, assigning `n_subjects` deterministic
    /// pseudo-subjects round-robin over sorted sample ids.
    pub fn from_synth_dir(dir: &Path, n_subjects: usize) -> Result<Self> {
        contract!(n_subjects >= 1, "need at least one pseudo-subject");
        let manifest = DatasetManifest::read(dir)?;
        let mut entries = manifest.entries;
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        let samples = entries
            .iter()
            .enumerate()
            .map(|(i, e)| IndexSample {
                id: e.id.clone(),
                subject_id: format!("s{:02}", i % n_subjects),
                image: dir.join(&e.image),
                label: dir.join(&e.label),
                iris_mask: None,
                visible_mask: None,
            })
            .collect();
        Ok(Self { samples, source: SourceTag::Synthetic })
    }

    /// Ingest an externally normalized dataset via its `index.json`
    /// (a serialized `DatasetIndex` with relative paths).
    pub fn from_index_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut idx: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut seen = BTreeSet::new();
        for s in &mut idx.samples {
            contract!(seen.insert(s.id.clone()), "duplicate id {}", s.id);
            contract!(!s.subject_id.is_empty(), "sample {} lacks a subject id", s.id);
            for p in [&mut s.image, &mut s.label] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(idx)
    }

    /// Attach exported mask paths (`<id>_iris.png`, `<id>_vis.png`).
    pub fn with_masks(&self, mask_dir: &Path) -> Self {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.iris_mask = Some(mask_dir.join(format!("{}_iris.png", s.id)));
            s.visible_mask = Some(mask_dir.join(format!("{}_vis.png", s.id)));
        }
        out
    }

    /// Sorted unique subject ids.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.samples.iter().map(|s| s.subject_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn filter_subjects(&self, keep: &BTreeSet<String>) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .filter(|s| keep.contains(&s.subject_id))
                .cloned()
                .collect(),
            source: self.source,
        }
    }
}

/// A fully loaded sample set for training/evaluation.
#[derive(Debug, Clone)]
pub struct LoadedSet {
    pub ids: Vec<String>,
    pub subjects: Vec<String>,
    pub images: Vec<Array2<u8>>,
    pub labels: Vec<LabelJson>,
    /// Binarized masks, present when the index carried mask paths.
    pub masks: Option<Vec<MaskPair>>,
}

impl LoadedSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Load every sample referenced by the index into memory.
    pub fn load(index: &DatasetIndex) -> Result<Self> {
        let mut out = Self {
            ids: Vec::with_capacity(index.samples.len()),
            subjects: Vec::with_capacity(index.samples.len()),
            images: Vec::with_capacity(index.samples.len()),
            labels: Vec::with_capacity(index.samples.len()),
            masks: None,
        };
        let mut masks = Vec::new();
        let want_masks = index.samples.iter().all(|s| s.iris_mask.is_some());
        for s in &index.samples {
            out.ids.push(s.id.clone());
            out.subjects.push(s.subject_id.clone());
            out.images.push(imgio::load_gray_png(&s.image)?);
            out.labels.push(LabelJson::read(&s.label)?);
            if want_masks {
                let iris = maskgen::load_mask_png(s.iris_mask.as_ref().unwrap())?;
                let vis = maskgen::load_mask_png(s.visible_mask.as_ref().unwrap())?;
                masks.push(MaskPair { iris, visible: vis, soft: false });
            }
        }
        if want_masks {
            out.masks = Some(masks);
        }
        Ok(out)
    }

    pub fn gaze_labels(&self) -> Result<Vec<GazeLabel>> {
        self.labels.iter().map(|l| l.gaze_label()).collect()
    }

    /// Ground-truth masks rasterized from the stored landmarks.
    pub fn gt_masks(&self) -> Result<Vec<MaskPair>> {
        self.labels
            .iter()
            .map(|l| {
                maskgen::make_masks(
                    &l.iris_landmarks,
                    &l.interior_landmarks,
                    &l.caruncle_landmarks,
                    imgio::IMG_H,
                    imgio::IMG_W,
                )
            })
            .collect()
    }
}

/// Histogram equalization over the full 0..=255 range (ingestion hook for
/// external imagery; generated synthetic data is consumed as-is).
pub fn histogram_equalize(img: &Array2<u8>) -> Array2<u8> {
    let n = img.len();
    if n == 0 {
        return img.clone();
    }
    let mut hist = [0u64; 256];
    for &v in img.iter() {
        hist[v as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (i, &h) in hist.iter().enumerate() {
        acc += h;
        cdf[i] = acc;
    }
    let cdf_min = *cdf.iter().find(|&&c| c > 0).unwrap_or(&0);
    let denom = (n as u64).saturating_sub(cdf_min).max(1);
    let mut lut = [0u8; 256];
    for i in 0..256 {
        let num = cdf[i].saturating_sub(cdf_min) * 255;
        lut[i] = ((num + denom / 2) / denom).min(255) as u8;
    }
    img.mapv(|v| lut[v as usize])
}
