//! JSON-lines manifests.
//!
//! One record per line, one schema for every stage. Source manifests (sampler
//! input) must carry `description` and `masks`; detection manifests must
//! carry `categories`; the sampler's output carries everything plus seed
//! provenance. `visual_ref` paths are resolved relative to the manifest file.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vad_core::mask::RleMask;
use vad_core::sampler::{ExposureSample, SourceSample};

use crate::error::{PipelineError, Result};
use crate::synth::SceneSpec;

/// One manifest line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    /// Raw blob file or frame directory, relative to the manifest.
    pub visual_ref: String,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Genuine object description (source manifests).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Per-frame run-length masks, column-major counts starting with the
    /// 0-run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<RleMask>>,
    /// Categories to detect (detection manifests).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_labels: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_anomalous: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_e: Option<usize>,
    /// Sampler seed that produced this record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Per-sample sub-seed actually used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
    /// Present only for generated scenes; enables the oracle scorer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SceneSpec>,
    /// Precomputed vision features (`[T][N_p][D_v]` stack file); when set,
    /// detection skips the toy vision encoder for this sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vision_features_ref: Option<String>,
    /// Patch grid `(rows, cols)` of the precomputed vision features;
    /// required alongside `vision_features_ref`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_grid: Option<(usize, usize)>,
    /// Precomputed category features (`[K][D_t]` matrix file); when set,
    /// detection skips the toy text encoder for this sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_features_ref: Option<String>,
}

impl SampleRecord {
    /// Interprets the record as a sampler source sample.
    pub fn to_source(&self) -> Result<SourceSample> {
        let description = self.description.clone().ok_or_else(|| {
            PipelineError::data(format!("sample {:?} lacks a description", self.id))
        })?;
        let masks = self
            .masks
            .clone()
            .ok_or_else(|| PipelineError::data(format!("sample {:?} lacks masks", self.id)))?;
        let source = SourceSample {
            id: self.id.clone(),
            visual_ref: self.visual_ref.clone(),
            frames: self.frames,
            height: self.height,
            width: self.width,
            masks,
            description,
        };
        source.validate()?;
        Ok(source)
    }

    /// Categories, required for detection.
    pub fn detect_categories(&self) -> Result<&[String]> {
        match &self.categories {
            Some(c) if !c.is_empty() => Ok(c),
            _ => Err(PipelineError::data(format!(
                "sample {:?} lacks categories",
                self.id
            ))),
        }
    }

    /// Builds the sampler-output record for an exposure sample.
    pub fn from_exposure(e: &ExposureSample, seed: u64, sample_seed: u64) -> Self {
        SampleRecord {
            id: e.base.id.clone(),
            visual_ref: e.base.visual_ref.clone(),
            frames: e.base.frames,
            height: e.base.height,
            width: e.base.width,
            description: Some(e.base.description.clone()),
            masks: Some(e.base.masks.clone()),
            categories: Some(e.categories.clone()),
            frame_labels: Some(e.frame_labels.clone()),
            is_anomalous: Some(e.is_anomalous),
            k_e: Some(e.k_e),
            seed: Some(seed),
            sample_seed: Some(sample_seed),
            ..SampleRecord::default()
        }
    }

    /// Resolves `visual_ref` against the manifest's directory.
    pub fn resolve_visual(&self, manifest_path: &Path) -> PathBuf {
        resolve_relative(&self.visual_ref, manifest_path)
    }
}

/// Resolves a manifest-relative reference; absolute paths pass through.
pub fn resolve_relative(reference: &str, manifest_path: &Path) -> PathBuf {
    let p = Path::new(reference);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(p)
    }
}

/// Reads a JSON-lines manifest; blank lines are ignored.
pub fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = fs::File::open(path)
        .map_err(|e| PipelineError::data(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| PipelineError::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(record);
    }
    let mut seen = std::collections::BTreeSet::new();
    for r in &out {
        if !seen.insert(&r.id) {
            return Err(PipelineError::data(format!(
                "{}: duplicate sample id {:?}",
                path.display(),
                r.id
            )));
        }
    }
    Ok(out)
}

/// Writes a JSON-lines manifest, one record per line.
pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    for r in records {
        serde_json::to_writer(&mut file, r)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}
