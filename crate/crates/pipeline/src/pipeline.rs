//! Stage orchestration: sampling, synthesis, detection, evaluation.
//!
//! Every output embeds provenance (tool version, stage, config hash, seed);
//! binary and line-oriented files get a `.provenance.json` sidecar carrying
//! the payload's SHA-256 so tampering is detectable. All randomness derives
//! from the run seed through fixed sub-stream indices, so re-running any
//! stage with the same configuration reproduces its outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vad_core::compression::{compress, CompressionConfig, TokenSet};
use vad_core::decoder::{decode, DecoderWeights, ScoreBundle};
use vad_core::encoders::{encode_text, encode_vision, CategoryFeatures, VisionFeatures};
use vad_core::metrics::{frame_ap, frame_auc, pixel_auc, EvalRecord};
use vad_core::projector::{frame_cross_attention, project, ProjectorWeights};
use vad_core::rng::derive_subseed;
use vad_core::sampler::build_exposure_dataset;
use vad_core::semantic::{
    extract_semantic, render_prompt, SemanticProvider, SyntheticProvider, TemplateId,
};
use vad_core::{CoreError, Rng};

use crate::config::PipelineConfig;
use crate::error::{PipelineError, Result};
use crate::frames::load_frames;
use crate::manifest::{read_manifest, resolve_relative, write_manifest, SampleRecord};
use crate::providers::{load_fixture, SubprocessProvider};
use crate::synth::{oracle_bundle, random_scene, render_scene};
use crate::tensor_io::{read_matrix, read_stack, sha256_file, write_matrix, write_stack};

/// Identity block embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(stage: &str, config_hash: String, seed: u64) -> Self {
        Provenance {
            tool: "vad".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            stage: stage.to_string(),
            config_sha256: config_hash,
            seed,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    content_sha256: String,
    provenance: Provenance,
}

/// Writes `<file>.provenance.json` next to a payload file.
fn write_sidecar(payload: &Path, provenance: &Provenance) -> Result<()> {
    let sidecar = Sidecar {
        content_sha256: sha256_file(payload)?,
        provenance: provenance.clone(),
    };
    let path = sidecar_path(payload);
    fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

fn sidecar_path(payload: &Path) -> PathBuf {
    let mut name = payload
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push_str(".provenance.json");
    payload.with_file_name(name)
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

/// Rewrites a manifest-relative `visual_ref` so it stays valid when the
/// record moves to `output` manifest's directory: kept relative when the
/// target lies under that directory, made absolute otherwise.
fn portable_visual_ref(record: &SampleRecord, input: &Path, output: &Path) -> Result<String> {
    let resolved = record.resolve_visual(input);
    let resolved = std::path::absolute(&resolved)?;
    let out_parent = match output.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let out_dir = std::path::absolute(out_parent)?;
    Ok(match resolved.strip_prefix(&out_dir) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => resolved.to_string_lossy().into_owned(),
    })
}

/// Relabels a source manifest into an exposure manifest.
pub fn run_sampler(config: &PipelineConfig, input: &Path, output: &Path) -> Result<usize> {
    let records = read_manifest(input)?;
    let sources = records
        .iter()
        .map(|r| r.to_source())
        .collect::<Result<Vec<_>>>()?;
    let sampler_config = config.sampler_config()?;
    let exposures = build_exposure_dataset(&sources, &sampler_config)?;
    let out_records: Vec<SampleRecord> = exposures
        .iter()
        .zip(&records)
        .enumerate()
        .map(|(i, (e, record))| {
            let mut out = SampleRecord::from_exposure(
                e,
                sampler_config.seed,
                derive_subseed(sampler_config.seed, i as u64),
            );
            out.visual_ref = portable_visual_ref(record, input, output)?;
            out.synthetic = record.synthetic.clone();
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(output, &out_records)?;
    write_sidecar(
        output,
        &Provenance::new("sample", config.hash(), config.run.seed),
    )?;
    Ok(out_records.len())
}

// ---------------------------------------------------------------------------
// compress
// ---------------------------------------------------------------------------

/// JSON sidecar emitted next to a compressed token dump.
#[derive(Debug, Serialize, Deserialize)]
pub struct CompressionSidecar {
    pub tokens_total: usize,
    pub tokens_forwarded: usize,
    pub background_indices: Vec<usize>,
    pub assignment: Vec<usize>,
    pub densities: Vec<f64>,
    pub compressed_sha256: String,
    pub provenance: Provenance,
}

/// Compresses a binary token dump file into a compressed dump plus sidecar.
pub fn run_compress(
    input: &Path,
    output: &Path,
    sidecar: &Path,
    cfg: &CompressionConfig,
    provenance: Provenance,
) -> Result<CompressionSidecar> {
    let tokens = TokenSet::new(read_matrix(input)?);
    let result = compress(&tokens, cfg)?;
    write_matrix(output, &result.compressed)?;
    let record = CompressionSidecar {
        tokens_total: tokens.len(),
        tokens_forwarded: result.compressed.rows(),
        background_indices: result.background_indices,
        assignment: result.assignment,
        densities: result.densities,
        compressed_sha256: sha256_file(output)?,
        provenance,
    };
    fs::write(sidecar, serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

const SCENE_CATEGORY_POOL: &[&str] = &[
    "bright moving block",
    "flickering shadow",
    "color burst",
    "texture tear",
    "static ghost",
    "drifting smudge",
];

/// Generates synthetic scenes under `out_dir` and writes `manifest.jsonl`.
pub fn run_synth(
    config: &PipelineConfig,
    out_dir: &Path,
    scenes: usize,
    frames: usize,
    height: usize,
    width: usize,
) -> Result<PathBuf> {
    let clips = out_dir.join("clips");
    fs::create_dir_all(&clips)?;
    let mut rng = Rng::from_seed(derive_subseed(config.run.seed, 0x5ce));
    let mut records = Vec::with_capacity(scenes);
    for i in 0..scenes {
        let spec = random_scene(frames, height, width, &mut rng);
        let scene = render_scene(&spec)?;
        let clip_name = format!("clips/scene-{i:03}.rawvid");
        crate::tensor_io::write_video_blob(&out_dir.join(&clip_name), &scene.frames)?;
        // the genuine category plus two distractors, shuffled
        let genuine = SCENE_CATEGORY_POOL[i % SCENE_CATEGORY_POOL.len()];
        let mut categories = vec![genuine.to_string()];
        let others: Vec<&str> = SCENE_CATEGORY_POOL
            .iter()
            .copied()
            .filter(|c| *c != genuine)
            .collect();
        let picks = rng.sample_without_replacement(&others, 2);
        categories.extend(picks.iter().map(|s| s.to_string()));
        rng.shuffle(&mut categories);
        records.push(SampleRecord {
            id: format!("scene-{i:03}"),
            visual_ref: clip_name,
            frames,
            height,
            width,
            description: Some(genuine.to_string()),
            masks: Some(scene.masks),
            categories: Some(categories),
            frame_labels: Some(scene.frame_labels),
            is_anomalous: None,
            k_e: None,
            seed: Some(config.run.seed),
            sample_seed: None,
            synthetic: Some(spec),
            ..SampleRecord::default()
        });
    }
    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &records)?;
    write_sidecar(
        &manifest_path,
        &Provenance::new("synth", config.hash(), config.run.seed),
    )?;
    Ok(manifest_path)
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

/// Per-video output record written as `bundles/<id>.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct BundleFile {
    pub video_id: String,
    pub provider_id: String,
    pub template: String,
    /// Token count entering compression.
    pub tokens_total: usize,
    /// Token count forwarded to the semantic provider.
    pub tokens_forwarded: usize,
    pub frame_scores: Vec<f64>,
    pub frame_logits: Vec<f64>,
    /// Pixel score stack, relative to the output directory.
    pub pixel_file: String,
    pub pixel_sha256: String,
    pub pixel_shape: (usize, usize, usize),
    pub provenance: Provenance,
}

/// Aggregate metrics written as `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub n_videos: usize,
    pub n_frames: usize,
    pub n_labeled_videos: usize,
    pub frame_auc: Option<f64>,
    pub frame_ap: Option<f64>,
    pub pixel_auc: Option<f64>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

fn template_name(id: TemplateId) -> &'static str {
    match id {
        TemplateId::Direct => "direct",
        TemplateId::Checklist => "checklist",
        TemplateId::Random => "random",
    }
}

/// Vision features exactly as `detect` computes them with the toy encoder;
/// dumping these with [`crate::tensor_io::write_stack`] produces a
/// substitution file that reproduces the non-substituted run bit for bit.
pub fn toy_vision_features(
    config: &PipelineConfig,
    frames: &vad_core::encoders::FrameTensor,
) -> Result<VisionFeatures> {
    Ok(encode_vision(
        frames,
        config.encoder.patch_size,
        config.encoder.vision_dim,
        derive_subseed(config.run.seed, 1),
    )?)
}

/// Category features exactly as `detect` computes them with the toy encoder.
pub fn toy_text_features(
    config: &PipelineConfig,
    categories: &[String],
) -> Result<CategoryFeatures> {
    Ok(encode_text(
        categories,
        config.encoder.text_dim,
        derive_subseed(config.run.seed, 2),
    )?)
}

/// Loads a precomputed `[T][N_p][D_v]` vision-feature stack for a sample.
fn load_vision_features(
    record: &SampleRecord,
    reference: &str,
    manifest_path: &Path,
    config: &PipelineConfig,
) -> Result<VisionFeatures> {
    let grid = record.patch_grid.ok_or_else(|| {
        PipelineError::data(format!(
            "sample {:?}: vision_features_ref requires patch_grid",
            record.id
        ))
    })?;
    let frames = read_stack(&resolve_relative(reference, manifest_path))?;
    if frames.len() != record.frames {
        return Err(PipelineError::data(format!(
            "sample {:?}: feature stack has {} frames, manifest says {}",
            record.id,
            frames.len(),
            record.frames
        )));
    }
    let patches = frames.first().map(|f| f.rows()).unwrap_or(0);
    let dim = frames.first().map(|f| f.cols()).unwrap_or(0);
    if grid.0 * grid.1 != patches {
        return Err(PipelineError::data(format!(
            "sample {:?}: patch grid {}x{} does not cover {patches} patches",
            record.id, grid.0, grid.1
        )));
    }
    if dim != config.encoder.vision_dim {
        return Err(PipelineError::data(format!(
            "sample {:?}: feature dim {dim} does not match encoder.vision_dim {}",
            record.id, config.encoder.vision_dim
        )));
    }
    Ok(VisionFeatures {
        frames,
        patch_grid: grid,
    })
}

/// Loads a precomputed `[K][D_t]` category-feature matrix for a sample.
fn load_text_features(
    record: &SampleRecord,
    reference: &str,
    manifest_path: &Path,
    config: &PipelineConfig,
    categories: &[String],
) -> Result<CategoryFeatures> {
    let features = read_matrix(&resolve_relative(reference, manifest_path))?;
    if features.rows() != categories.len() {
        return Err(PipelineError::data(format!(
            "sample {:?}: {} feature rows for {} categories",
            record.id,
            features.rows(),
            categories.len()
        )));
    }
    if features.cols() != config.encoder.text_dim {
        return Err(PipelineError::data(format!(
            "sample {:?}: text feature dim {} does not match encoder.text_dim {}",
            record.id,
            features.cols(),
            config.encoder.text_dim
        )));
    }
    Ok(CategoryFeatures {
        features,
        categories: categories.to_vec(),
    })
}

fn build_provider(config: &PipelineConfig) -> Result<Box<dyn SemanticProvider>> {
    match config.run.provider.as_str() {
        "synthetic" => Ok(Box::new(SyntheticProvider::new(
            config.semantic.dim,
            config.encoder.vision_dim,
            derive_subseed(config.run.seed, 5),
        ))),
        "fixture" => Ok(Box::new(load_fixture(
            Path::new(&config.run.fixture_path),
            config.semantic.dim,
        )?)),
        "subprocess" => Ok(Box::new(SubprocessProvider::spawn(
            &config.run.provider_cmd,
            config.semantic.dim,
            Duration::from_secs(config.run.provider_timeout_secs),
        )?)),
        other => Err(PipelineError::config(format!("unknown provider {other:?}"))),
    }
}

struct SampleOutput {
    record_index: usize,
    bundle: ScoreBundle,
    tokens_total: usize,
    tokens_forwarded: usize,
    template: TemplateId,
    provider_id: String,
}

/// Everything shared across the per-sample scoring closures.
struct DetectContext<'a> {
    config: &'a PipelineConfig,
    projector_weights: &'a ProjectorWeights,
    decoder_weights: &'a DecoderWeights,
    provider: &'a dyn SemanticProvider,
    manifest_path: &'a Path,
    oracle: bool,
}

fn process_sample(
    ctx: &DetectContext<'_>,
    record: &SampleRecord,
    index: usize,
) -> Result<SampleOutput> {
    let DetectContext {
        config,
        projector_weights,
        decoder_weights,
        provider,
        manifest_path,
        oracle,
    } = *ctx;
    let stage = |e: PipelineError, what: &str| match e {
        PipelineError::Provider(msg) => {
            PipelineError::Provider(format!("sample {:?} [{what}]: {msg}", record.id))
        }
        PipelineError::Config(msg) => {
            PipelineError::Config(format!("sample {:?} [{what}]: {msg}", record.id))
        }
        PipelineError::Data(msg) => {
            PipelineError::Data(format!("sample {:?} [{what}]: {msg}", record.id))
        }
    };
    let seed = config.run.seed;
    let categories = record.detect_categories()?.to_vec();
    // raw frames are needed unless precomputed vision features cover this
    // sample and no oracle rendering is requested
    let frames = if record.vision_features_ref.is_none() || oracle {
        let loaded =
            load_frames(&record.resolve_visual(manifest_path)).map_err(|e| stage(e, "frames"))?;
        if loaded.frames != record.frames
            || loaded.height != record.height
            || loaded.width != record.width
        {
            return Err(PipelineError::data(format!(
                "sample {:?}: clip is {}x{}x{}, manifest says {}x{}x{}",
                record.id,
                loaded.frames,
                loaded.height,
                loaded.width,
                record.frames,
                record.height,
                record.width
            )));
        }
        Some(loaded)
    } else {
        None
    };
    let vision = match &record.vision_features_ref {
        Some(reference) => load_vision_features(record, reference, manifest_path, config)
            .map_err(|e| stage(e, "features"))?,
        None => toy_vision_features(
            config,
            frames.as_ref().expect("frames loaded when not substituted"),
        )
        .map_err(|e| stage(e, "encode"))?,
    };
    let tokens = vision.to_tokens().map_err(|e| stage(e.into(), "encode"))?;
    let tokens_total = tokens.len();
    let compressed =
        compress(&tokens, &config.compression_config()).map_err(|e| stage(e.into(), "compress"))?;
    let tokens_forwarded = compressed.compressed.rows();

    let mut prompt_rng = Rng::from_seed(derive_subseed(seed, 1000 + index as u64));
    let prompt = render_prompt(&categories, config.template_id()?, &mut prompt_rng)
        .map_err(|e| stage(e.into(), "prompt"))?;
    let semantic = extract_semantic(provider, &record.id, &compressed, &prompt)
        .map_err(|e| stage(e.into(), "semantics"))?;

    let bundle = if oracle {
        let spec = record.synthetic.as_ref().ok_or_else(|| {
            PipelineError::data(format!(
                "sample {:?}: oracle scoring requires synthetic scene provenance",
                record.id
            ))
        })?;
        let frames = frames.as_ref().expect("frames loaded in oracle mode");
        oracle_bundle(spec, frames).map_err(|e| stage(e, "oracle"))?
    } else {
        let text = match &record.text_features_ref {
            Some(reference) => {
                load_text_features(record, reference, manifest_path, config, &categories)
                    .map_err(|e| stage(e, "features"))?
            }
            None => toy_text_features(config, &categories).map_err(|e| stage(e, "encode-text"))?,
        };
        let attention = frame_cross_attention(&text, &vision, projector_weights)
            .map_err(|e| stage(e.into(), "project"))?;
        let projected = project(&semantic, &attention, projector_weights)
            .map_err(|e| stage(e.into(), "project"))?;
        decode(&projected, &vision, decoder_weights).map_err(|e| stage(e.into(), "decode"))?
    };
    Ok(SampleOutput {
        record_index: index,
        bundle,
        tokens_total,
        tokens_forwarded,
        template: prompt.template_id,
        provider_id: semantic.provider_id,
    })
}

/// Ground-truth masks for pixel metrics. Masks pass through manifests
/// unmodified, but a sample designated normal has no prompted category in
/// its content, so its effective pixel target is all-zeros.
fn effective_pixel_labels(record: &SampleRecord) -> Option<Vec<vad_core::mask::RleMask>> {
    let masks = record.masks.as_ref()?;
    if record.is_anomalous == Some(false) {
        Some(
            masks
                .iter()
                .map(|m| vad_core::mask::RleMask::zeros(m.height, m.width))
                .collect(),
        )
    } else {
        Some(masks.clone())
    }
}

fn metrics_from(
    records: &[SampleRecord],
    bundles: &[ScoreBundle],
    provenance: Provenance,
) -> Result<MetricsReport> {
    let mut eval_records = Vec::new();
    let mut n_frames = 0usize;
    for (record, bundle) in records.iter().zip(bundles) {
        n_frames += bundle.frame_count();
        let Some(labels) = &record.frame_labels else {
            continue;
        };
        if labels.len() != bundle.frame_count() {
            return Err(PipelineError::data(format!(
                "sample {:?}: {} labels for {} frames",
                record.id,
                labels.len(),
                bundle.frame_count()
            )));
        }
        let pixel_labels = effective_pixel_labels(record);
        eval_records.push(EvalRecord {
            video_id: record.id.clone(),
            frame_scores: bundle.frame_scores.clone(),
            frame_labels: labels.clone(),
            pixel_scores: pixel_labels.as_ref().map(|_| bundle.pixel_scores.clone()),
            pixel_labels,
        });
    }
    let mut notes = Vec::new();
    let mut metric = |result: vad_core::Result<f64>, name: &str| match result {
        Ok(v) => Some(v),
        Err(CoreError::UndefinedMetric(msg)) => {
            notes.push(format!("{name} undefined: {msg}"));
            None
        }
        Err(e) => {
            notes.push(format!("{name} unavailable: {e}"));
            None
        }
    };
    let (fa, ap, pa) = if eval_records.is_empty() {
        notes.push("no labeled videos".to_string());
        (None, None, None)
    } else {
        let fa = metric(frame_auc(&eval_records), "frame_auc");
        let ap = metric(frame_ap(&eval_records), "frame_ap");
        let with_pixels: Vec<EvalRecord> = eval_records
            .iter()
            .filter(|r| r.pixel_scores.is_some() && r.pixel_labels.is_some())
            .cloned()
            .collect();
        let pa = if with_pixels.is_empty() {
            notes.push("pixel_auc undefined: no ground-truth masks".to_string());
            None
        } else {
            metric(pixel_auc(&with_pixels), "pixel_auc")
        };
        (fa, ap, pa)
    };
    Ok(MetricsReport {
        n_videos: records.len(),
        n_frames,
        n_labeled_videos: eval_records.len(),
        frame_auc: fa,
        frame_ap: ap,
        pixel_auc: pa,
        notes,
        provenance,
    })
}

fn write_scores_csv(
    path: &Path,
    records: &[SampleRecord],
    bundles: &[ScoreBundle],
    provenance: &Provenance,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["video_id", "frame", "score", "label"])?;
    for (record, bundle) in records.iter().zip(bundles) {
        for (t, score) in bundle.frame_scores.iter().enumerate() {
            let label = record
                .frame_labels
                .as_ref()
                .map(|l| l[t].to_string())
                .unwrap_or_default();
            writer.write_record([
                record.id.as_str(),
                &t.to_string(),
                &format!("{score}"),
                &label,
            ])?;
        }
    }
    writer.flush()?;
    drop(writer);
    write_sidecar(path, provenance)?;
    Ok(())
}

/// The weights `detect` will score with: loaded from the configured weight
/// directories when set, otherwise freshly seeded from the run seed. Loaded
/// weights must agree with the configured dimensions.
pub fn detect_weights(config: &PipelineConfig) -> Result<(ProjectorWeights, DecoderWeights)> {
    let projector = if config.run.projector_weights.is_empty() {
        ProjectorWeights::init(&config.projector_dims(), derive_subseed(config.run.seed, 3))?
    } else {
        let loaded =
            crate::weights_io::load_projector_weights(Path::new(&config.run.projector_weights))?;
        if loaded.dims != config.projector_dims() {
            return Err(PipelineError::config(format!(
                "projector weights in {} have dims {:?}, config wants {:?}",
                config.run.projector_weights,
                loaded.dims,
                config.projector_dims()
            )));
        }
        loaded
    };
    let decoder = if config.run.decoder_weights.is_empty() {
        DecoderWeights::init(&config.decoder_dims(), derive_subseed(config.run.seed, 4))?
    } else {
        let loaded =
            crate::weights_io::load_decoder_weights(Path::new(&config.run.decoder_weights))?;
        if loaded.dims != config.decoder_dims() {
            return Err(PipelineError::config(format!(
                "decoder weights in {} have dims {:?}, config wants {:?}",
                config.run.decoder_weights,
                loaded.dims,
                config.decoder_dims()
            )));
        }
        loaded
    };
    Ok((projector, decoder))
}

/// Runs detection over a manifest, writing score bundles, pixel stacks, a
/// metrics report, and a per-frame score curve CSV under `out_dir`.
pub fn run_detect(
    config: &PipelineConfig,
    manifest_path: &Path,
    out_dir: &Path,
    oracle: bool,
) -> Result<MetricsReport> {
    let records = read_manifest(manifest_path)?;
    let provenance = Provenance::new(
        if oracle { "detect-oracle" } else { "detect" },
        config.hash(),
        config.run.seed,
    );
    fs::create_dir_all(out_dir.join("bundles"))?;
    fs::create_dir_all(out_dir.join("pixels"))?;

    if !oracle && records.iter().any(|r| r.synthetic.is_none()) {
        eprintln!(
            "notice: scoring with untrained randomly initialized weights; \
             scores on non-synthetic data are not meaningful"
        );
    }
    if oracle {
        if let Some(r) = records.iter().find(|r| r.synthetic.is_none()) {
            return Err(PipelineError::data(format!(
                "sample {:?}: oracle scoring refuses manifests without synthetic scene provenance",
                r.id
            )));
        }
    }

    let (projector_weights, decoder_weights) = detect_weights(config)?;
    let provider = build_provider(config)?;

    let ctx = DetectContext {
        config,
        projector_weights: &projector_weights,
        decoder_weights: &decoder_weights,
        provider: provider.as_ref(),
        manifest_path,
        oracle,
    };
    let outputs: Vec<SampleOutput> = records
        .par_iter()
        .enumerate()
        .map(|(i, record)| process_sample(&ctx, record, i))
        .collect::<Result<Vec<_>>>()?;

    let mut bundles = Vec::with_capacity(outputs.len());
    for out in &outputs {
        let record = &records[out.record_index];
        let pixel_rel = format!("pixels/{}.bin", record.id);
        let pixel_path = out_dir.join(&pixel_rel);
        write_stack(&pixel_path, &out.bundle.pixel_scores)?;
        let shape = (
            out.bundle.pixel_scores.len(),
            out.bundle.pixel_scores[0].rows(),
            out.bundle.pixel_scores[0].cols(),
        );
        let bundle_file = BundleFile {
            video_id: record.id.clone(),
            provider_id: out.provider_id.clone(),
            template: template_name(out.template).to_string(),
            tokens_total: out.tokens_total,
            tokens_forwarded: out.tokens_forwarded,
            frame_scores: out.bundle.frame_scores.clone(),
            frame_logits: out.bundle.frame_logits.clone(),
            pixel_file: pixel_rel,
            pixel_sha256: sha256_file(&pixel_path)?,
            pixel_shape: shape,
            provenance: provenance.clone(),
        };
        fs::write(
            out_dir.join("bundles").join(format!("{}.json", record.id)),
            serde_json::to_string_pretty(&bundle_file)?,
        )?;
        bundles.push(out.bundle.clone());
    }

    let report = metrics_from(&records, &bundles, provenance.clone())?;
    fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    write_scores_csv(&out_dir.join("scores.csv"), &records, &bundles, &provenance)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Recomputes metrics from previously written score bundles and a
/// ground-truth manifest. Pixel stacks are integrity-checked against the
/// hashes recorded in their bundles.
pub fn run_eval(
    scores_dir: &Path,
    truth_path: &Path,
    output: &Path,
    csv_out: Option<&Path>,
) -> Result<MetricsReport> {
    let records = read_manifest(truth_path)?;
    let mut bundles = Vec::with_capacity(records.len());
    let mut provenance: Option<Provenance> = None;
    for record in &records {
        let bundle_path = scores_dir
            .join("bundles")
            .join(format!("{}.json", record.id));
        let text = fs::read_to_string(&bundle_path)
            .map_err(|e| PipelineError::data(format!("{}: {e}", bundle_path.display())))?;
        let bundle_file: BundleFile = serde_json::from_str(&text)
            .map_err(|e| PipelineError::data(format!("{}: {e}", bundle_path.display())))?;
        let pixel_path = scores_dir.join(&bundle_file.pixel_file);
        let actual_sha = sha256_file(&pixel_path)?;
        if actual_sha != bundle_file.pixel_sha256 {
            return Err(PipelineError::data(format!(
                "{}: pixel stack hash mismatch (expected {}, found {actual_sha})",
                pixel_path.display(),
                bundle_file.pixel_sha256
            )));
        }
        let pixel_scores = read_stack(&pixel_path)?;
        let logits = bundle_file.frame_logits.clone();
        provenance.get_or_insert(bundle_file.provenance.clone());
        // bundle files persist scores only; the logit slots are filled with
        // scores since metrics read nothing but the score fields
        bundles.push(ScoreBundle {
            frame_scores: bundle_file.frame_scores.clone(),
            frame_logits: logits,
            pixel_logits: pixel_scores.clone(),
            patch_logits: pixel_scores.clone(),
            pixel_scores,
        });
    }
    let provenance = Provenance {
        stage: "eval".to_string(),
        ..provenance.unwrap_or_else(|| Provenance::new("eval", String::new(), 0))
    };
    let report = metrics_from(&records, &bundles, provenance.clone())?;
    fs::write(output, serde_json::to_string_pretty(&report)?)?;
    if let Some(csv_path) = csv_out {
        write_scores_csv(csv_path, &records, &bundles, &provenance)?;
    }
    Ok(report)
}
