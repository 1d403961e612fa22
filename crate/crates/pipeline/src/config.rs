//! Pipeline configuration: a sectioned TOML file with every knob defaulted.
//!
//! Missing sections and fields fall back to the defaults listed in the
//! README, so an empty file is a valid configuration. Cross-module dimension
//! consistency holds by construction: stages that must agree on a dimension
//! read it from the same field (the compression/decoder token dim is the
//! encoder's `vision_dim`, the decoder latent dim is the projector's
//! `prompt_dim`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use vad_core::compression::CompressionConfig;
use vad_core::decoder::{DecoderDims, LossConfig};
use vad_core::projector::ProjectorDims;
use vad_core::sampler::{NormalBranch, SamplerConfig};
use vad_core::semantic::TemplateId;

use crate::error::{PipelineError, Result};
use crate::tensor_io::sha256_str;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Master seed; every stage derives its own sub-stream from it.
    pub seed: u64,
    /// `synthetic`, `fixture`, or `subprocess`.
    pub provider: String,
    /// Fixture JSON-lines file (provider = "fixture").
    pub fixture_path: String,
    /// Command line to spawn (provider = "subprocess").
    pub provider_cmd: Vec<String>,
    pub provider_timeout_secs: u64,
    /// Prompt template: `direct`, `checklist`, or `random`.
    pub template: String,
    /// Directory of saved projector weights; empty means seeded init.
    pub projector_weights: String,
    /// Directory of saved decoder weights; empty means seeded init.
    pub decoder_weights: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            provider: "synthetic".to_string(),
            fixture_path: String::new(),
            provider_cmd: Vec::new(),
            provider_timeout_secs: 30,
            template: "direct".to_string(),
            projector_weights: String::new(),
            decoder_weights: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub anomaly_probability: f64,
    pub max_k_e: usize,
    /// `prose` (irrelevant categories only for normal samples) or
    /// `equation` (genuine category with negative labels).
    pub normal_branch: String,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            anomaly_probability: 0.5,
            max_k_e: 30,
            normal_branch: "prose".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionSection {
    pub k: usize,
    pub ratio: f64,
    pub epsilon: f64,
}

impl Default for CompressionSection {
    fn default() -> Self {
        let c = CompressionConfig::default();
        CompressionSection {
            k: c.k,
            ratio: c.ratio,
            epsilon: c.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSection {
    pub patch_size: usize,
    pub vision_dim: usize,
    pub text_dim: usize,
}

impl Default for EncoderSection {
    fn default() -> Self {
        EncoderSection {
            patch_size: 16,
            vision_dim: 64,
            text_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemanticSection {
    /// Semantic vector dimension `D_s`.
    pub dim: usize,
}

impl Default for SemanticSection {
    fn default() -> Self {
        SemanticSection { dim: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectorSection {
    pub link_dim: usize,
    pub hidden_dim: usize,
    pub prompt_dim: usize,
    pub query_count: usize,
    pub depth: usize,
}

impl Default for ProjectorSection {
    fn default() -> Self {
        let d = ProjectorDims::default();
        ProjectorSection {
            link_dim: d.link_dim,
            hidden_dim: d.hidden_dim,
            prompt_dim: d.prompt_dim,
            query_count: d.query_count,
            depth: d.depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderSection {
    pub pixel_dim: usize,
    pub depth: usize,
    pub upsample: usize,
}

impl Default for DecoderSection {
    fn default() -> Self {
        let d = DecoderDims::default();
        DecoderSection {
            pixel_dim: d.pixel_dim,
            depth: d.depth,
            upsample: d.upsample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub lambda_seg: f64,
    pub lambda_focal: f64,
    pub lambda_dice: f64,
    pub lambda_obj: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        LossSection {
            lambda_seg: l.lambda_seg,
            lambda_focal: l.lambda_focal,
            lambda_dice: l.lambda_dice,
            lambda_obj: l.lambda_obj,
            focal_gamma: l.focal_gamma,
            focal_alpha: l.focal_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub run: RunSection,
    pub sampler: SamplerSection,
    pub compression: CompressionSection,
    pub encoder: EncoderSection,
    pub semantic: SemanticSection,
    pub projector: ProjectorSection,
    pub decoder: DecoderSection,
    pub loss: LossSection,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| PipelineError::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(PipelineError::Config(msg));
        if !(0.0..=1.0).contains(&self.sampler.anomaly_probability) {
            return cfg(format!(
                "sampler.anomaly_probability {} outside [0, 1]",
                self.sampler.anomaly_probability
            ));
        }
        if self.sampler.max_k_e < 1 {
            return cfg("sampler.max_k_e must be at least 1".into());
        }
        self.normal_branch()?;
        self.template_id()?;
        if !(self.compression.ratio > 0.0 && self.compression.ratio <= 1.0) {
            return cfg(format!(
                "compression.ratio {} outside (0, 1]",
                self.compression.ratio
            ));
        }
        if self.compression.k < 1 {
            return cfg("compression.k must be at least 1".into());
        }
        if !self.compression.epsilon.is_finite() || self.compression.epsilon <= 0.0 {
            return cfg("compression.epsilon must be positive".into());
        }
        for (name, v) in [
            ("encoder.patch_size", self.encoder.patch_size),
            ("encoder.vision_dim", self.encoder.vision_dim),
            ("encoder.text_dim", self.encoder.text_dim),
            ("semantic.dim", self.semantic.dim),
            ("projector.link_dim", self.projector.link_dim),
            ("projector.hidden_dim", self.projector.hidden_dim),
            ("projector.prompt_dim", self.projector.prompt_dim),
            ("projector.query_count", self.projector.query_count),
            ("decoder.pixel_dim", self.decoder.pixel_dim),
            ("decoder.upsample", self.decoder.upsample),
        ] {
            if v == 0 {
                return cfg(format!("{name} must be positive"));
            }
        }
        match self.run.provider.as_str() {
            "synthetic" => {}
            "fixture" => {
                if self.run.fixture_path.is_empty() {
                    return cfg("run.fixture_path required for the fixture provider".into());
                }
            }
            "subprocess" => {
                if self.run.provider_cmd.is_empty() {
                    return cfg("run.provider_cmd required for the subprocess provider".into());
                }
            }
            other => return cfg(format!("unknown provider {other:?}")),
        }
        // the loss section reuses the core validation
        self.loss_config()
            .validate()
            .map_err(PipelineError::config)?;
        Ok(())
    }

    pub fn normal_branch(&self) -> Result<NormalBranch> {
        match self.sampler.normal_branch.as_str() {
            "prose" => Ok(NormalBranch::Prose),
            "equation" => Ok(NormalBranch::Equation),
            other => Err(PipelineError::config(format!(
                "sampler.normal_branch must be \"prose\" or \"equation\", got {other:?}"
            ))),
        }
    }

    pub fn template_id(&self) -> Result<TemplateId> {
        match self.run.template.as_str() {
            "direct" => Ok(TemplateId::Direct),
            "checklist" => Ok(TemplateId::Checklist),
            "random" => Ok(TemplateId::Random),
            other => Err(PipelineError::config(format!(
                "run.template must be \"direct\", \"checklist\", or \"random\", got {other:?}"
            ))),
        }
    }

    pub fn sampler_config(&self) -> Result<SamplerConfig> {
        Ok(SamplerConfig {
            anomaly_probability: self.sampler.anomaly_probability,
            max_k_e: self.sampler.max_k_e,
            seed: self.run.seed,
            normal_branch: self.normal_branch()?,
        })
    }

    pub fn compression_config(&self) -> CompressionConfig {
        CompressionConfig {
            k: self.compression.k,
            ratio: self.compression.ratio,
            epsilon: self.compression.epsilon,
        }
    }

    pub fn projector_dims(&self) -> ProjectorDims {
        ProjectorDims {
            text_dim: self.encoder.text_dim,
            vision_dim: self.encoder.vision_dim,
            link_dim: self.projector.link_dim,
            hidden_dim: self.projector.hidden_dim,
            semantic_dim: self.semantic.dim,
            prompt_dim: self.projector.prompt_dim,
            query_count: self.projector.query_count,
            depth: self.projector.depth,
        }
    }

    pub fn decoder_dims(&self) -> DecoderDims {
        DecoderDims {
            prompt_dim: self.projector.prompt_dim,
            vision_dim: self.encoder.vision_dim,
            pixel_dim: self.decoder.pixel_dim,
            depth: self.decoder.depth,
            upsample: self.decoder.upsample,
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda_seg: self.loss.lambda_seg,
            lambda_focal: self.loss.lambda_focal,
            lambda_dice: self.loss.lambda_dice,
            lambda_obj: self.loss.lambda_obj,
            focal_gamma: self.loss.focal_gamma,
            focal_alpha: self.loss.focal_alpha,
        }
    }

    /// Hash of the fully resolved configuration, embedded in every output.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        sha256_str(&canonical)
    }
}
