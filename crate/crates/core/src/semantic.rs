//! Clip-level anomaly semantics extraction.
//!
//! The pipeline asks a provider one question per clip: given the compressed
//! visual tokens and a prompt listing candidate anomaly categories, return a
//! single embedding summarizing "what is anomalous here" (the designated
//! segmentation-token embedding of a multimodal language model, in the full
//! system). Real model inference stays behind the [`SemanticProvider`] trait;
//! this crate ships a deterministic synthetic provider and a fixture-backed
//! provider, and the companion crate adds a subprocess-based one speaking a
//! JSON line protocol, so a real model can be wired in without touching the
//! pipeline.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::compression::CompressionResult;
use crate::error::{contract, CoreError, Result};
use crate::numerics::Matrix;
use crate::rng::{derive_subseed, Rng};

/// Marker the rendered prompt uses for the designated embedding slot.
pub const SEG_MARKER: &str = "<SEG>";

/// Prompt template selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TemplateId {
    /// "Find the anomaly ..." phrasing.
    #[default]
    Direct,
    /// Checklist-style phrasing.
    Checklist,
    /// Uniformly random choice among the fixed templates.
    Random,
}

/// Number of fixed (non-random) templates shipped.
pub const TEMPLATE_COUNT: usize = 2;

/// A rendered prompt: the chosen template filled with the category list.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PromptSpec {
    /// Concrete template used (never `Random`; a random request records the
    /// resolved choice).
    pub template_id: TemplateId,
    pub categories: Vec<String>,
    pub rendered: String,
}

/// Renders the prompt for a category list.
///
/// Deterministic for a fixed template; `TemplateId::Random` resolves the
/// template uniformly from `rng` and records the resolved id. The rendered
/// string contains every category exactly once, comma-separated in input
/// order, plus the literal `<SEG>` marker.
pub fn render_prompt(
    categories: &[String],
    template_id: TemplateId,
    rng: &mut Rng,
) -> Result<PromptSpec> {
    if categories.is_empty() {
        return Err(contract("prompt needs at least one category"));
    }
    if let Some(empty) = categories.iter().find(|c| c.is_empty()) {
        return Err(contract(format_args!("empty category string {empty:?}")));
    }
    let resolved = match template_id {
        TemplateId::Random => {
            if rng.below(TEMPLATE_COUNT as u64) == 0 {
                TemplateId::Direct
            } else {
                TemplateId::Checklist
            }
        }
        other => other,
    };
    let joined = categories.join(", ");
    let rendered = match resolved {
        TemplateId::Direct => alloc::format!(
            "USER: Find the anomaly in this video. Anomaly types may contain {joined}. \
             ASSISTANT: Sure, it is {SEG_MARKER}."
        ),
        TemplateId::Checklist => alloc::format!(
            "USER: Inspect this video for abnormal events. Candidate anomaly types: {joined}. \
             Point out the anomaly. ASSISTANT: The anomaly is {SEG_MARKER}."
        ),
        TemplateId::Random => unreachable!(),
    };
    Ok(PromptSpec {
        template_id: resolved,
        categories: categories.to_vec(),
        rendered,
    })
}

/// The per-clip semantic feature returned by a provider.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SemanticFeature {
    pub vector: Vec<f64>,
    pub provider_id: String,
    pub prompt: PromptSpec,
}

/// Anything able to turn (visual tokens, prompt) into one semantic vector.
///
/// Implementations must be safe for concurrent read-only queries.
pub trait SemanticProvider: Send + Sync {
    /// Stable identifier recorded in outputs.
    fn id(&self) -> &str;

    /// Output dimensionality `D_s`.
    fn dim(&self) -> usize;

    /// Produces the semantic vector for one clip.
    fn extract(
        &self,
        sample_id: &str,
        visual: &CompressionResult,
        prompt: &PromptSpec,
    ) -> Result<Vec<f64>>;
}

/// Runs a provider and validates its output into a [`SemanticFeature`].
pub fn extract_semantic(
    provider: &dyn SemanticProvider,
    sample_id: &str,
    visual: &CompressionResult,
    prompt: &PromptSpec,
) -> Result<SemanticFeature> {
    let vector = provider.extract(sample_id, visual, prompt)?;
    if vector.len() != provider.dim() {
        return Err(CoreError::Provider(alloc::format!(
            "provider {} returned {} values, expected {}",
            provider.id(),
            vector.len(),
            provider.dim()
        )));
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::Provider(alloc::format!(
            "provider {} returned non-finite values",
            provider.id()
        )));
    }
    Ok(SemanticFeature {
        vector,
        provider_id: provider.id().to_string(),
        prompt: prompt.clone(),
    })
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the bytes of a string.
pub(crate) fn fnv1a64(text: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic stand-in provider responding to both inputs.
///
/// The vector is `M * mean(compressed tokens) + bag(categories)`:
///
/// * `M` is a seeded Gaussian mixing matrix `D_s x D_z`, so the output is
///   linear in the mean compressed token (Lipschitz with constant at most
///   the Frobenius norm of `M`, exposed via [`Self::lipschitz_bound`]);
/// * `bag` sums one seeded Gaussian embedding per category, keyed by the
///   FNV-1a hash of the category string; summation runs in hash order, so
///   permuting the category list reproduces the output bit-for-bit.
#[derive(Debug)]
pub struct SyntheticProvider {
    mix: Matrix,
    text_seed: u64,
    dim: usize,
}

impl SyntheticProvider {
    pub fn new(dim: usize, token_dim: usize, seed: u64) -> Self {
        let mut rng = Rng::from_seed(derive_subseed(seed, 0));
        let std = 1.0 / libm::sqrt(token_dim as f64);
        SyntheticProvider {
            mix: Matrix::gaussian(dim, token_dim, std, &mut rng),
            text_seed: derive_subseed(seed, 1),
            dim,
        }
    }

    /// Upper bound on the output change per unit change of the mean
    /// compressed token (Frobenius norm of the mixing matrix).
    pub fn lipschitz_bound(&self) -> f64 {
        libm::sqrt(self.mix.data().iter().map(|v| v * v).sum())
    }

    fn category_embedding(&self, category: &str) -> Vec<f64> {
        let mut rng = Rng::from_seed(derive_subseed(self.text_seed, fnv1a64(category)));
        let std = 1.0 / libm::sqrt(self.dim as f64);
        (0..self.dim).map(|_| rng.next_normal() * std).collect()
    }
}

impl SemanticProvider for SyntheticProvider {
    fn id(&self) -> &str {
        "synthetic-v1"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(
        &self,
        _sample_id: &str,
        visual: &CompressionResult,
        prompt: &PromptSpec,
    ) -> Result<Vec<f64>> {
        if visual.compressed.cols() != self.mix.cols() {
            return Err(CoreError::Provider(alloc::format!(
                "token dim {} does not match provider token dim {}",
                visual.compressed.cols(),
                self.mix.cols()
            )));
        }
        let mean = visual.compressed.column_mean();
        let mut out: Vec<f64> = (0..self.dim)
            .map(|d| {
                self.mix
                    .row(d)
                    .iter()
                    .zip(&mean)
                    .map(|(w, m)| w * m)
                    .sum::<f64>()
            })
            .collect();
        // hash-ordered bag: permutation of the category list cannot change
        // the summation order
        let mut keyed: Vec<(u64, &String)> =
            prompt.categories.iter().map(|c| (fnv1a64(c), c)).collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        for (_, cat) in keyed {
            for (o, e) in out.iter_mut().zip(self.category_embedding(cat)) {
                *o += e;
            }
        }
        Ok(out)
    }
}

/// Provider backed by a preloaded map of per-sample vectors.
///
/// A miss is an explicit error, never a silent fallback.
#[derive(Debug)]
pub struct FixtureProvider {
    vectors: BTreeMap<String, Vec<f64>>,
    dim: usize,
}

impl FixtureProvider {
    pub fn new(dim: usize) -> Self {
        FixtureProvider {
            vectors: BTreeMap::new(),
            dim,
        }
    }

    pub fn insert(&mut self, sample_id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(contract(format_args!(
                "fixture vector length {} does not match dim {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(contract("fixture vector contains non-finite values"));
        }
        self.vectors.insert(sample_id.into(), vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl SemanticProvider for FixtureProvider {
    fn id(&self) -> &str {
        "fixture-v1"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(
        &self,
        sample_id: &str,
        _visual: &CompressionResult,
        _prompt: &PromptSpec,
    ) -> Result<Vec<f64>> {
        self.vectors
            .get(sample_id)
            .cloned()
            .ok_or_else(|| CoreError::FixtureNotFound(sample_id.to_string()))
    }
}
