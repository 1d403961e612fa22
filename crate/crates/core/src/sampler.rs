//! Pseudo-anomaly dataset synthesis.
//!
//! Segmentation-style sources (visual data + per-frame object mask + one text
//! description) are relabeled into anomaly-detection samples: each sample
//! receives a category list mixing its genuine description with "irrelevant"
//! descriptions drawn from other samples, and is designated anomalous with
//! probability `p`. Anomalous samples keep the genuine description in the
//! list and get all-ones frame labels; normal samples carry only irrelevant
//! categories and all-zeros labels. The sampler only relabels - it never
//! touches pixels.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, CoreError, Result};
use crate::mask::RleMask;
use crate::rng::{derive_subseed, Rng};

/// A segmentation-style input sample.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SourceSample {
    pub id: String,
    /// Path to the frame sequence / image / raw video blob.
    pub visual_ref: String,
    /// Frame count; 1 for still images.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// One run-length mask per frame marking the described object.
    pub masks: Vec<RleMask>,
    /// Category or phrase describing the masked object. Nonempty.
    pub description: String,
}

impl SourceSample {
    /// Checks the per-sample invariants: nonempty description, one mask per
    /// frame, every mask matching the sample's spatial shape.
    pub fn validate(&self) -> Result<()> {
        if self.description.is_empty() {
            return Err(contract(format_args!(
                "sample {:?} has empty description",
                self.id
            )));
        }
        if self.frames == 0 {
            return Err(contract(format_args!(
                "sample {:?} has zero frames",
                self.id
            )));
        }
        if self.masks.len() != self.frames {
            return Err(contract(format_args!(
                "sample {:?} has {} masks for {} frames",
                self.id,
                self.masks.len(),
                self.frames
            )));
        }
        for m in &self.masks {
            if m.height != self.height || m.width != self.width {
                return Err(contract(format_args!(
                    "sample {:?} mask shape {}x{} does not match {}x{}",
                    self.id, m.height, m.width, self.height, self.width
                )));
            }
            m.validate()?;
        }
        Ok(())
    }
}

/// A relabeled sample ready for anomaly-detection training or scoring.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExposureSample {
    pub base: SourceSample,
    /// Categories to detect, pairwise distinct, in randomized order.
    pub categories: Vec<String>,
    /// Per-frame binary labels; all-ones iff the sample is anomalous.
    pub frame_labels: Vec<u8>,
    pub is_anomalous: bool,
    /// Number of categories actually used (`categories.len()`).
    pub k_e: usize,
}

impl ExposureSample {
    /// Supervision masks for the pixel head: the source masks for anomalous
    /// samples, all-zeros for normal samples (the prompted categories are
    /// absent from the content).
    pub fn pixel_targets(&self) -> Vec<RleMask> {
        if self.is_anomalous {
            self.base.masks.clone()
        } else {
            self.base
                .masks
                .iter()
                .map(|m| RleMask::zeros(m.height, m.width))
                .collect()
        }
    }
}

/// Which reading of the normal-sample branch to apply.
///
/// The two readings disagree on what categories a normal sample carries;
/// `Prose` (irrelevant categories only) is the default, `Equation` keeps just
/// the genuine description with negative labels. Both are exposed so either
/// behavior can be tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NormalBranch {
    #[default]
    Prose,
    Equation,
}

/// Sampler configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    /// Probability a sample is designated anomalous. In `[0, 1]`.
    pub anomaly_probability: f64,
    /// Upper bound of the per-sample category-count draw, inclusive.
    pub max_k_e: usize,
    pub seed: u64,
    pub normal_branch: NormalBranch,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            anomaly_probability: 0.5,
            max_k_e: 30,
            seed: 0,
            normal_branch: NormalBranch::Prose,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.anomaly_probability) {
            return Err(contract(format_args!(
                "anomaly probability {} outside [0, 1]",
                self.anomaly_probability
            )));
        }
        if self.max_k_e < 1 {
            return Err(contract("max_k_e must be at least 1"));
        }
        Ok(())
    }
}

/// Distinct descriptions usable as irrelevant categories for sample `i`:
/// every description from another sample that differs from sample `i`'s own,
/// deduplicated, in first-occurrence order.
fn irrelevant_pool(sources: &[SourceSample], i: usize) -> Vec<String> {
    let own = &sources[i].description;
    let mut pool: Vec<String> = Vec::new();
    for (j, s) in sources.iter().enumerate() {
        if j == i || s.description == *own {
            continue;
        }
        if !pool.iter().any(|d| d == &s.description) {
            pool.push(s.description.clone());
        }
    }
    pool
}

/// Draws `k_e - 1` distinct descriptions, none equal to sample `i`'s own,
/// uniformly without replacement from the other samples' descriptions.
pub fn sample_irrelevant(
    sources: &[SourceSample],
    i: usize,
    k_e: usize,
    rng: &mut Rng,
) -> Result<Vec<String>> {
    if i >= sources.len() {
        return Err(contract(format_args!("sample index {i} out of bounds")));
    }
    if k_e < 1 {
        return Err(contract("k_e must be at least 1"));
    }
    let needed = k_e - 1;
    let pool = irrelevant_pool(sources, i);
    if needed > pool.len() {
        return Err(CoreError::CategoryPoolExhausted {
            needed,
            available: pool.len(),
        });
    }
    Ok(rng.sample_without_replacement(&pool, needed))
}

/// Designates a sample anomalous (probability `p`) or normal, assembling its
/// category list and frame labels.
///
/// Anomalous: categories are the irrelevant list plus the genuine
/// description, shuffled so the genuine position carries no signal. Normal
/// under [`NormalBranch::Prose`]: the irrelevant list alone; under
/// [`NormalBranch::Equation`]: just the genuine description. Frame labels are
/// all-ones or all-zeros accordingly. `irrelevant` must not contain the
/// sample's own description.
pub fn designate(
    sample: &SourceSample,
    irrelevant: &[String],
    p: f64,
    branch: NormalBranch,
    rng: &mut Rng,
) -> ExposureSample {
    debug_assert!(
        irrelevant.iter().all(|c| c != &sample.description),
        "irrelevant categories must exclude the genuine description"
    );
    let anomalous = rng.next_f64() < p;
    assemble(sample, irrelevant.to_vec(), anomalous, branch, rng)
}

fn assemble(
    sample: &SourceSample,
    mut categories: Vec<String>,
    anomalous: bool,
    branch: NormalBranch,
    rng: &mut Rng,
) -> ExposureSample {
    let label: u8;
    if anomalous {
        categories.push(sample.description.clone());
        rng.shuffle(&mut categories);
        label = 1;
    } else {
        match branch {
            NormalBranch::Prose => rng.shuffle(&mut categories),
            NormalBranch::Equation => {
                categories = vec![sample.description.clone()];
            }
        }
        label = 0;
    }
    let k_e = categories.len();
    ExposureSample {
        base: sample.clone(),
        categories,
        frame_labels: vec![label; sample.frames],
        is_anomalous: anomalous,
        k_e,
    }
}

/// Relabels a whole source set into exposure samples.
///
/// Per sample `i` an independent sub-stream seeded with
/// `derive_subseed(config.seed, i)` drives, in order: the category-count draw
/// `K_E` uniform on `{1..max_k_e}`, the anomaly designation, the
/// without-replacement category draws, and the final shuffle. Anomalous
/// samples combine `K_E - 1` irrelevant categories with the genuine one;
/// prose-mode normal samples draw `K_E` irrelevant categories, so the
/// category-list length equals `K_E` in both branches and its marginal
/// distribution stays uniform.
pub fn build_exposure_dataset(
    sources: &[SourceSample],
    config: &SamplerConfig,
) -> Result<Vec<ExposureSample>> {
    config.validate()?;
    validate_sources(sources)?;
    // distinct descriptions in first-occurrence order, computed once; each
    // sample's pool is this list minus its own description
    let mut distinct: Vec<&String> = Vec::new();
    for s in sources {
        if !distinct.iter().any(|d| **d == s.description) {
            distinct.push(&s.description);
        }
    }
    let mut out = Vec::with_capacity(sources.len());
    for (i, sample) in sources.iter().enumerate() {
        let mut rng = Rng::from_seed(derive_subseed(config.seed, i as u64));
        let k_e = 1 + rng.below(config.max_k_e as u64) as usize;
        let anomalous = rng.next_f64() < config.anomaly_probability;
        let needed = match (anomalous, config.normal_branch) {
            (true, _) => k_e - 1,
            (false, NormalBranch::Prose) => k_e,
            (false, NormalBranch::Equation) => 0,
        };
        let pool: Vec<String> = distinct
            .iter()
            .filter(|d| ***d != sample.description)
            .map(|d| (*d).clone())
            .collect();
        if needed > pool.len() {
            return Err(CoreError::CategoryPoolExhausted {
                needed,
                available: pool.len(),
            });
        }
        let irrelevant = rng.sample_without_replacement(&pool, needed);
        out.push(assemble(
            sample,
            irrelevant,
            anomalous,
            config.normal_branch,
            &mut rng,
        ));
    }
    Ok(out)
}

fn validate_sources(sources: &[SourceSample]) -> Result<()> {
    if sources.len() < 2 {
        return Err(contract("need at least 2 source samples"));
    }
    let mut distinct: Vec<&str> = Vec::new();
    for (i, s) in sources.iter().enumerate() {
        s.validate()?;
        if sources[..i].iter().any(|prev| prev.id == s.id) {
            return Err(contract(format_args!("duplicate sample id {:?}", s.id)));
        }
        if !distinct.contains(&s.description.as_str()) {
            distinct.push(&s.description);
        }
    }
    if distinct.len() < 2 {
        return Err(contract("need at least 2 distinct descriptions"));
    }
    Ok(())
}
