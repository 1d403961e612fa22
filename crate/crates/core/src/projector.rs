//! Multi-scale semantic projector.
//!
//! Clip-level semantics are fused with frame-level detail in two steps.
//! First, per-frame cross-attention lets every category feature query the
//! frame's patch features (queries `W_c f_c`, keys and values `W_v f_v`,
//! output mapped by `W_o`), yielding a `T x K x D_a` stack of frame-level
//! category responses. Second, the clip semantic vector is mapped into the
//! same space, prepended to each frame's stack as one extra context row, and
//! a two-way transformer with learnable queries runs over (queries, context);
//! the updated queries are mean-pooled and linearly mapped into the decoder's
//! latent space, one prompt vector per frame.

use alloc::vec::Vec;

use crate::encoders::{CategoryFeatures, VisionFeatures};
use crate::error::{contract, Result};
use crate::numerics::{cross_attention, matmul, Matrix};
use crate::rng::{derive_subseed, Rng};
use crate::semantic::SemanticFeature;
use crate::twoway::TwoWayBlock;

/// Dimension and depth configuration.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProjectorDims {
    /// Text feature dim `D_t`.
    pub text_dim: usize,
    /// Vision feature dim `D_v`.
    pub vision_dim: usize,
    /// Cross-attention inner dim `D_l`.
    pub link_dim: usize,
    /// Projector hidden (context) dim `D_a`.
    pub hidden_dim: usize,
    /// Semantic vector dim `D_s`.
    pub semantic_dim: usize,
    /// Decoder latent dim `D_m`.
    pub prompt_dim: usize,
    /// Learnable query count `N_q`.
    pub query_count: usize,
    /// Two-way block depth `B`.
    pub depth: usize,
}

impl Default for ProjectorDims {
    fn default() -> Self {
        ProjectorDims {
            text_dim: 64,
            vision_dim: 64,
            link_dim: 64,
            hidden_dim: 64,
            semantic_dim: 256,
            prompt_dim: 64,
            query_count: 48,
            depth: 2,
        }
    }
}

impl ProjectorDims {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("text_dim", self.text_dim),
            ("vision_dim", self.vision_dim),
            ("link_dim", self.link_dim),
            ("hidden_dim", self.hidden_dim),
            ("semantic_dim", self.semantic_dim),
            ("prompt_dim", self.prompt_dim),
            ("query_count", self.query_count),
        ] {
            if v == 0 {
                return Err(contract(format_args!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// All projector parameters, seeded Gaussian with std `1/sqrt(fan_in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorWeights {
    pub dims: ProjectorDims,
    /// `D_t x D_l` category projection.
    pub w_c: Matrix,
    /// `D_v x D_l` vision projection.
    pub w_v: Matrix,
    /// `D_l x D_a` output projection of the frame cross-attention.
    pub w_o: Matrix,
    /// `D_s x D_a` map taking the clip semantic vector into context space.
    pub w_llm: Matrix,
    /// `N_q x D_m` learnable queries.
    pub queries: Matrix,
    pub blocks: Vec<TwoWayBlock>,
    /// `D_m x D_m` map applied to the pooled queries.
    pub output_map: Matrix,
}

impl ProjectorWeights {
    pub fn init(dims: &ProjectorDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = Rng::from_seed(derive_subseed(seed, 0));
        let g = |rows: usize, cols: usize, rng: &mut Rng| {
            Matrix::gaussian(rows, cols, 1.0 / libm::sqrt(rows as f64), rng)
        };
        let w_c = g(dims.text_dim, dims.link_dim, &mut rng);
        let w_v = g(dims.vision_dim, dims.link_dim, &mut rng);
        let w_o = g(dims.link_dim, dims.hidden_dim, &mut rng);
        let w_llm = g(dims.semantic_dim, dims.hidden_dim, &mut rng);
        let queries = Matrix::gaussian(
            dims.query_count,
            dims.prompt_dim,
            1.0 / libm::sqrt(dims.prompt_dim as f64),
            &mut rng,
        );
        let blocks = (0..dims.depth)
            .map(|_| TwoWayBlock::init(dims.prompt_dim, dims.hidden_dim, dims.prompt_dim, &mut rng))
            .collect();
        let output_map = g(dims.prompt_dim, dims.prompt_dim, &mut rng);
        Ok(ProjectorWeights {
            dims: dims.clone(),
            w_c,
            w_v,
            w_o,
            w_llm,
            queries,
            blocks,
            output_map,
        })
    }
}

/// Per-frame decoder prompts plus the retained intermediate stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedPrompt {
    /// `T x D_m`, one prompt vector per frame.
    pub frame_prompts: Matrix,
    /// The `T x K x D_a` frame cross-attention output, kept for inspection.
    pub frame_attention: Vec<Matrix>,
}

/// Frame-level cross-attention between category and vision features.
///
/// Per frame `t`: queries `f_c * W_c` (`K x D_l`), keys = values
/// `f_v[t] * W_v` (`N_p x D_l`), scale `1/sqrt(D_l)`, then the output
/// projection `W_o`. Returns one `K x D_a` matrix per frame.
pub fn frame_cross_attention(
    category: &CategoryFeatures,
    vision: &VisionFeatures,
    weights: &ProjectorWeights,
) -> Result<Vec<Matrix>> {
    if category.features.cols() != weights.dims.text_dim {
        return Err(contract(format_args!(
            "category dim {} does not match projector text dim {}",
            category.features.cols(),
            weights.dims.text_dim
        )));
    }
    if vision.dim() != weights.dims.vision_dim {
        return Err(contract(format_args!(
            "vision dim {} does not match projector vision dim {}",
            vision.dim(),
            weights.dims.vision_dim
        )));
    }
    let queries = matmul(&category.features, &weights.w_c)?;
    let scale = 1.0 / libm::sqrt(weights.dims.link_dim as f64);
    let mut out = Vec::with_capacity(vision.frame_count());
    for frame in &vision.frames {
        let kv = matmul(frame, &weights.w_v)?;
        let mixed = cross_attention(&queries, &kv, &kv, scale)?;
        out.push(matmul(&mixed, &weights.w_o)?);
    }
    Ok(out)
}

/// Fuses the clip semantic vector with the frame attention stack into one
/// prompt vector per frame.
///
/// Per frame: the semantic vector mapped by `W_llm` is prepended to the
/// frame's `K x D_a` stack as one extra context row, the two-way blocks run
/// over (learnable queries, context), and the updated queries are mean-pooled
/// and mapped by the output projection. Context rows carry no positional
/// terms, so the result does not depend on their order.
pub fn project(
    semantic: &SemanticFeature,
    frame_attention: &[Matrix],
    weights: &ProjectorWeights,
) -> Result<ProjectedPrompt> {
    if semantic.vector.len() != weights.dims.semantic_dim {
        return Err(contract(format_args!(
            "semantic dim {} does not match projector semantic dim {}",
            semantic.vector.len(),
            weights.dims.semantic_dim
        )));
    }
    let sem = Matrix::new(1, weights.dims.semantic_dim, semantic.vector.clone())?;
    let sem_row = matmul(&sem, &weights.w_llm)?;
    let frame_count = frame_attention.len();
    let mut prompts = Matrix::zeros(frame_count, weights.dims.prompt_dim);
    for (t, stack) in frame_attention.iter().enumerate() {
        if stack.cols() != weights.dims.hidden_dim {
            return Err(contract(format_args!(
                "frame stack dim {} does not match projector hidden dim {}",
                stack.cols(),
                weights.dims.hidden_dim
            )));
        }
        let mut context = Matrix::vstack(&[&sem_row, stack])?;
        let mut queries = weights.queries.clone();
        for block in &weights.blocks {
            block.forward(&mut queries, &mut context)?;
        }
        let pooled = Matrix::new(1, weights.dims.prompt_dim, queries.column_mean())?;
        let mapped = matmul(&pooled, &weights.output_map)?;
        for c in 0..weights.dims.prompt_dim {
            prompts.set(t, c, mapped.get(0, c));
        }
    }
    Ok(ProjectedPrompt {
        frame_prompts: prompts,
        frame_attention: frame_attention.to_vec(),
    })
}
