//! Two-way transformer blocks shared by the projector and the mask decoder.
//!
//! One block mutually updates a token stack and a context stack:
//! tokens attend to the context, tokens self-attend and pass through an MLP,
//! then the context attends back to the updated tokens. Layer normalization
//! (no affine parameters) precedes every sub-layer and each sub-layer adds a
//! residual. Context rows carry no positional terms, so nothing in a block
//! depends on context-row order.

use crate::error::Result;
use crate::numerics::{cross_attention, matmul, Matrix};
use crate::rng::Rng;

const LN_EPS: f64 = 1e-6;

/// Row-wise layer normalization without scale/shift parameters.
pub fn layer_norm(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    let d = m.cols() as f64;
    for r in 0..m.rows() {
        let row = m.row(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let inv = 1.0 / libm::sqrt(var + LN_EPS);
        for (c, &v) in row.iter().enumerate() {
            out.set(r, c, (v - mean) * inv);
        }
    }
    out
}

fn add_in_place(target: &mut Matrix, delta: &Matrix) {
    debug_assert_eq!(target.rows(), delta.rows());
    debug_assert_eq!(target.cols(), delta.cols());
    for r in 0..target.rows() {
        for c in 0..target.cols() {
            target.set(r, c, target.get(r, c) + delta.get(r, c));
        }
    }
}

/// Projection weights of one attention sub-layer. The head dimension is the
/// column count of `wq`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

impl AttentionWeights {
    /// Seeded init: every matrix is Gaussian with std `1/sqrt(fan_in)`.
    pub fn init(
        query_dim: usize,
        kv_dim: usize,
        head_dim: usize,
        out_dim: usize,
        rng: &mut Rng,
    ) -> Self {
        let g = |rows: usize, cols: usize, rng: &mut Rng| {
            Matrix::gaussian(rows, cols, 1.0 / libm::sqrt(rows as f64), rng)
        };
        AttentionWeights {
            wq: g(query_dim, head_dim, rng),
            wk: g(kv_dim, head_dim, rng),
            wv: g(kv_dim, head_dim, rng),
            wo: g(head_dim, out_dim, rng),
        }
    }

    /// Single-head scaled dot-product attention from `queries` over `context`.
    pub fn apply(&self, queries: &Matrix, context: &Matrix) -> Result<Matrix> {
        let q = matmul(queries, &self.wq)?;
        let k = matmul(context, &self.wk)?;
        let v = matmul(context, &self.wv)?;
        let mixed = cross_attention(&q, &k, &v, 1.0 / libm::sqrt(self.wq.cols() as f64))?;
        matmul(&mixed, &self.wo)
    }
}

/// Two-layer MLP with ReLU, hidden width twice the embedding width.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpWeights {
    pub w1: Matrix,
    pub w2: Matrix,
}

impl MlpWeights {
    pub fn init(dim: usize, rng: &mut Rng) -> Self {
        let hidden = 2 * dim;
        MlpWeights {
            w1: Matrix::gaussian(dim, hidden, 1.0 / libm::sqrt(dim as f64), rng),
            w2: Matrix::gaussian(hidden, dim, 1.0 / libm::sqrt(hidden as f64), rng),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut hidden = matmul(x, &self.w1)?;
        for r in 0..hidden.rows() {
            for c in 0..hidden.cols() {
                if hidden.get(r, c) < 0.0 {
                    hidden.set(r, c, 0.0);
                }
            }
        }
        matmul(&hidden, &self.w2)
    }
}

/// One mutual-update block over (tokens, context).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayBlock {
    pub token_to_context: AttentionWeights,
    pub token_self: AttentionWeights,
    pub mlp: MlpWeights,
    pub context_to_token: AttentionWeights,
}

impl TwoWayBlock {
    pub fn init(token_dim: usize, context_dim: usize, head_dim: usize, rng: &mut Rng) -> Self {
        TwoWayBlock {
            token_to_context: AttentionWeights::init(
                token_dim,
                context_dim,
                head_dim,
                token_dim,
                rng,
            ),
            token_self: AttentionWeights::init(token_dim, token_dim, head_dim, token_dim, rng),
            mlp: MlpWeights::init(token_dim, rng),
            context_to_token: AttentionWeights::init(
                context_dim,
                token_dim,
                head_dim,
                context_dim,
                rng,
            ),
        }
    }

    /// Applies the block, updating both stacks in place.
    pub fn forward(&self, tokens: &mut Matrix, context: &mut Matrix) -> Result<()> {
        let delta = self.token_to_context.apply(&layer_norm(tokens), context)?;
        add_in_place(tokens, &delta);

        let normed = layer_norm(tokens);
        let delta = self.token_self.apply(&normed, &normed)?;
        add_in_place(tokens, &delta);

        let delta = self.mlp.apply(&layer_norm(tokens))?;
        add_in_place(tokens, &delta);

        let delta = self.context_to_token.apply(&layer_norm(context), tokens)?;
        add_in_place(context, &delta);
        Ok(())
    }
}
