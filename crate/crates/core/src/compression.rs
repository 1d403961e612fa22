//! Training-free visual token compression.
//!
//! Background tokens dominate visual data and are mutually similar, so they
//! are found by local density estimation: the density of a token is `k`
//! divided by the summed squared distances to its `k` nearest neighbors. The
//! densest tokens form a background reference set; every token is assigned to
//! its nearest background token; and each background token aggregates its
//! assigned tokens with *reverse* attention (negated similarity scores), so
//! the aggregate emphasizes whatever is most dissimilar to the background.
//! `L_z` input tokens come out as `L_r = max(1, round(ratio * L_z))`
//! aggregated features.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};
use crate::numerics::{pairwise_sq_dist, row_softmax, top_k, Matrix};

/// Visual tokens plus optional spatio-temporal layout metadata.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenSet {
    pub tokens: Matrix,
    /// `(frames, rows, cols)` mapping token index to grid position; the
    /// product must equal the token count when present.
    pub grid_shape: Option<(usize, usize, usize)>,
}

impl TokenSet {
    pub fn new(tokens: Matrix) -> Self {
        TokenSet {
            tokens,
            grid_shape: None,
        }
    }

    pub fn with_grid(tokens: Matrix, grid: (usize, usize, usize)) -> Result<Self> {
        let (t, r, c) = grid;
        if t * r * c != tokens.rows() {
            return Err(contract(format_args!(
                "grid {t}x{r}x{c} does not cover {} tokens",
                tokens.rows()
            )));
        }
        Ok(TokenSet {
            tokens,
            grid_shape: Some(grid),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }
}

/// Compression knobs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompressionConfig {
    /// Neighbor count for density estimation; must satisfy `1 <= k <= L_z - 1`.
    pub k: usize,
    /// Kept fraction of tokens, in `(0, 1]`.
    pub ratio: f64,
    /// Guard for zero distance sums caused by duplicate tokens.
    pub epsilon: f64,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        CompressionConfig {
            k: 8,
            ratio: 0.2,
            epsilon: 1e-12,
        }
    }
}

impl CompressionConfig {
    pub fn validate(&self, token_count: usize) -> Result<()> {
        if self.k < 1 || self.k + 1 > token_count {
            return Err(contract(format_args!(
                "k = {} must satisfy 1 <= k <= {} - 1",
                self.k, token_count
            )));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(contract(format_args!(
                "ratio {} outside (0, 1]",
                self.ratio
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(contract("epsilon must be positive"));
        }
        Ok(())
    }
}

/// Output of one compression pass.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CompressionResult {
    /// Aggregated features, `L_r x D_z`.
    pub compressed: Matrix,
    /// Indices into the input token set chosen as background references.
    pub background_indices: Vec<usize>,
    /// For each input token, the position (0-based within
    /// `background_indices`) of the background token it was assigned to.
    pub assignment: Vec<usize>,
    /// Per-token local density.
    pub densities: Vec<f64>,
}

/// Kept token count for a given ratio: `max(1, round(ratio * len))` with
/// round-half-away-from-zero.
pub fn retained_count(token_count: usize, ratio: f64) -> usize {
    let r = libm::round(ratio * token_count as f64) as usize;
    r.max(1).min(token_count)
}

/// Local density of every token: `k / sum(squared distance to the k nearest
/// other tokens)`. The token itself is excluded from its neighborhood. When
/// duplicates drive the sum below `epsilon`, the density saturates at
/// `k / epsilon`.
pub fn local_density(tokens: &TokenSet, k: usize, epsilon: f64) -> Result<Vec<f64>> {
    let n = tokens.len();
    if k + 1 > n {
        return Err(contract(format_args!(
            "k = {k} must be at most token count {n} - 1"
        )));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(contract("epsilon must be positive"));
    }
    let dists = pairwise_sq_dist(&tokens.tokens, &tokens.tokens)?;
    let mut out = Vec::with_capacity(n);
    let mut scratch: Vec<f64> = Vec::with_capacity(n - 1);
    for i in 0..n {
        scratch.clear();
        for j in 0..n {
            if j != i {
                scratch.push(dists.get(i, j));
            }
        }
        scratch.sort_unstable_by(f64::total_cmp);
        let sum: f64 = scratch[..k].iter().sum();
        let denom = if sum < epsilon { epsilon } else { sum };
        out.push(k as f64 / denom);
    }
    Ok(out)
}

/// Indices of the densest tokens, retained-count many, ties broken toward
/// the lower index.
pub fn select_background(densities: &[f64], ratio: f64) -> Result<Vec<usize>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(contract(format_args!("ratio {ratio} outside (0, 1]")));
    }
    if densities.iter().any(|d| !d.is_finite()) {
        return Err(contract("densities must be finite after the epsilon guard"));
    }
    top_k(densities, retained_count(densities.len(), ratio))
}

/// Assigns every token to its nearest background token (position within
/// `background_indices`); distance ties go to the lowest position.
pub fn assign_to_background(tokens: &TokenSet, background_indices: &[usize]) -> Result<Vec<usize>> {
    if background_indices.is_empty() {
        return Err(contract("background set must be nonempty"));
    }
    let background = tokens.tokens.select_rows(background_indices)?;
    let dists = pairwise_sq_dist(&tokens.tokens, &background)?;
    let mut assignment = Vec::with_capacity(tokens.len());
    for i in 0..tokens.len() {
        let mut best = 0usize;
        let mut best_d = dists.get(i, 0);
        for b in 1..background_indices.len() {
            let d = dists.get(i, b);
            if d < best_d {
                best_d = d;
                best = b;
            }
        }
        assignment.push(best);
    }
    Ok(assignment)
}

/// Aggregates each background token's assigned group with reverse attention:
/// scores are the *negated* scaled dot products between the background token
/// and its group, so the most dissimilar group members get the largest
/// weights. Background tokens whose group is empty (possible only when
/// duplicate tokens steal their members) pass through unchanged, keeping the
/// output row count at `L_r`.
pub fn reverse_attend(
    tokens: &TokenSet,
    background_indices: &[usize],
    assignment: &[usize],
) -> Result<Matrix> {
    if assignment.len() != tokens.len() {
        return Err(contract(format_args!(
            "assignment length {} does not cover {} tokens",
            assignment.len(),
            tokens.len()
        )));
    }
    if let Some(&bad) = assignment.iter().find(|&&a| a >= background_indices.len()) {
        return Err(contract(format_args!(
            "assignment value {bad} outside background positions"
        )));
    }
    let dim = tokens.dim();
    let scale = 1.0 / libm::sqrt(dim as f64);
    let mut rows: Vec<Matrix> = Vec::with_capacity(background_indices.len());
    for (pos, &bg_idx) in background_indices.iter().enumerate() {
        let members: Vec<usize> = assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == pos)
            .map(|(j, _)| j)
            .collect();
        if members.is_empty() {
            rows.push(tokens.tokens.select_rows(&[bg_idx])?);
            continue;
        }
        let group = tokens.tokens.select_rows(&members)?;
        let bg = tokens.tokens.select_rows(&[bg_idx])?;
        // scores[j] = -(bg . group_j) / sqrt(D_z)
        let mut scores = Matrix::zeros(1, members.len());
        for (j, m) in members.iter().enumerate() {
            let dot: f64 = bg
                .row(0)
                .iter()
                .zip(tokens.tokens.row(*m))
                .map(|(a, b)| a * b)
                .sum();
            scores.set(0, j, -dot);
        }
        let weights = row_softmax(&scores, scale);
        let mut agg = vec![0.0; dim];
        for (j, _) in members.iter().enumerate() {
            let w = weights.get(0, j);
            for (acc, &g) in agg.iter_mut().zip(group.row(j)) {
                *acc += w * g;
            }
        }
        rows.push(Matrix::new(1, dim, agg)?);
    }
    let refs: Vec<&Matrix> = rows.iter().collect();
    Matrix::vstack(&refs)
}

/// Full compression pass: density estimation, background selection, nearest
/// background assignment, reverse attention.
pub fn compress(tokens: &TokenSet, config: &CompressionConfig) -> Result<CompressionResult> {
    config.validate(tokens.len())?;
    let densities = local_density(tokens, config.k, config.epsilon)?;
    let background_indices = select_background(&densities, config.ratio)?;
    let assignment = assign_to_background(tokens, &background_indices)?;
    let compressed = reverse_attend(tokens, &background_indices, &assignment)?;
    Ok(CompressionResult {
        compressed,
        background_indices,
        assignment,
        densities,
    })
}
