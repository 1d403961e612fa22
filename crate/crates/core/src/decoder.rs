//! Multi-level mask decoder and segmentation losses.
//!
//! Per frame, a three-token stack (mask token, object-score token, the
//! frame's projected prompt) runs two-way blocks against the frame's patch
//! embeddings. Pixel logits are the inner products between the updated mask
//! token and the updated patch embeddings (both mapped into a shared pixel
//! space), bilinearly upsampled to the score grid; the frame logit comes from
//! a linear head on the updated object-score token and doubles as the
//! frame-level anomaly score. Losses are sigmoid focal + dice on pixels and
//! binary cross-entropy on the frame logit, all with closed-form gradients.

use alloc::vec::Vec;

use crate::encoders::VisionFeatures;
use crate::error::{contract, Result};
use crate::numerics::{matmul, Matrix};
use crate::projector::ProjectedPrompt;
use crate::rng::{derive_subseed, Rng};
use crate::twoway::TwoWayBlock;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))` without overflow for large negative `x`.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

/// Decoder dimensions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecoderDims {
    /// Latent dim `D_m`, shared with the projector prompt.
    pub prompt_dim: usize,
    /// Incoming vision feature dim `D_v`.
    pub vision_dim: usize,
    /// Shared pixel-embedding dim used for the logit inner product.
    pub pixel_dim: usize,
    /// Two-way block depth.
    pub depth: usize,
    /// Upsampling factor from the patch grid to the score grid.
    pub upsample: usize,
}

impl Default for DecoderDims {
    fn default() -> Self {
        DecoderDims {
            prompt_dim: 64,
            vision_dim: 64,
            pixel_dim: 32,
            depth: 2,
            upsample: 4,
        }
    }
}

impl DecoderDims {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("prompt_dim", self.prompt_dim),
            ("vision_dim", self.vision_dim),
            ("pixel_dim", self.pixel_dim),
            ("upsample", self.upsample),
        ] {
            if v == 0 {
                return Err(contract(format_args!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Decoder parameters, seeded Gaussian except the zero object bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub dims: DecoderDims,
    /// `D_v x D_m` projection of patch features into the latent space.
    pub input_proj: Matrix,
    /// `1 x D_m` learned mask token.
    pub mask_token: Matrix,
    /// `1 x D_m` learned object-score token.
    pub object_token: Matrix,
    pub blocks: Vec<TwoWayBlock>,
    /// `D_m x pixel_dim` map shared by the mask token and patch embeddings.
    pub pixel_map: Matrix,
    /// `D_m x 1` object head.
    pub object_head: Matrix,
    pub object_bias: f64,
}

impl DecoderWeights {
    pub fn init(dims: &DecoderDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = Rng::from_seed(derive_subseed(seed, 0));
        let g = |rows: usize, cols: usize, rng: &mut Rng| {
            Matrix::gaussian(rows, cols, 1.0 / libm::sqrt(rows as f64), rng)
        };
        let input_proj = g(dims.vision_dim, dims.prompt_dim, &mut rng);
        let mask_token = Matrix::gaussian(1, dims.prompt_dim, 1.0, &mut rng);
        let object_token = Matrix::gaussian(1, dims.prompt_dim, 1.0, &mut rng);
        let blocks = (0..dims.depth)
            .map(|_| TwoWayBlock::init(dims.prompt_dim, dims.prompt_dim, dims.prompt_dim, &mut rng))
            .collect();
        let pixel_map = g(dims.prompt_dim, dims.pixel_dim, &mut rng);
        let object_head = g(dims.prompt_dim, 1, &mut rng);
        Ok(DecoderWeights {
            dims: dims.clone(),
            input_proj,
            mask_token,
            object_token,
            blocks,
            pixel_map,
            object_head,
            object_bias: 0.0,
        })
    }

    /// All-zero weights with a chosen object bias; degenerate preset used in
    /// tests.
    pub fn zeroed(dims: &DecoderDims, object_bias: f64) -> Result<Self> {
        let mut w = DecoderWeights::init(dims, 0)?;
        let zero = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        w.input_proj = zero(&w.input_proj);
        w.mask_token = zero(&w.mask_token);
        w.object_token = zero(&w.object_token);
        w.pixel_map = zero(&w.pixel_map);
        w.object_head = zero(&w.object_head);
        for b in &mut w.blocks {
            for attn in [
                &mut b.token_to_context,
                &mut b.token_self,
                &mut b.context_to_token,
            ] {
                attn.wq = zero(&attn.wq);
                attn.wk = zero(&attn.wk);
                attn.wv = zero(&attn.wv);
                attn.wo = zero(&attn.wo);
            }
            b.mlp.w1 = zero(&b.mlp.w1);
            b.mlp.w2 = zero(&b.mlp.w2);
        }
        w.object_bias = object_bias;
        Ok(w)
    }
}

/// Frame- and pixel-level scores with retained logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBundle {
    /// Per-frame scores in `[0, 1]`.
    pub frame_scores: Vec<f64>,
    /// Per-frame pre-sigmoid logits.
    pub frame_logits: Vec<f64>,
    /// Per-frame score maps on the upsampled grid, values in `[0, 1]`.
    pub pixel_scores: Vec<Matrix>,
    /// Per-frame pre-sigmoid pixel logits on the upsampled grid.
    pub pixel_logits: Vec<Matrix>,
    /// Per-frame pre-upsample logits on the patch grid, kept for inspection.
    pub patch_logits: Vec<Matrix>,
}

impl ScoreBundle {
    pub fn frame_count(&self) -> usize {
        self.frame_scores.len()
    }
}

/// Bilinear upsampling by an integer factor (half-pixel-center convention,
/// edges clamped).
pub fn bilinear_upsample(src: &Matrix, factor: usize) -> Matrix {
    if factor == 1 {
        return src.clone();
    }
    let (h, w) = (src.rows(), src.cols());
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Matrix::zeros(oh, ow);
    let f = factor as f64;
    for i in 0..oh {
        let sy = (i as f64 + 0.5) / f - 0.5;
        let y0 = libm::floor(sy);
        let wy = sy - y0;
        let y0c = (y0.max(0.0) as usize).min(h - 1);
        let y1c = ((y0 + 1.0).max(0.0) as usize).min(h - 1);
        for j in 0..ow {
            let sx = (j as f64 + 0.5) / f - 0.5;
            let x0 = libm::floor(sx);
            let wx = sx - x0;
            let x0c = (x0.max(0.0) as usize).min(w - 1);
            let x1c = ((x0 + 1.0).max(0.0) as usize).min(w - 1);
            let top = src.get(y0c, x0c) * (1.0 - wx) + src.get(y0c, x1c) * wx;
            let bot = src.get(y1c, x0c) * (1.0 - wx) + src.get(y1c, x1c) * wx;
            out.set(i, j, top * (1.0 - wy) + bot * wy);
        }
    }
    out
}

/// Runs the decoder over every frame.
pub fn decode(
    prompt: &ProjectedPrompt,
    vision: &VisionFeatures,
    weights: &DecoderWeights,
) -> Result<ScoreBundle> {
    let frame_count = vision.frame_count();
    if prompt.frame_prompts.rows() != frame_count {
        return Err(contract(format_args!(
            "prompt covers {} frames, vision has {frame_count}",
            prompt.frame_prompts.rows()
        )));
    }
    if prompt.frame_prompts.cols() != weights.dims.prompt_dim {
        return Err(contract(format_args!(
            "prompt dim {} does not match decoder latent dim {}",
            prompt.frame_prompts.cols(),
            weights.dims.prompt_dim
        )));
    }
    if vision.dim() != weights.dims.vision_dim {
        return Err(contract(format_args!(
            "vision dim {} does not match decoder vision dim {}",
            vision.dim(),
            weights.dims.vision_dim
        )));
    }
    let (grid_rows, grid_cols) = vision.patch_grid;
    let mut bundle = ScoreBundle {
        frame_scores: Vec::with_capacity(frame_count),
        frame_logits: Vec::with_capacity(frame_count),
        pixel_scores: Vec::with_capacity(frame_count),
        pixel_logits: Vec::with_capacity(frame_count),
        patch_logits: Vec::with_capacity(frame_count),
    };
    for t in 0..frame_count {
        let prompt_row = prompt.frame_prompts.select_rows(&[t])?;
        let mut tokens =
            Matrix::vstack(&[&weights.mask_token, &weights.object_token, &prompt_row])?;
        let mut patches = matmul(&vision.frames[t], &weights.input_proj)?;
        for block in &weights.blocks {
            block.forward(&mut tokens, &mut patches)?;
        }
        // pixel logits: inner products in the shared pixel space
        let mask_embed = matmul(&tokens.select_rows(&[0])?, &weights.pixel_map)?;
        let patch_embed = matmul(&patches, &weights.pixel_map)?;
        let mut patch_logits = Matrix::zeros(grid_rows, grid_cols);
        for p in 0..patch_embed.rows() {
            let logit: f64 = patch_embed
                .row(p)
                .iter()
                .zip(mask_embed.row(0))
                .map(|(a, b)| a * b)
                .sum();
            patch_logits.set(p / grid_cols, p % grid_cols, logit);
        }
        let pixel_logits = bilinear_upsample(&patch_logits, weights.dims.upsample);
        let pixel_scores = Matrix::new(
            pixel_logits.rows(),
            pixel_logits.cols(),
            pixel_logits.data().iter().map(|&v| sigmoid(v)).collect(),
        )?;
        let frame_logit: f64 = tokens
            .select_rows(&[1])?
            .row(0)
            .iter()
            .zip(weights.object_head.transpose().row(0))
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + weights.object_bias;
        bundle.frame_scores.push(sigmoid(frame_logit));
        bundle.frame_logits.push(frame_logit);
        bundle.pixel_scores.push(pixel_scores);
        bundle.pixel_logits.push(pixel_logits);
        bundle.patch_logits.push(patch_logits);
    }
    Ok(bundle)
}

/// Loss weighting.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossConfig {
    pub lambda_seg: f64,
    pub lambda_focal: f64,
    pub lambda_dice: f64,
    pub lambda_obj: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        // pixel terms follow the 20:1 focal:dice weighting of the
        // segmentation recipe this decoder mirrors
        LossConfig {
            lambda_seg: 1.0,
            lambda_focal: 20.0,
            lambda_dice: 1.0,
            lambda_obj: 1.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_seg", self.lambda_seg),
            ("lambda_focal", self.lambda_focal),
            ("lambda_dice", self.lambda_dice),
            ("lambda_obj", self.lambda_obj),
            ("focal_gamma", self.focal_gamma),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(contract(format_args!("{name} must be finite and >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.focal_alpha) {
            return Err(contract("focal_alpha must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Mean sigmoid focal loss and its gradient w.r.t. the logits.
pub fn focal_loss(
    logits: &[f64],
    targets: &[u8],
    alpha: f64,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() {
        return Err(contract(format_args!(
            "focal loss shape mismatch: {} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if logits.is_empty() {
        return Err(contract("focal loss on empty input"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(targets) {
        let p = sigmoid(x);
        if y == 1 {
            let log_p = log_sigmoid(x);
            let one_minus_p_pow = libm::pow(1.0 - p, gamma);
            loss += -alpha * one_minus_p_pow * log_p;
            grad.push(alpha * one_minus_p_pow * (gamma * p * log_p - (1.0 - p)) / n);
        } else {
            let log_1mp = log_sigmoid(-x);
            let p_pow = libm::pow(p, gamma);
            loss += -(1.0 - alpha) * p_pow * log_1mp;
            grad.push((1.0 - alpha) * p_pow * (-gamma * (1.0 - p) * log_1mp + p) / n);
        }
    }
    Ok((loss / n, grad))
}

/// Dice loss with smoothing 1 and its gradient w.r.t. the logits.
///
/// Probabilities are the sigmoids of the supplied logits; the gradient chains
/// through the sigmoid.
pub fn dice_loss(logits: &[f64], targets: &[u8]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() {
        return Err(contract(format_args!(
            "dice loss shape mismatch: {} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if logits.is_empty() {
        return Err(contract("dice loss on empty input"));
    }
    const SMOOTH: f64 = 1.0;
    let probs: Vec<f64> = logits.iter().map(|&x| sigmoid(x)).collect();
    let sum_p: f64 = probs.iter().sum();
    let sum_t: f64 = targets.iter().map(|&t| t as f64).sum();
    let sum_pt: f64 = probs.iter().zip(targets).map(|(&p, &t)| p * t as f64).sum();
    let denom = sum_p + sum_t + SMOOTH;
    let numer = 2.0 * sum_pt + SMOOTH;
    let loss = 1.0 - numer / denom;
    let grad = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let dl_dp = -(2.0 * t as f64 * denom - numer) / (denom * denom);
            dl_dp * p * (1.0 - p)
        })
        .collect();
    Ok((loss, grad))
}

/// Mean binary cross-entropy on logits with its gradient.
pub fn bce_loss(logits: &[f64], targets: &[u8]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != targets.len() {
        return Err(contract(format_args!(
            "bce shape mismatch: {} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    if logits.is_empty() {
        return Err(contract("bce on empty input"));
    }
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &y) in logits.iter().zip(targets) {
        let yf = y as f64;
        // softplus(x) - x*y, stable form
        loss += x.max(0.0) - x * yf + libm::log1p(libm::exp(-x.abs()));
        grad.push((sigmoid(x) - yf) / n);
    }
    Ok((loss / n, grad))
}

/// Combined segmentation loss over one sample's score bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct SegLossOutput {
    pub total: f64,
    pub focal_term: f64,
    pub dice_term: f64,
    pub object_term: f64,
    /// Gradient w.r.t. the frame logits.
    pub frame_grad: Vec<f64>,
    /// Gradient w.r.t. the pixel logits, frame-major then row-major.
    pub pixel_grad: Vec<f64>,
}

/// `lambda_seg * (lambda_focal * focal(pixels) + lambda_dice * dice(pixels)
/// + lambda_obj * bce(frame logits))`, with gradients for every logit.
///
/// `pixel_targets` must match the bundle's upsampled pixel grid exactly, one
/// flat row-major mask per frame; `frame_targets` one label per frame.
pub fn seg_loss(
    bundle: &ScoreBundle,
    frame_targets: &[u8],
    pixel_targets: &[Vec<u8>],
    cfg: &LossConfig,
) -> Result<SegLossOutput> {
    cfg.validate()?;
    let frames = bundle.frame_count();
    if frame_targets.len() != frames {
        return Err(contract(format_args!(
            "{} frame targets for {frames} frames",
            frame_targets.len()
        )));
    }
    if pixel_targets.len() != frames {
        return Err(contract(format_args!(
            "{} pixel target frames for {frames} frames",
            pixel_targets.len()
        )));
    }
    let mut flat_logits: Vec<f64> = Vec::new();
    let mut flat_targets: Vec<u8> = Vec::new();
    for (t, target) in pixel_targets.iter().enumerate() {
        let grid = &bundle.pixel_logits[t];
        if target.len() != grid.rows() * grid.cols() {
            return Err(contract(format_args!(
                "frame {t}: pixel target length {} does not match {}x{} grid",
                target.len(),
                grid.rows(),
                grid.cols()
            )));
        }
        if target.iter().any(|&v| v > 1) {
            return Err(contract("pixel targets must be binary"));
        }
        flat_logits.extend_from_slice(grid.data());
        flat_targets.extend_from_slice(target);
    }
    let (focal_term, focal_grad) = focal_loss(
        &flat_logits,
        &flat_targets,
        cfg.focal_alpha,
        cfg.focal_gamma,
    )?;
    let (dice_term, dice_grad) = dice_loss(&flat_logits, &flat_targets)?;
    let (object_term, obj_grad) = bce_loss(&bundle.frame_logits, frame_targets)?;

    let pixel_scale_focal = cfg.lambda_seg * cfg.lambda_focal;
    let pixel_scale_dice = cfg.lambda_seg * cfg.lambda_dice;
    let pixel_grad: Vec<f64> = focal_grad
        .iter()
        .zip(&dice_grad)
        .map(|(f, d)| pixel_scale_focal * f + pixel_scale_dice * d)
        .collect();
    let frame_grad: Vec<f64> = obj_grad
        .iter()
        .map(|g| cfg.lambda_seg * cfg.lambda_obj * g)
        .collect();
    let total = cfg.lambda_seg
        * (cfg.lambda_focal * focal_term
            + cfg.lambda_dice * dice_term
            + cfg.lambda_obj * object_term);
    Ok(SegLossOutput {
        total,
        focal_term,
        dice_term,
        object_term,
        frame_grad,
        pixel_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projector::ProjectedPrompt;

    fn vision_from(frames: Vec<Matrix>, grid: (usize, usize)) -> VisionFeatures {
        VisionFeatures {
            frames,
            patch_grid: grid,
        }
    }

    fn prompt_from(m: Matrix) -> ProjectedPrompt {
        ProjectedPrompt {
            frame_prompts: m,
            frame_attention: Vec::new(),
        }
    }

    fn small_dims() -> DecoderDims {
        DecoderDims {
            prompt_dim: 8,
            vision_dim: 6,
            pixel_dim: 4,
            depth: 2,
            upsample: 2,
        }
    }

    fn random_inputs(seed: u64, frames: usize) -> (ProjectedPrompt, VisionFeatures) {
        let mut rng = Rng::from_seed(seed);
        let prompt = prompt_from(Matrix::gaussian(frames, 8, 1.0, &mut rng));
        let vision = vision_from(
            (0..frames)
                .map(|_| Matrix::gaussian(6, 6, 1.0, &mut rng))
                .collect(),
            (2, 3),
        );
        (prompt, vision)
    }

    #[test]
    fn zero_weights_give_bias_scores_and_uniform_pixels() {
        let dims = small_dims();
        let w = DecoderWeights::zeroed(&dims, 1.25).unwrap();
        let (prompt, vision) = random_inputs(3, 2);
        let bundle = decode(&prompt, &vision, &w).unwrap();
        for t in 0..2 {
            assert!((bundle.frame_scores[t] - sigmoid(1.25)).abs() < 1e-15);
            for v in bundle.pixel_scores[t].data() {
                assert_eq!(*v, 0.5);
            }
        }
    }

    #[test]
    fn identical_frames_identical_outputs() {
        let dims = small_dims();
        let w = DecoderWeights::init(&dims, 7).unwrap();
        let mut rng = Rng::from_seed(1);
        let row = Matrix::gaussian(1, 8, 1.0, &mut rng);
        let prompt = prompt_from(Matrix::vstack(&[&row, &row]).unwrap());
        let frame = Matrix::gaussian(6, 6, 1.0, &mut rng);
        let vision = vision_from(alloc::vec![frame.clone(), frame], (2, 3));
        let bundle = decode(&prompt, &vision, &w).unwrap();
        assert_eq!(bundle.frame_scores[0], bundle.frame_scores[1]);
        assert_eq!(bundle.pixel_scores[0], bundle.pixel_scores[1]);
    }

    #[test]
    fn patch_logits_match_dot_product_oracle() {
        let dims = small_dims();
        let w = DecoderWeights::init(&dims, 21).unwrap();
        let (prompt, vision) = random_inputs(9, 1);
        let bundle = decode(&prompt, &vision, &w).unwrap();

        // replay the forward pass up to the logits, then check every patch
        // logit against an explicit scalar-loop dot product
        let mut tokens = Matrix::vstack(&[
            &w.mask_token,
            &w.object_token,
            &prompt.frame_prompts.select_rows(&[0]).unwrap(),
        ])
        .unwrap();
        let mut patches = matmul(&vision.frames[0], &w.input_proj).unwrap();
        for block in &w.blocks {
            block.forward(&mut tokens, &mut patches).unwrap();
        }
        let mask_embed = matmul(&tokens.select_rows(&[0]).unwrap(), &w.pixel_map).unwrap();
        let patch_embed = matmul(&patches, &w.pixel_map).unwrap();
        for p in 0..6 {
            let mut want = 0.0;
            for c in 0..dims.pixel_dim {
                want += patch_embed.get(p, c) * mask_embed.get(0, c);
            }
            let got = bundle.patch_logits[0].get(p / 3, p % 3);
            assert!((got - want).abs() < 1e-10, "patch {p}: {got} vs {want}");
        }
    }

    #[test]
    fn frame_permutation_equivariance_is_exact() {
        let dims = small_dims();
        let w = DecoderWeights::init(&dims, 5).unwrap();
        let (prompt, vision) = random_inputs(13, 4);
        let base = decode(&prompt, &vision, &w).unwrap();

        let perm = [2usize, 0, 3, 1];
        let perm_prompt = prompt_from(prompt.frame_prompts.select_rows(&perm).unwrap());
        let perm_vision = vision_from(
            perm.iter().map(|&i| vision.frames[i].clone()).collect(),
            vision.patch_grid,
        );
        let permuted = decode(&perm_prompt, &perm_vision, &w).unwrap();
        for (new_t, &old_t) in perm.iter().enumerate() {
            assert_eq!(permuted.frame_scores[new_t], base.frame_scores[old_t]);
            assert_eq!(permuted.pixel_scores[new_t], base.pixel_scores[old_t]);
        }
    }

    #[test]
    fn scores_live_in_unit_interval() {
        let dims = small_dims();
        for seed in 0..30 {
            let w = DecoderWeights::init(&dims, seed).unwrap();
            let (prompt, vision) = random_inputs(seed ^ 0xff, 3);
            let bundle = decode(&prompt, &vision, &w).unwrap();
            for t in 0..3 {
                assert!((0.0..=1.0).contains(&bundle.frame_scores[t]));
                assert!(bundle.frame_logits[t].is_finite());
                assert!(bundle.pixel_scores[t]
                    .data()
                    .iter()
                    .all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn upsampled_grid_shape_follows_factor() {
        let dims = DecoderDims {
            upsample: 4,
            ..small_dims()
        };
        let w = DecoderWeights::init(&dims, 2).unwrap();
        let (prompt, vision) = random_inputs(4, 1);
        let bundle = decode(&prompt, &vision, &w).unwrap();
        assert_eq!(bundle.pixel_scores[0].rows(), 2 * 4);
        assert_eq!(bundle.pixel_scores[0].cols(), 3 * 4);
    }

    #[test]
    fn bilinear_upsample_hand_case() {
        let src = Matrix::new(2, 2, alloc::vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let up = bilinear_upsample(&src, 2);
        assert_eq!(up.rows(), 4);
        assert_eq!(up.get(0, 0), 0.0);
        assert_eq!(up.get(3, 3), 3.0);
        assert!((up.get(1, 1) - 0.75).abs() < 1e-12);
        assert!((up.get(2, 2) - 2.25).abs() < 1e-12);
        // constant map stays constant
        let c = Matrix::new(2, 3, alloc::vec![0.7; 6]).unwrap();
        assert!(bilinear_upsample(&c, 3)
            .data()
            .iter()
            .all(|&v| (v - 0.7).abs() < 1e-12));
    }

    // ---- losses ----

    fn fd_check(logits: &[f64], grad: &[f64], eval: impl Fn(&[f64]) -> f64, rel_tol: f64) {
        let h = 1e-5;
        for i in 0..logits.len() {
            let mut plus = logits.to_vec();
            plus[i] += h;
            let mut minus = logits.to_vec();
            minus[i] -= h;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let denom = grad[i].abs().max(1e-7);
            assert!(
                (fd - grad[i]).abs() / denom < rel_tol,
                "index {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }

    #[test]
    fn focal_perfect_prediction_limit() {
        let (loss, grad) = focal_loss(&[40.0, 45.0], &[1, 1], 0.25, 2.0).unwrap();
        assert!(loss < 1e-15, "loss {loss}");
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn focal_gamma_zero_is_half_bce_at_alpha_half() {
        let logits = [0.3, -1.2, 2.0, -0.4];
        let targets = [1u8, 0, 0, 1];
        let (focal, _) = focal_loss(&logits, &targets, 0.5, 0.0).unwrap();
        // BCE oracle from the definition
        let mut bce = 0.0;
        for (&x, &y) in logits.iter().zip(&targets) {
            let p = 1.0 / (1.0 + libm::exp(-x));
            bce += if y == 1 {
                -libm::log(p)
            } else {
                -libm::log(1.0 - p)
            };
        }
        bce /= logits.len() as f64;
        assert!(
            (focal - 0.5 * bce).abs() < 1e-12,
            "{focal} vs {}",
            0.5 * bce
        );
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        for seed in 0..25 {
            let mut rng = Rng::from_seed(seed);
            let logits: Vec<f64> = (0..16).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
            let targets: Vec<u8> = (0..16).map(|_| (rng.next_u64() & 1) as u8).collect();
            let alpha = 0.25;
            let gamma = 2.0;
            let (_, grad) = focal_loss(&logits, &targets, alpha, gamma).unwrap();
            fd_check(
                &logits,
                &grad,
                |l| focal_loss(l, &targets, alpha, gamma).unwrap().0,
                1e-4,
            );
        }
    }

    #[test]
    fn dice_perfect_overlap_is_almost_zero() {
        // saturated logits make the probabilities exactly binary in f64
        let targets = [1u8, 0, 1, 1, 0];
        let logits: Vec<f64> = targets
            .iter()
            .map(|&t| if t == 1 { 60.0 } else { -60.0 })
            .collect();
        let (loss, _) = dice_loss(&logits, &targets).unwrap();
        let sum_t = 3.0;
        assert!(loss.abs() <= 1.0 / (2.0 * sum_t + 1.0), "loss {loss}");
    }

    #[test]
    fn dice_empty_mask_empty_prediction_is_zero() {
        let logits = [-60.0, -55.0, -70.0];
        let targets = [0u8, 0, 0];
        let (loss, _) = dice_loss(&logits, &targets).unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn dice_gradient_matches_finite_differences() {
        for seed in 0..25 {
            let mut rng = Rng::from_seed(1000 + seed);
            let logits: Vec<f64> = (0..16).map(|_| 6.0 * rng.next_f64() - 3.0).collect();
            let targets: Vec<u8> = (0..16).map(|_| (rng.next_u64() & 1) as u8).collect();
            let (_, grad) = dice_loss(&logits, &targets).unwrap();
            fd_check(&logits, &grad, |l| dice_loss(l, &targets).unwrap().0, 1e-4);
        }
    }

    fn tiny_bundle(seed: u64) -> (ScoreBundle, Vec<u8>, Vec<Vec<u8>>) {
        let dims = small_dims();
        let w = DecoderWeights::init(&dims, seed).unwrap();
        let (prompt, vision) = random_inputs(seed, 2);
        let bundle = decode(&prompt, &vision, &w).unwrap();
        let frame_targets = alloc::vec![1u8, 0];
        let mut rng = Rng::from_seed(seed ^ 0x77);
        let pixel_targets: Vec<Vec<u8>> = (0..2)
            .map(|t| {
                let n = bundle.pixel_logits[t].rows() * bundle.pixel_logits[t].cols();
                (0..n).map(|_| (rng.next_u64() & 1) as u8).collect()
            })
            .collect();
        (bundle, frame_targets, pixel_targets)
    }

    #[test]
    fn seg_loss_zero_lambdas_zero_everything() {
        let (bundle, ft, pt) = tiny_bundle(2);
        let cfg = LossConfig {
            lambda_seg: 0.0,
            lambda_focal: 0.0,
            lambda_dice: 0.0,
            lambda_obj: 0.0,
            ..LossConfig::default()
        };
        let out = seg_loss(&bundle, &ft, &pt, &cfg).unwrap();
        assert_eq!(out.total, 0.0);
        assert!(out.frame_grad.iter().all(|&g| g == 0.0));
        assert!(out.pixel_grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn seg_loss_total_is_weighted_sum_of_terms() {
        let (bundle, ft, pt) = tiny_bundle(3);
        let cfg = LossConfig::default();
        let out = seg_loss(&bundle, &ft, &pt, &cfg).unwrap();
        let want = cfg.lambda_seg
            * (cfg.lambda_focal * out.focal_term
                + cfg.lambda_dice * out.dice_term
                + cfg.lambda_obj * out.object_term);
        assert!((out.total - want).abs() < 1e-12);
    }

    #[test]
    fn seg_loss_doubles_exactly_with_lambda_seg() {
        let (bundle, ft, pt) = tiny_bundle(4);
        let cfg = LossConfig::default();
        let doubled = LossConfig {
            lambda_seg: 2.0 * cfg.lambda_seg,
            ..cfg.clone()
        };
        let a = seg_loss(&bundle, &ft, &pt, &cfg).unwrap();
        let b = seg_loss(&bundle, &ft, &pt, &doubled).unwrap();
        assert_eq!(b.total, 2.0 * a.total);
        for (x, y) in a.frame_grad.iter().zip(&b.frame_grad) {
            assert_eq!(*y, 2.0 * *x);
        }
        for (x, y) in a.pixel_grad.iter().zip(&b.pixel_grad) {
            assert_eq!(*y, 2.0 * *x);
        }
    }

    #[test]
    fn seg_loss_gradient_matches_component_sum() {
        let (bundle, ft, pt) = tiny_bundle(5);
        let cfg = LossConfig::default();
        let out = seg_loss(&bundle, &ft, &pt, &cfg).unwrap();
        let mut flat_logits: Vec<f64> = Vec::new();
        let mut flat_targets: Vec<u8> = Vec::new();
        for (t, target) in pt.iter().enumerate() {
            flat_logits.extend_from_slice(bundle.pixel_logits[t].data());
            flat_targets.extend_from_slice(target);
        }
        let (_, fg) = focal_loss(
            &flat_logits,
            &flat_targets,
            cfg.focal_alpha,
            cfg.focal_gamma,
        )
        .unwrap();
        let (_, dg) = dice_loss(&flat_logits, &flat_targets).unwrap();
        for i in 0..flat_logits.len() {
            let want = cfg.lambda_seg * (cfg.lambda_focal * fg[i] + cfg.lambda_dice * dg[i]);
            assert!((out.pixel_grad[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn seg_loss_rejects_shape_mismatch() {
        let (bundle, ft, mut pt) = tiny_bundle(6);
        pt[0].pop();
        assert!(seg_loss(&bundle, &ft, &pt, &LossConfig::default()).is_err());
        let (bundle, _, pt) = tiny_bundle(6);
        assert!(seg_loss(&bundle, &[1u8; 3], &pt, &LossConfig::default()).is_err());
    }

    #[test]
    fn default_pixel_weighting_is_twenty_to_one() {
        let cfg = LossConfig::default();
        assert_eq!(cfg.lambda_focal, 20.0);
        assert_eq!(cfg.lambda_dice, 1.0);
    }
}
