//! Rank-based evaluation metrics.
//!
//! Frame-level ROC-AUC and average precision, plus pixel-level ROC-AUC over
//! score maps, all micro-averaged: frames (or pixels) of every video are
//! concatenated before ranking. Ties contribute half a win per tied pair
//! (average-rank method), so results are invariant under any strictly
//! increasing transform of the scores.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{contract, CoreError, Result};
use crate::mask::RleMask;
use crate::numerics::Matrix;

/// One video's scores and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub video_id: String,
    pub frame_scores: Vec<f64>,
    pub frame_labels: Vec<u8>,
    /// Per-frame score maps, when pixel evaluation is wanted.
    pub pixel_scores: Option<Vec<Matrix>>,
    /// Per-frame ground-truth masks at source resolution.
    pub pixel_labels: Option<Vec<RleMask>>,
}

impl EvalRecord {
    pub fn validate(&self) -> Result<()> {
        if self.frame_scores.len() != self.frame_labels.len() {
            return Err(contract(format_args!(
                "video {:?}: {} scores vs {} labels",
                self.video_id,
                self.frame_scores.len(),
                self.frame_labels.len()
            )));
        }
        if self.frame_labels.iter().any(|&l| l > 1) {
            return Err(contract("labels must be binary"));
        }
        if self.frame_scores.iter().any(|s| !s.is_finite()) {
            return Err(contract("scores must be finite"));
        }
        if let (Some(scores), Some(labels)) = (&self.pixel_scores, &self.pixel_labels) {
            if scores.len() != self.frame_scores.len() || labels.len() != scores.len() {
                return Err(contract(format_args!(
                    "video {:?}: pixel data must cover every frame",
                    self.video_id
                )));
            }
        }
        Ok(())
    }
}

fn check_binary(labels: &[u8]) -> Result<(usize, usize)> {
    if labels.iter().any(|&l| l > 1) {
        return Err(contract("labels must be binary"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    Ok((pos, neg))
}

/// ROC-AUC via average ranks (Mann-Whitney). Tied score pairs count 0.5.
///
/// Errors when either class is absent: the metric is undefined.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(contract(format_args!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(contract("scores must be finite"));
    }
    let (pos, neg) = check_binary(labels)?;
    if pos == 0 || neg == 0 {
        return Err(CoreError::UndefinedMetric(alloc::format!(
            "roc auc needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // average ranks over tie groups, 1-based
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        start = end;
    }
    let p = pos as f64;
    let n = neg as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: mean of precision-at-rank over the positives, with the
/// ranking ordered by score descending and ties broken by the stable input
/// index. Equals the area under the precision-recall step curve.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(contract(format_args!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(contract("scores must be finite"));
    }
    let (pos, _) = check_binary(labels)?;
    if pos == 0 {
        return Err(CoreError::UndefinedMetric(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then_with(|| i.cmp(&j)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / pos as f64)
}

/// Nearest-neighbor resampling of a row-major binary mask.
pub fn resample_nearest(
    src: &[u8],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Result<Vec<u8>> {
    if src.len() != src_h * src_w {
        return Err(contract(format_args!(
            "mask length {} does not equal {src_h}x{src_w}",
            src.len()
        )));
    }
    if dst_h == 0 || dst_w == 0 {
        return Err(contract("target shape must be positive"));
    }
    let mut out = Vec::with_capacity(dst_h * dst_w);
    for i in 0..dst_h {
        let sy = (((i as f64 + 0.5) * src_h as f64 / dst_h as f64) as usize).min(src_h - 1);
        for j in 0..dst_w {
            let sx = (((j as f64 + 0.5) * src_w as f64 / dst_w as f64) as usize).min(src_w - 1);
            out.push(src[sy * src_w + sx]);
        }
    }
    Ok(out)
}

/// Micro frame-level ROC-AUC over all records.
pub fn frame_auc(records: &[EvalRecord]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        r.validate()?;
        scores.extend_from_slice(&r.frame_scores);
        labels.extend_from_slice(&r.frame_labels);
    }
    roc_auc(&scores, &labels)
}

/// Micro frame-level average precision over all records.
pub fn frame_ap(records: &[EvalRecord]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        r.validate()?;
        scores.extend_from_slice(&r.frame_scores);
        labels.extend_from_slice(&r.frame_labels);
    }
    average_precision(&scores, &labels)
}

/// Micro pixel-level ROC-AUC over every frame of every record carrying pixel
/// data. Ground-truth masks are resampled to each score map's resolution by
/// nearest neighbor.
pub fn pixel_auc(records: &[EvalRecord]) -> Result<f64> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for r in records {
        r.validate()?;
        let (Some(score_maps), Some(masks)) = (&r.pixel_scores, &r.pixel_labels) else {
            return Err(contract(format_args!(
                "video {:?} lacks pixel scores or labels",
                r.video_id
            )));
        };
        for (map, mask) in score_maps.iter().zip(masks) {
            let src = mask.decode()?;
            let resampled =
                resample_nearest(&src, mask.height, mask.width, map.rows(), map.cols())?;
            scores.extend_from_slice(map.data());
            labels.extend_from_slice(&resampled);
        }
    }
    roc_auc(&scores, &labels)
}
