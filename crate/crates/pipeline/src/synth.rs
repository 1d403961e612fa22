//! Synthetic benchmark scenes with planted anomalies.
//!
//! A scene is a deterministic background pattern plus seeded per-pixel noise,
//! optionally with a moving bright rectangle planted over a frame window. The
//! rectangle is the anomaly: ground-truth masks cover exactly its pixels and
//! a frame is labeled anomalous exactly when the rectangle is present. An
//! oracle scorer re-renders the noise-free background from the scene
//! parameters and scores pixels by brightness difference, which makes planted
//! anomalies detectable without any training; it exists to exercise the
//! pipeline and metrics, not as a detector.

use serde::{Deserialize, Serialize};
use vad_core::decoder::{sigmoid, ScoreBundle};
use vad_core::encoders::FrameTensor;
use vad_core::mask::RleMask;
use vad_core::{Matrix, Rng};

use crate::error::{PipelineError, Result};
use crate::tensor_io::quantize_unit;

/// Deterministic background patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundPattern {
    Flat { level: f64 },
    HorizontalGradient { from: f64, to: f64 },
    Checker { cell: usize, low: f64, high: f64 },
}

impl BackgroundPattern {
    fn value(&self, y: usize, x: usize, width: usize) -> f64 {
        match *self {
            BackgroundPattern::Flat { level } => level,
            BackgroundPattern::HorizontalGradient { from, to } => {
                if width <= 1 {
                    from
                } else {
                    from + (to - from) * x as f64 / (width - 1) as f64
                }
            }
            BackgroundPattern::Checker { cell, low, high } => {
                let cell = cell.max(1);
                if ((y / cell) + (x / cell)).is_multiple_of(2) {
                    low
                } else {
                    high
                }
            }
        }
    }
}

/// A bright rectangle moving with constant velocity over a frame window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectAnomaly {
    /// Top-left corner at `first_frame`.
    pub start_row: i64,
    pub start_col: i64,
    /// Per-frame displacement.
    pub vel_row: i64,
    pub vel_col: i64,
    pub height: usize,
    pub width: usize,
    /// Present for frames `first_frame <= t < last_frame`.
    pub first_frame: usize,
    pub last_frame: usize,
    pub brightness: f64,
}

impl RectAnomaly {
    /// Top-left corner in frame `t`, or `None` when absent.
    pub fn position(&self, t: usize) -> Option<(i64, i64)> {
        if t < self.first_frame || t >= self.last_frame {
            return None;
        }
        let dt = (t - self.first_frame) as i64;
        Some((
            self.start_row + self.vel_row * dt,
            self.start_col + self.vel_col * dt,
        ))
    }
}

/// Full scene description; rendering is a pure function of this value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub background: BackgroundPattern,
    /// Amplitude of uniform per-pixel noise added to the background.
    pub noise_amplitude: f64,
    pub noise_seed: u64,
    pub anomaly: Option<RectAnomaly>,
}

/// Rendered scene: frames plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub frames: FrameTensor,
    pub masks: Vec<RleMask>,
    pub frame_labels: Vec<u8>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err(PipelineError::data("scene must have positive extent"));
        }
        if let Some(rect) = &self.anomaly {
            if rect.first_frame >= rect.last_frame || rect.last_frame > self.frames {
                return Err(PipelineError::data(format!(
                    "anomaly window [{}, {}) outside {} frames",
                    rect.first_frame, rect.last_frame, self.frames
                )));
            }
            for t in rect.first_frame..rect.last_frame {
                let (r, c) = rect.position(t).expect("inside window");
                if r < 0
                    || c < 0
                    || r as usize + rect.height > self.height
                    || c as usize + rect.width > self.width
                {
                    return Err(PipelineError::data(format!(
                        "anomaly leaves the frame at t = {t} (top-left {r},{c})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// The background value at a pixel, quantized exactly like the stored
    /// frames, with no noise and no anomaly.
    pub fn clean_background(&self, y: usize, x: usize) -> f64 {
        quantize_unit(self.background.value(y, x, self.width))
    }
}

/// Renders a scene deterministically from its spec.
///
/// Per-pixel noise (uniform in `[-amp, amp]`) comes from a stream seeded with
/// `noise_seed`, consumed in frame-major, row-major order; the rectangle's
/// brightness is stamped after the noise, and everything is clamped to
/// `[0, 1]`. A frame is labeled anomalous exactly when the rectangle is
/// present, and each mask covers exactly the rectangle.
pub fn render_scene(spec: &SceneSpec) -> Result<RenderedScene> {
    spec.validate()?;
    let (t_n, h, w) = (spec.frames, spec.height, spec.width);
    let mut rng = Rng::from_seed(spec.noise_seed);
    let mut data = Vec::with_capacity(t_n * h * w);
    let mut masks = Vec::with_capacity(t_n);
    let mut labels = Vec::with_capacity(t_n);
    for t in 0..t_n {
        let rect = spec.anomaly.as_ref().and_then(|r| {
            r.position(t)
                .map(|(row, col)| (row as usize, col as usize, r.height, r.width, r.brightness))
        });
        let mut mask = vec![0u8; h * w];
        for y in 0..h {
            for x in 0..w {
                let mut v = spec.background.value(y, x, w)
                    + spec.noise_amplitude * (2.0 * rng.next_f64() - 1.0);
                if let Some((r0, c0, rh, rw, bright)) = rect {
                    if y >= r0 && y < r0 + rh && x >= c0 && x < c0 + rw {
                        v = bright + spec.noise_amplitude * (2.0 * rng.next_f64() - 1.0);
                        mask[y * w + x] = 1;
                    }
                }
                data.push(v.clamp(0.0, 1.0));
            }
        }
        labels.push(u8::from(rect.is_some()));
        masks.push(RleMask::encode(h, w, &mask)?);
    }
    Ok(RenderedScene {
        frames: FrameTensor::new(t_n, 1, h, w, data)?,
        masks,
        frame_labels: labels,
    })
}

/// Builds a randomized scene around desk-scale defaults.
///
/// Roughly one scene in ten carries no anomaly; the rest plant a rectangle
/// with a random window, size, velocity, and a start position chosen so the
/// whole trajectory stays inside the frame.
pub fn random_scene(frames: usize, height: usize, width: usize, rng: &mut Rng) -> SceneSpec {
    let background = match rng.below(3) {
        0 => BackgroundPattern::Flat {
            level: 0.25 + 0.15 * rng.next_f64(),
        },
        1 => BackgroundPattern::HorizontalGradient {
            from: 0.15 + 0.1 * rng.next_f64(),
            to: 0.4 + 0.1 * rng.next_f64(),
        },
        _ => BackgroundPattern::Checker {
            cell: 8 << rng.below(2),
            low: 0.2 + 0.05 * rng.next_f64(),
            high: 0.4 + 0.05 * rng.next_f64(),
        },
    };
    let noise_seed = rng.next_u64();
    let anomaly = if rng.below(10) == 0 {
        None
    } else {
        let rh = 10 + rng.index(7);
        let rw = 10 + rng.index(7);
        let first = rng.index(frames / 2);
        let span = 2 + rng.index(frames - first - 1);
        let last = (first + span).min(frames);
        let steps = (last - first - 1) as i64;
        let max_vr = if steps > 0 {
            ((height - rh) as i64 / steps).min(2)
        } else {
            2
        };
        let max_vc = if steps > 0 {
            ((width - rw) as i64 / steps).min(2)
        } else {
            2
        };
        let vel_row = -max_vr + rng.below((2 * max_vr + 1) as u64) as i64;
        let vel_col = -max_vc + rng.below((2 * max_vc + 1) as u64) as i64;
        // keep the whole trajectory in-bounds
        let (row_lo, row_hi) = if vel_row >= 0 {
            (0, (height - rh) as i64 - vel_row * steps)
        } else {
            (-vel_row * steps, (height - rh) as i64)
        };
        let (col_lo, col_hi) = if vel_col >= 0 {
            (0, (width - rw) as i64 - vel_col * steps)
        } else {
            (-vel_col * steps, (width - rw) as i64)
        };
        let start_row = row_lo + rng.below((row_hi - row_lo + 1) as u64) as i64;
        let start_col = col_lo + rng.below((col_hi - col_lo + 1) as u64) as i64;
        Some(RectAnomaly {
            start_row,
            start_col,
            vel_row,
            vel_col,
            height: rh,
            width: rw,
            first_frame: first,
            last_frame: last,
            brightness: 0.9 + 0.08 * rng.next_f64(),
        })
    };
    SceneSpec {
        frames,
        height,
        width,
        background,
        noise_amplitude: 0.02,
        noise_seed,
        anomaly,
    }
}

/// Scores frames against the scene's noise-free background.
///
/// Pixel logits are the (gain-scaled) signed brightness differences between
/// the observed frames and the re-rendered clean background; the frame logit
/// is the maximum pixel logit of the frame. The scorer reads only the scene
/// parameters, never the noise realization or the ground-truth masks.
pub fn oracle_bundle(spec: &SceneSpec, frames: &FrameTensor) -> Result<ScoreBundle> {
    const GAIN: f64 = 12.0;
    if frames.frames != spec.frames
        || frames.height != spec.height
        || frames.width != spec.width
        || frames.channels != 1
    {
        return Err(PipelineError::data(
            "frames do not match the scene description",
        ));
    }
    let (h, w) = (spec.height, spec.width);
    let mut bundle = ScoreBundle {
        frame_scores: Vec::with_capacity(spec.frames),
        frame_logits: Vec::with_capacity(spec.frames),
        pixel_scores: Vec::with_capacity(spec.frames),
        pixel_logits: Vec::with_capacity(spec.frames),
        patch_logits: Vec::with_capacity(spec.frames),
    };
    for t in 0..spec.frames {
        let mut logits = Vec::with_capacity(h * w);
        let mut frame_logit = f64::NEG_INFINITY;
        for y in 0..h {
            for x in 0..w {
                let diff = frames.get(t, 0, y, x) - spec.clean_background(y, x);
                let logit = GAIN * diff;
                frame_logit = frame_logit.max(logit);
                logits.push(logit);
            }
        }
        let logits = Matrix::new(h, w, logits)?;
        let scores = Matrix::new(h, w, logits.data().iter().map(|&v| sigmoid(v)).collect())?;
        bundle.frame_scores.push(sigmoid(frame_logit));
        bundle.frame_logits.push(frame_logit);
        bundle.patch_logits.push(logits.clone());
        bundle.pixel_logits.push(logits);
        bundle.pixel_scores.push(scores);
    }
    Ok(bundle)
}
