//! Deterministic stand-in encoders.
//!
//! The full system uses pretrained vision and text backbones; this crate
//! substitutes two seeded deterministic encoders with the same shapes so the
//! rest of the pipeline is exercised end to end. Precomputed features from a
//! real backbone can be injected through the companion crate's feature-file
//! loaders without code changes.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::compression::TokenSet;
use crate::error::{contract, Result};
use crate::numerics::Matrix;
use crate::rng::{derive_subseed, Rng};
use crate::semantic::fnv1a64;

/// Raw frame stack: `frames x channels x height x width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FrameTensor {
    pub fn new(
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != frames * channels * height * width {
            return Err(contract(format_args!(
                "frame buffer length {} does not equal {frames}x{channels}x{height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(contract("frame data contains non-finite values"));
        }
        Ok(FrameTensor {
            frames,
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[((t * self.channels + c) * self.height + y) * self.width + x]
    }
}

/// Per-frame patch features: one `N_p x D_v` matrix per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionFeatures {
    pub frames: Vec<Matrix>,
    /// `(rows, cols)` of the patch grid; `rows * cols = N_p`.
    pub patch_grid: (usize, usize),
}

impl VisionFeatures {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn patches_per_frame(&self) -> usize {
        self.patch_grid.0 * self.patch_grid.1
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map(Matrix::cols).unwrap_or(0)
    }

    /// Flattens all frames' patch features into one token set
    /// (`L_z = T * N_p` rows) for the compression stage.
    pub fn to_tokens(&self) -> Result<TokenSet> {
        let refs: Vec<&Matrix> = self.frames.iter().collect();
        let tokens = Matrix::vstack(&refs)?;
        TokenSet::with_grid(
            tokens,
            (self.frames.len(), self.patch_grid.0, self.patch_grid.1),
        )
    }
}

/// Per-category text features, unit-normalized rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryFeatures {
    pub features: Matrix,
    pub categories: Vec<String>,
}

/// Encodes frames into per-patch features with a seeded linear projection.
///
/// Frames are cut into a `ceil(H/P) x ceil(W/P)` grid; each patch is
/// flattened channel-major (out-of-frame positions of ragged edge patches
/// read as zero) and projected by a fixed `C*P*P x D_v` Gaussian matrix with
/// standard deviation `1/sqrt(fan_in)`. No bias, so the encoding is linear
/// in pixel values.
pub fn encode_vision(
    frames: &FrameTensor,
    patch_size: usize,
    dim: usize,
    seed: u64,
) -> Result<VisionFeatures> {
    if patch_size == 0 {
        return Err(contract("patch size must be positive"));
    }
    if frames.height < patch_size || frames.width < patch_size {
        return Err(contract(format_args!(
            "frame {}x{} smaller than patch size {patch_size}",
            frames.height, frames.width
        )));
    }
    if dim == 0 {
        return Err(contract("feature dim must be positive"));
    }
    let grid_rows = frames.height.div_ceil(patch_size);
    let grid_cols = frames.width.div_ceil(patch_size);
    let fan_in = frames.channels * patch_size * patch_size;
    let mut rng = Rng::from_seed(derive_subseed(seed, 0));
    let projection = Matrix::gaussian(fan_in, dim, 1.0 / libm::sqrt(fan_in as f64), &mut rng);

    let mut out_frames = Vec::with_capacity(frames.frames);
    let mut patch = vec![0.0; fan_in];
    for t in 0..frames.frames {
        let mut feat = Matrix::zeros(grid_rows * grid_cols, dim);
        for gr in 0..grid_rows {
            for gc in 0..grid_cols {
                patch.iter_mut().for_each(|v| *v = 0.0);
                for c in 0..frames.channels {
                    for py in 0..patch_size {
                        let y = gr * patch_size + py;
                        if y >= frames.height {
                            continue;
                        }
                        for px in 0..patch_size {
                            let x = gc * patch_size + px;
                            if x >= frames.width {
                                continue;
                            }
                            patch[(c * patch_size + py) * patch_size + px] = frames.get(t, c, y, x);
                        }
                    }
                }
                let row = gr * grid_cols + gc;
                for d in 0..dim {
                    let mut acc = 0.0;
                    for (i, &p) in patch.iter().enumerate() {
                        acc += p * projection.get(i, d);
                    }
                    feat.set(row, d, acc);
                }
            }
        }
        out_frames.push(feat);
    }
    Ok(VisionFeatures {
        frames: out_frames,
        patch_grid: (grid_rows, grid_cols),
    })
}

/// Encodes category strings into unit-length rows.
///
/// Each row is generated from a stream keyed by the FNV-1a hash of the
/// category mixed with the seed, then normalized; identical strings map to
/// identical rows and rows do not depend on list position.
pub fn encode_text(categories: &[String], dim: usize, seed: u64) -> Result<CategoryFeatures> {
    if categories.is_empty() {
        return Err(contract("need at least one category"));
    }
    if dim == 0 {
        return Err(contract("feature dim must be positive"));
    }
    let mut rows = Vec::with_capacity(categories.len() * dim);
    for cat in categories {
        if cat.is_empty() {
            return Err(contract("empty category string"));
        }
        let mut rng = Rng::from_seed(derive_subseed(seed, fnv1a64(cat)));
        let mut row: Vec<f64> = (0..dim).map(|_| rng.next_normal()).collect();
        let norm = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        } else {
            row[0] = 1.0;
        }
        rows.extend_from_slice(&row);
    }
    Ok(CategoryFeatures {
        features: Matrix::new(categories.len(), dim, rows)?,
        categories: categories.to_vec(),
    })
}
