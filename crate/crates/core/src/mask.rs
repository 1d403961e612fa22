//! Binary segmentation masks stored as uncompressed run-length counts.
//!
//! The encoding follows the COCO convention: pixels are visited in
//! column-major order (whole first column top to bottom, then the second
//! column, ...), and `counts` holds the lengths of alternating runs of 0s and
//! 1s, always starting with the 0-run (a leading 0 count encodes a mask that
//! starts with a 1-pixel).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};

/// One frame's binary mask in run-length form.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RleMask {
    pub height: usize,
    pub width: usize,
    /// Alternating 0/1 run lengths over column-major pixel order.
    pub counts: Vec<u64>,
}

impl RleMask {
    /// Encodes a row-major binary buffer (`pixels[r * width + c]`).
    pub fn encode(height: usize, width: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(contract(format_args!(
                "mask buffer length {} does not equal {height}x{width}",
                pixels.len()
            )));
        }
        let mut counts = Vec::new();
        let mut current: u8 = 0;
        let mut run: u64 = 0;
        for c in 0..width {
            for r in 0..height {
                let v = if pixels[r * width + c] != 0 { 1 } else { 0 };
                if v == current {
                    run += 1;
                } else {
                    counts.push(run);
                    current = v;
                    run = 1;
                }
            }
        }
        counts.push(run);
        Ok(RleMask {
            height,
            width,
            counts,
        })
    }

    /// An all-zeros mask of the given shape.
    pub fn zeros(height: usize, width: usize) -> Self {
        RleMask {
            height,
            width,
            counts: vec![(height * width) as u64],
        }
    }

    /// Decodes into a row-major binary buffer.
    pub fn decode(&self) -> Result<Vec<u8>> {
        let total: u64 = self.counts.iter().sum();
        let expected = (self.height * self.width) as u64;
        if total != expected {
            return Err(contract(format_args!(
                "rle counts sum to {total}, mask is {}x{} = {expected}",
                self.height, self.width
            )));
        }
        let mut out = vec![0u8; self.height * self.width];
        let mut value: u8 = 0;
        let mut pos: usize = 0;
        for &run in &self.counts {
            for _ in 0..run {
                let c = pos / self.height;
                let r = pos % self.height;
                out[r * self.width + c] = value;
                pos += 1;
            }
            value ^= 1;
        }
        Ok(out)
    }

    /// Number of 1-pixels, computable without decoding.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }

    /// Validates shape consistency without materializing pixels.
    pub fn validate(&self) -> Result<()> {
        let total: u64 = self.counts.iter().sum();
        if total != (self.height * self.width) as u64 {
            return Err(contract(format_args!(
                "rle counts sum to {total} but mask is {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}
