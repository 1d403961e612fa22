//! Algorithmic core for a zero-shot video anomaly detection pipeline.
//!
//! Everything in this crate is pure computation over owned buffers: no IO, no
//! global state, no threads. The crate is `no_std` (with `alloc`) so the same
//! kernels can run embedded in larger hosts; the companion `vad-pipeline`
//! crate supplies file formats, providers backed by processes, and the CLI.
//!
//! Stages, in pipeline order:
//!
//! * [`sampler`] turns segmentation-style samples into pseudo-anomaly samples
//!   by injecting irrelevant categories and probabilistic anomaly labeling.
//! * [`encoders`] produce deterministic toy vision/text features standing in
//!   for pretrained backbones (precomputed feature files can substitute).
//! * [`compression`] shrinks the visual token set with KNN density estimation
//!   plus localized reverse attention, keeping the tokens most dissimilar to
//!   the estimated background.
//! * [`semantic`] abstracts the clip-level semantic feature extractor behind
//!   a provider trait with deterministic in-process implementations.
//! * [`projector`] fuses clip-level semantics with per-frame cross-attention
//!   features through a two-way transformer with learnable queries.
//! * [`decoder`] emits per-frame object-score logits and per-pixel score
//!   maps, and carries the segmentation losses with analytic gradients.
//! * [`metrics`] computes rank-based frame/pixel ROC-AUC and average
//!   precision with exact tie handling.
//!
//! All randomness flows through [`rng::Rng`], a splitmix64-seeded
//! xoshiro256** generator, so identical seeds reproduce identical results
//! bit-for-bit on every platform.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod compression;
pub mod decoder;
pub mod encoders;
pub mod error;
pub mod mask;
pub mod metrics;
pub mod numerics;
pub mod projector;
pub mod rng;
pub mod sampler;
pub mod semantic;
pub mod twoway;

pub use error::{CoreError, Result};
pub use numerics::Matrix;
pub use rng::Rng;
