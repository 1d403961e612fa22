//! IO, file formats, providers, and orchestration around `vad-core`.
//!
//! This crate owns everything that touches the outside world: JSON-lines
//! manifests, binary tensor and video files, the TOML configuration, the
//! fixture/subprocess semantic providers, synthetic scene generation, and the
//! `vad` command-line tool built on top of [`pipeline`].

pub mod config;
pub mod error;
pub mod frames;
pub mod manifest;
pub mod pipeline;
pub mod providers;
pub mod synth;
pub mod tensor_io;
pub mod weights_io;

pub use config::PipelineConfig;
pub use error::{PipelineError, Result};
