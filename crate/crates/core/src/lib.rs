//! Two-stage CNN cascade for object detection in multi-band rasters.
//!
//! The pipeline pairs a small fully-convolutional "high recall" network that
//! flags candidate 16x16 tiles across a whole scene with a deeper "high
//! precision" crop classifier that filters those candidates. Training support
//! includes negative-ratio control, periodic snapshotting with
//! recall-maximizing selection, D4 crop augmentation and hard-negative mining
//! from first-stage false positives. A synthetic scene generator plus an
//! evaluation harness make the whole loop reproducible without any real
//! imagery.

pub mod cascade;
pub mod error;
pub mod eval;
pub mod hpn;
pub mod hrn;
pub mod nn;
pub mod pipeline;
pub mod raster;
pub mod seeds;
pub mod regions;
pub mod synth;
pub mod tiling;

pub use error::{Error, Result};
