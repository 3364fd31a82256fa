//! Post-model pipeline for dental panoramic radiographs.
//!
//! Tooth boxes from several detectors and segmenters are combined with
//! disease detections by IoU-weighted voting to give each disease finding an
//! FDI tooth number. The crate also converts hierarchical dental
//! annotations, turns label masks into boxes, cleans up findings with
//! score, duplicate and anatomy rules, scores submissions with COCO-style
//! metrics, and generates synthetic cases for testing all of the above.

pub mod annotations;
mod error;
pub mod evaluate;
pub mod formats;
pub mod fusion;
pub mod geometry;
pub mod postprocess;
pub mod rasterize;
pub mod synth;

pub use error::{Error, Result};
