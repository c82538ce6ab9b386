//! Anomalous change detection for co-registered single-band image pairs.
//!
//! The pipeline is: load a [`raster::CoregisteredPair`], turn each image
//! into a per-pixel [`features::FeatureStack`] (raw intensity, local patch
//! or patch GLCM), fit a joint-Gaussian [`hacd::HacdModel`] over both
//! stacks, score every pixel, and evaluate the resulting
//! [`hacd::AnomalyMap`] against inner/outer truth masks with
//! [`eval::roc`]. [`synth`] generates benchmark scenes with known truth.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod hacd;
mod linalg;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
