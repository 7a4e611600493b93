//! Stacking with auxiliary features.
//!
//! Fuses the outputs of several independent systems (slot fills, entity
//! mention links, object detections). Records are aligned into value groups
//! per key, described by confidences plus provenance-agreement features,
//! judged by a logistic meta-classifier, and post-processed into a single
//! output. Count-threshold voting and the three task scorers are included
//! for comparison.

pub mod align;
pub mod error;
pub mod features;
pub mod fuse;
pub mod gold;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod score;
pub mod stacker;
pub mod synth;

pub use error::{Error, Result};
