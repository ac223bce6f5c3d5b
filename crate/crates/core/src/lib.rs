//! Weakly supervised food segmentation: a multi-label classifier trained on
//! image-level labels, gradient-weighted activation maps turned into point
//! prompts, a pluggable promptable segmenter, and evaluation/export of the
//! resulting masks.

pub mod cam;
pub mod catalog;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod fingerprint;
pub mod imageops;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod rle;
pub mod segmenter;
pub mod synth;

/// Index into the class catalog.
pub type ClassId = u16;

pub use catalog::{ClassCatalog, ClassEntry};
pub use error::{Error, Result};
pub use mask::{BinaryMask, LabelMap};
pub use rle::Rle;
