//! Dataset ingestion: palette-mask datasets, image-level label derivation
//! and training augmentation.

pub mod augment;
mod labels;
mod loader;

pub use augment::{augment, augment_rgb, AugmentationConfig};
pub use labels::{class_pixel_counts, derive_image_labels, LabelVector};
pub use loader::{
    ingest, load_split, scan_split, ClassFrequency, DatasetEntry, DatasetLayout, IngestionReport,
    LabeledImage, Split, SplitReport,
};

/// Default minimum pixel area for a class to count as present.
pub const DEFAULT_MIN_PIXEL_COUNT: u64 = 1;
