//! Dataset ingestion, preprocessing, augmentation, splitting, segmentation, and
//! the synthetic product generator.

pub mod augment;
pub mod image;
pub mod manifest;
pub mod segments;
pub mod split;
pub mod synth;

pub use augment::{augment, sample_seed, AugmentConfig, AugmentDraw};
pub use image::{GrayImage, Image};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry, Sample};
pub use segments::{make_segments, SegmentScheme};
pub use split::{split, Split};
pub use synth::{render_product, synth_generate, ProductAttributes, SynthConfig, SynthDataset};
