//! Dataset scanning, stratified splitting, preprocessing and batching.

mod augment;
mod batch;
mod image;
mod manifest;
mod scan;
mod split;
mod weights;

pub use augment::{
    adjust_brightness, adjust_contrast, adjust_saturation, augment, hflip, rotate, AugmentConfig,
};
pub use batch::{make_batches, plan_batches, Batch, BatchIter, BatchOptions};
pub use image::{
    decode_rgb, denormalize, load_and_preprocess, normalize, resize_bilinear, IMAGENET_MEAN,
    IMAGENET_STD,
};
pub use manifest::{ManifestEntry, SplitManifest};
pub use scan::{scan_dataset, DatasetIndex, SampleRef, SUPPORTED_EXTENSIONS};
pub use split::{split_counts, stratified_split, SplitAssignment, SplitKind, SPLIT_RATIOS};
pub use weights::{compute_class_weights, ClassWeights};
