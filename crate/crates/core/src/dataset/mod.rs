//! Paired LQ/HQ dataset construction: image IO, registration, augmentation
//! and the train/test/validation manifest.

pub mod align;
pub mod augment;
pub mod io;
pub mod manifest;
pub mod prepare;
pub mod transform;

use crate::nn::Tensor;

pub use align::{
    align_pair, align_pair_detailed, estimate_rotation, estimate_shift, normalized_cross_correlation,
    select_best_z, AlignConfig, Alignment,
};
pub use augment::{augment_all, augment_pair, AugmentConfig};
pub use io::{load_image, save_image_u16, to_rgb};
pub use manifest::{split_dataset, DatasetManifest, ManifestEntry, Split, SplitFractions};
pub use prepare::{prepare_dataset, PrepareConfig, PrepareReport, SplitOrder};
pub use transform::{Target, Transform, TransformRecord};

/// An LQ image and its HQ ground truth, same shape, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub lq: Tensor,
    pub hq: Tensor,
    pub id: String,
    pub transform_log: Vec<TransformRecord>,
}
