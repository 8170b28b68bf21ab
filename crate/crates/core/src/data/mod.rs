//! Dataset ingestion, augmentation, class rebalancing, splitting and the
//! procedural four-class dataset used for smoke tests.

mod augment;
mod load;
mod split;
mod synth;

pub use augment::{augment, augment_with, AugmentConfig, AugmentPlan};
pub use load::{load_dataset, resize_bilinear, save_png, LoadedDataset};
pub use split::{kaggle_split_counts, oversample_balance, split, split_by_counts, split_auto, DatasetSplit, SplitManifest};
pub use synth::{synth_export, synth_generate, SYNTH_CLASSES};

use crate::tensor::Tensor;

/// One labelled single-channel image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[1, S, S]`.
    pub image: Tensor<f32>,
    pub label: usize,
    /// File path, or a synthetic identifier; unique within a dataset.
    pub source: String,
}

impl Sample {
    pub fn size(&self) -> usize {
        self.image.shape()[2]
    }
}

/// Number of samples per class (length `num_classes`).
pub fn class_counts(samples: &[Sample], num_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; num_classes];
    for s in samples {
        counts[s.label] += 1;
    }
    counts
}
