//! Reference binarization: a per-document scalar loop.

use super::{check_dims, set_bit, BinarizeError, BitLayout, BitMatrix};
use crate::model::{FeatureMatrix, ObliviousForest, Orientation};

/// Walks documents one at a time, maintaining the running binary-feature
/// ordinal and group descriptor. Emits ordered bits at byte granularity.
pub fn binarize_naive(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
) -> Result<BitMatrix, BinarizeError> {
    if features.orientation() != Orientation::DocumentMajor {
        return Err(BinarizeError::OrientationMismatch {
            kernel: super::KernelId::new(super::KernelKind::Naive),
            expected: Orientation::DocumentMajor,
            actual: features.orientation(),
        });
    }
    check_dims(features, forest)?;
    run(features, forest)
}

/// Orientation-agnostic core shared with the `naive-t` variant.
pub(super) fn run(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
) -> Result<BitMatrix, BinarizeError> {
    let docs = features.num_docs();
    let k_total = forest.num_binary_features();
    let mut bm = BitMatrix::zeroed(BitLayout::Ordered, 8, k_total, docs);
    let rb = bm.row_bytes();
    for d in 0..docs {
        let mut k = 0usize;
        for group in &forest.feature_groups {
            let factor = features.get(d, group.float_feature_index as usize);
            for _ in 0..group.threshold_count {
                if factor < forest.thresholds[k] {
                    let row_start = k * rb;
                    set_bit(&mut bm.data[row_start..row_start + rb], d);
                }
                k += 1;
            }
        }
    }
    Ok(bm)
}
