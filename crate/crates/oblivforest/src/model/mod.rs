//! Oblivious-forest data model.
//!
//! An oblivious tree of height `h` is `h` threshold conditions plus `2^h`
//! leaf answers; every node at the same depth shares one condition. A forest
//! stores its trees flattened in descending-height order, so tree-application
//! kernels walk conditions and leaves with two running offsets and never
//! re-sort.

mod synth;

pub mod io;

pub use synth::{generate_features, generate_forest, SpecError, SyntheticSpec};

use crate::buf::AlignedF32;
use thiserror::Error;

/// Maximum supported tree height; a leaf index always fits in one byte.
pub const MAX_TREE_HEIGHT: usize = 8;
/// Number of tree-count buckets (heights `0..=MAX_TREE_HEIGHT`).
pub const HEIGHT_BUCKETS: usize = MAX_TREE_HEIGHT + 1;

/// One run of binary features derived from a single float feature: the group
/// contributes `threshold_count` consecutive binary features, each comparing
/// that float feature against its own threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureGroup {
    pub float_feature_index: u32,
    pub threshold_count: u32,
}

/// A forest of oblivious trees over binarized float features.
///
/// Binary feature `k` is the predicate `factor[group(k).float_feature_index]
/// < thresholds[k]` (strict; ties compare false). Trees are stored in
/// descending-height order: `condition_indices` holds `height` binary-feature
/// indices per tree and `leaf_answers` holds `2^height` values per tree, both
/// flattened in the same tree order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliviousForest {
    pub num_float_features: u32,
    pub feature_groups: Vec<FeatureGroup>,
    pub thresholds: Vec<f32>,
    /// `trees_per_height[h]` = number of trees of height `h`.
    pub trees_per_height: [u32; HEIGHT_BUCKETS],
    pub condition_indices: Vec<u32>,
    pub leaf_answers: Vec<u32>,
    pub scale: f64,
    pub bias: f64,
}

/// Per-tree storage offsets: prefix sums of heights and of `2^height` over
/// all preceding trees in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLayout {
    pub height: u32,
    pub condition_base: usize,
    pub leaf_base: usize,
}

/// One structural invariant violation. `validate` reports all of them, not
/// just the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("feature group {group} references float feature {feature} out of range (num_float_features = {limit})")]
    GroupFeatureOutOfRange { group: usize, feature: u32, limit: u32 },
    #[error("threshold array length {actual} does not match the {declared} binary features declared by the groups")]
    ThresholdLenMismatch { declared: u64, actual: usize },
    #[error("threshold {position} is not finite")]
    NonFiniteThreshold { position: usize },
    #[error("condition index out of range: value {value} at position {position} (num_binary_features = {limit})")]
    ConditionIndexOutOfRange { position: usize, value: u32, limit: usize },
    #[error("condition index array length {actual} does not match sum of heights {expected}")]
    ConditionLenMismatch { expected: u64, actual: usize },
    #[error("leaf array length {actual} does not match sum of leaf counts {expected}")]
    LeafLenMismatch { expected: u64, actual: usize },
}

impl ObliviousForest {
    /// Total number of binary features declared by the feature groups.
    pub fn num_binary_features(&self) -> usize {
        self.feature_groups
            .iter()
            .map(|g| g.threshold_count as usize)
            .sum()
    }

    pub fn num_trees(&self) -> usize {
        self.trees_per_height.iter().map(|&c| c as usize).sum()
    }

    /// Expected `condition_indices` length: sum of `h * trees_per_height[h]`.
    pub fn expected_condition_len(&self) -> u64 {
        self.trees_per_height
            .iter()
            .enumerate()
            .map(|(h, &c)| h as u64 * u64::from(c))
            .sum()
    }

    /// Expected `leaf_answers` length: sum of `2^h * trees_per_height[h]`.
    pub fn expected_leaf_len(&self) -> u64 {
        self.trees_per_height
            .iter()
            .enumerate()
            .map(|(h, &c)| (1u64 << h) * u64::from(c))
            .sum()
    }

    /// `(float_feature_index, threshold)` per binary feature, in order.
    pub fn binary_feature_descriptors(&self) -> impl Iterator<Item = (u32, f32)> + '_ {
        self.feature_groups
            .iter()
            .flat_map(|g| std::iter::repeat(g.float_feature_index).take(g.threshold_count as usize))
            .zip(self.thresholds.iter().copied())
    }

    /// Checks every structural invariant and returns all violations.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (g, group) in self.feature_groups.iter().enumerate() {
            if group.float_feature_index >= self.num_float_features {
                out.push(Violation::GroupFeatureOutOfRange {
                    group: g,
                    feature: group.float_feature_index,
                    limit: self.num_float_features,
                });
            }
        }
        let declared: u64 = self
            .feature_groups
            .iter()
            .map(|g| u64::from(g.threshold_count))
            .sum();
        if declared != self.thresholds.len() as u64 {
            out.push(Violation::ThresholdLenMismatch {
                declared,
                actual: self.thresholds.len(),
            });
        }
        for (i, t) in self.thresholds.iter().enumerate() {
            if !t.is_finite() {
                out.push(Violation::NonFiniteThreshold { position: i });
            }
        }
        let num_binary = self.thresholds.len();
        for (i, &c) in self.condition_indices.iter().enumerate() {
            if c as usize >= num_binary {
                out.push(Violation::ConditionIndexOutOfRange {
                    position: i,
                    value: c,
                    limit: num_binary,
                });
            }
        }
        let expected_cond = self.expected_condition_len();
        if expected_cond != self.condition_indices.len() as u64 {
            out.push(Violation::ConditionLenMismatch {
                expected: expected_cond,
                actual: self.condition_indices.len(),
            });
        }
        let expected_leaf = self.expected_leaf_len();
        if expected_leaf != self.leaf_answers.len() as u64 {
            out.push(Violation::LeafLenMismatch {
                expected: expected_leaf,
                actual: self.leaf_answers.len(),
            });
        }
        out
    }

    /// Storage offsets for every tree, in storage (descending-height) order.
    pub fn tree_layout(&self) -> Vec<TreeLayout> {
        let mut out = Vec::with_capacity(self.num_trees());
        let mut condition_base = 0usize;
        let mut leaf_base = 0usize;
        for height in (0..HEIGHT_BUCKETS).rev() {
            for _ in 0..self.trees_per_height[height] {
                out.push(TreeLayout {
                    height: height as u32,
                    condition_base,
                    leaf_base,
                });
                condition_base += height;
                leaf_base += 1usize << height;
            }
        }
        out
    }
}

/// Storage orientation of a [`FeatureMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Rows are documents; `values[d][f]`.
    DocumentMajor,
    /// Rows are features; `values[f][d]` (pre-transposed input).
    FeatureMajor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MatrixError {
    #[error("value count {actual} does not match num_docs * num_features = {expected}")]
    LenMismatch { expected: usize, actual: usize },
    #[error("value at row {row}, column {col} is not finite")]
    NonFiniteValue { row: usize, col: usize },
}

/// Dense 32-bit float inputs: `num_docs` documents by `num_features` float
/// features, stored row-major in either orientation. Rows may carry trailing
/// stride padding (see [`crate::pipeline::pad_arena`]); logical content is
/// what `get`, equality, and serialization see.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    num_docs: usize,
    num_features: usize,
    orientation: Orientation,
    row_stride: usize,
    data: AlignedF32,
}

impl FeatureMatrix {
    /// Zero-filled matrix with tightly packed rows.
    pub fn zeroed(num_docs: usize, num_features: usize, orientation: Orientation) -> Self {
        let (rows, cols) = match orientation {
            Orientation::DocumentMajor => (num_docs, num_features),
            Orientation::FeatureMajor => (num_features, num_docs),
        };
        Self {
            num_docs,
            num_features,
            orientation,
            row_stride: cols,
            data: AlignedF32::zeroed(rows * cols),
        }
    }

    /// Zero-filled matrix whose row stride is padded so every row starts on a
    /// 64-byte boundary.
    pub(crate) fn zeroed_aligned_rows(
        num_docs: usize,
        num_features: usize,
        orientation: Orientation,
    ) -> Self {
        let (rows, cols) = match orientation {
            Orientation::DocumentMajor => (num_docs, num_features),
            Orientation::FeatureMajor => (num_features, num_docs),
        };
        let stride = cols.div_ceil(16) * 16;
        Self {
            num_docs,
            num_features,
            orientation,
            row_stride: stride,
            data: AlignedF32::zeroed(rows * stride),
        }
    }

    /// Builds a matrix from row-major values in the given orientation.
    /// Rejects length mismatches and non-finite values.
    pub fn from_values(
        num_docs: usize,
        num_features: usize,
        orientation: Orientation,
        values: &[f32],
    ) -> Result<Self, MatrixError> {
        let expected = num_docs
            .checked_mul(num_features)
            .ok_or(MatrixError::LenMismatch { expected: usize::MAX, actual: values.len() })?;
        if values.len() != expected {
            return Err(MatrixError::LenMismatch { expected, actual: values.len() });
        }
        let mut m = Self::zeroed(num_docs, num_features, orientation);
        let cols = m.row_cols();
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(MatrixError::NonFiniteValue { row: i / cols, col: i % cols });
            }
        }
        m.data.copy_from_slice(values);
        Ok(m)
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    fn row_count(&self) -> usize {
        match self.orientation {
            Orientation::DocumentMajor => self.num_docs,
            Orientation::FeatureMajor => self.num_features,
        }
    }

    fn row_cols(&self) -> usize {
        match self.orientation {
            Orientation::DocumentMajor => self.num_features,
            Orientation::FeatureMajor => self.num_docs,
        }
    }

    #[inline]
    fn row(&self, r: usize) -> &[f32] {
        let start = r * self.row_stride;
        &self.data[start..start + self.row_cols()]
    }

    #[inline]
    fn row_mut(&mut self, r: usize) -> &mut [f32] {
        let cols = self.row_cols();
        let start = r * self.row_stride;
        &mut self.data[start..start + cols]
    }

    /// Value for `(doc, feature)` regardless of orientation.
    #[inline]
    pub fn get(&self, doc: usize, feature: usize) -> f32 {
        debug_assert!(doc < self.num_docs && feature < self.num_features);
        match self.orientation {
            Orientation::DocumentMajor => self.data[doc * self.row_stride + feature],
            Orientation::FeatureMajor => self.data[feature * self.row_stride + doc],
        }
    }

    #[inline]
    pub(crate) fn set(&mut self, doc: usize, feature: usize, value: f32) {
        match self.orientation {
            Orientation::DocumentMajor => self.data[doc * self.row_stride + feature] = value,
            Orientation::FeatureMajor => self.data[feature * self.row_stride + doc] = value,
        }
    }

    /// All float features of one document (document-major matrices only).
    #[inline]
    pub fn doc_row(&self, doc: usize) -> &[f32] {
        assert_eq!(self.orientation, Orientation::DocumentMajor);
        self.row(doc)
    }

    /// One float feature across all documents (feature-major matrices only).
    #[inline]
    pub fn feature_row(&self, feature: usize) -> &[f32] {
        assert_eq!(self.orientation, Orientation::FeatureMajor);
        self.row(feature)
    }

    /// Copy with the opposite orientation and identical logical content.
    pub fn transposed(&self) -> FeatureMatrix {
        let orientation = match self.orientation {
            Orientation::DocumentMajor => Orientation::FeatureMajor,
            Orientation::FeatureMajor => Orientation::DocumentMajor,
        };
        let mut out = Self::zeroed(self.num_docs, self.num_features, orientation);
        for d in 0..self.num_docs {
            for f in 0..self.num_features {
                out.set(d, f, self.get(d, f));
            }
        }
        out
    }

    /// Copy restricted to the first `docs` documents.
    pub fn head(&self, docs: usize) -> FeatureMatrix {
        assert!(docs <= self.num_docs);
        let mut out = Self::zeroed(docs, self.num_features, self.orientation);
        for d in 0..docs {
            for f in 0..self.num_features {
                out.set(d, f, self.get(d, f));
            }
        }
        out
    }

    /// Row-major logical values in this matrix's orientation, stride removed.
    pub fn values(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.num_docs * self.num_features);
        for r in 0..self.row_count() {
            out.extend_from_slice(self.row(r));
        }
        out
    }
}

impl PartialEq for FeatureMatrix {
    /// Logical equality: dimensions, orientation, and values. Stride padding
    /// is excluded.
    fn eq(&self, other: &Self) -> bool {
        if self.num_docs != other.num_docs
            || self.num_features != other.num_features
            || self.orientation != other.orientation
        {
            return false;
        }
        (0..self.row_count()).all(|r| self.row(r) == other.row(r))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_forest() -> ObliviousForest {
        // Two trees: heights 2 and 1, over 3 binary features of one float
        // feature.
        let mut trees_per_height = [0u32; HEIGHT_BUCKETS];
        trees_per_height[2] = 1;
        trees_per_height[1] = 1;
        ObliviousForest {
            num_float_features: 1,
            feature_groups: vec![FeatureGroup { float_feature_index: 0, threshold_count: 3 }],
            thresholds: vec![0.25, 0.5, 0.75],
            trees_per_height,
            condition_indices: vec![0, 2, 1],
            leaf_answers: vec![1, 2, 3, 4, 10, 20],
            scale: 1.0,
            bias: 0.0,
        }
    }

    #[test]
    fn valid_forest_passes() {
        assert!(tiny_forest().validate().is_empty());
    }

    #[test]
    fn condition_index_at_limit_is_reported() {
        let mut f = tiny_forest();
        f.condition_indices[1] = 3; // == num_binary_features
        let v = f.validate();
        assert!(v.iter().any(|v| matches!(
            v,
            Violation::ConditionIndexOutOfRange { position: 1, value: 3, limit: 3 }
        )));
        assert!(v[0].to_string().contains("condition index out of range"));
    }

    #[test]
    fn truncated_leaf_array_is_reported() {
        let mut f = tiny_forest();
        f.leaf_answers.pop();
        let v = f.validate();
        assert!(v.iter().any(|v| matches!(
            v,
            Violation::LeafLenMismatch { expected: 6, actual: 5 }
        )));
        assert!(v[0].to_string().contains("leaf array length"));
    }

    #[test]
    fn reports_every_violation_not_just_first() {
        let mut f = tiny_forest();
        f.condition_indices[0] = 9;
        f.leaf_answers.pop();
        f.thresholds[1] = f32::NAN;
        assert_eq!(f.validate().len(), 3);
    }

    #[test]
    fn layout_matches_prefix_sums() {
        // Heights [6, 6, 3] -> condition bases [0, 6, 12], leaf bases
        // [0, 64, 128].
        let mut trees_per_height = [0u32; HEIGHT_BUCKETS];
        trees_per_height[6] = 2;
        trees_per_height[3] = 1;
        let f = ObliviousForest {
            num_float_features: 1,
            feature_groups: vec![FeatureGroup { float_feature_index: 0, threshold_count: 1 }],
            thresholds: vec![0.5],
            trees_per_height,
            condition_indices: vec![0; 15],
            leaf_answers: vec![0; 136],
            scale: 1.0,
            bias: 0.0,
        };
        let layout = f.tree_layout();
        assert_eq!(
            layout,
            vec![
                TreeLayout { height: 6, condition_base: 0, leaf_base: 0 },
                TreeLayout { height: 6, condition_base: 6, leaf_base: 64 },
                TreeLayout { height: 3, condition_base: 12, leaf_base: 128 },
            ]
        );
    }

    #[test]
    fn single_tree_layout() {
        let mut trees_per_height = [0u32; HEIGHT_BUCKETS];
        trees_per_height[3] = 1;
        let f = ObliviousForest {
            num_float_features: 1,
            feature_groups: vec![FeatureGroup { float_feature_index: 0, threshold_count: 1 }],
            thresholds: vec![0.5],
            trees_per_height,
            condition_indices: vec![0; 3],
            leaf_answers: vec![0; 8],
            scale: 1.0,
            bias: 0.0,
        };
        assert_eq!(
            f.tree_layout(),
            vec![TreeLayout { height: 3, condition_base: 0, leaf_base: 0 }]
        );
    }

    #[test]
    fn empty_forest_layout() {
        let f = ObliviousForest {
            num_float_features: 1,
            feature_groups: vec![],
            thresholds: vec![],
            trees_per_height: [0; HEIGHT_BUCKETS],
            condition_indices: vec![],
            leaf_answers: vec![],
            scale: 1.0,
            bias: 0.0,
        };
        assert!(f.tree_layout().is_empty());
        assert!(f.validate().is_empty());
    }

    #[test]
    fn matrix_roundtrip_and_transpose() {
        let values = [0.0f32, 0.1, 0.2, 0.3, 0.4, 0.5];
        let m = FeatureMatrix::from_values(3, 2, Orientation::DocumentMajor, &values).unwrap();
        assert_eq!(m.get(2, 1), 0.5);
        let t = m.transposed();
        assert_eq!(t.orientation(), Orientation::FeatureMajor);
        for d in 0..3 {
            for f in 0..2 {
                assert_eq!(m.get(d, f), t.get(d, f));
            }
        }
        assert_eq!(t.transposed(), m);
    }

    #[test]
    fn matrix_rejects_nan_and_bad_len() {
        let err = FeatureMatrix::from_values(1, 2, Orientation::DocumentMajor, &[0.0, f32::NAN]);
        assert!(matches!(err, Err(MatrixError::NonFiniteValue { row: 0, col: 1 })));
        let err = FeatureMatrix::from_values(1, 2, Orientation::DocumentMajor, &[0.0]);
        assert!(matches!(err, Err(MatrixError::LenMismatch { expected: 2, actual: 1 })));
    }
}
