//! Deterministic synthetic model and input generation.

use super::{FeatureGroup, FeatureMatrix, ObliviousForest, Orientation, HEIGHT_BUCKETS};
use crate::rng::SplitMix64;
use thiserror::Error;

/// Shape parameters for a synthetic forest and its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSpec {
    /// Float feature count F.
    pub num_float_features: u32,
    /// Binary feature count K.
    pub num_binary_features: u32,
    /// Tree counts per height 0..=8.
    pub trees_per_height: [u32; HEIGHT_BUCKETS],
    pub seed: u64,
    /// Document count used when generating matching inputs.
    pub doc_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("num_float_features must be at least 1")]
    NoFloatFeatures,
    #[error("num_binary_features must be at least 1 when any tree has height > 0")]
    NoBinaryFeatures,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.num_float_features == 0 {
            return Err(SpecError::NoFloatFeatures);
        }
        let needs_conditions = self.trees_per_height[1..].iter().any(|&c| c > 0);
        if needs_conditions && self.num_binary_features == 0 {
            return Err(SpecError::NoBinaryFeatures);
        }
        Ok(())
    }
}

/// Generates a valid forest, a pure function of the spec.
///
/// The K binary features are spread round-robin over the F float features
/// (remainder to the lowest feature indices). Thresholds are uniform in
/// `[0, 1)`, condition indices uniform in `[0, K)`, leaf answers uniform over
/// the full 32-bit range. Trees are emitted in descending-height order.
pub fn generate_forest(spec: &SyntheticSpec) -> Result<ObliviousForest, SpecError> {
    spec.validate()?;
    let f = spec.num_float_features;
    let k = spec.num_binary_features;

    let base = k / f;
    let rem = k % f;
    let mut feature_groups = Vec::new();
    for feature in 0..f {
        let count = base + u32::from(feature < rem);
        if count > 0 {
            feature_groups.push(FeatureGroup {
                float_feature_index: feature,
                threshold_count: count,
            });
        }
    }

    let mut thresholds = Vec::with_capacity(k as usize);
    let mut rng = SplitMix64::stream(spec.seed, "thresholds");
    for _ in 0..k {
        thresholds.push(rng.next_unit_f32());
    }

    let mut condition_indices = Vec::new();
    let mut leaf_answers = Vec::new();
    let mut cond_rng = SplitMix64::stream(spec.seed, "conditions");
    let mut leaf_rng = SplitMix64::stream(spec.seed, "leaves");
    for height in (0..HEIGHT_BUCKETS).rev() {
        for _ in 0..spec.trees_per_height[height] {
            for _ in 0..height {
                condition_indices.push(cond_rng.next_below(k));
            }
            for _ in 0..1usize << height {
                leaf_answers.push(leaf_rng.next_u32());
            }
        }
    }

    Ok(ObliviousForest {
        num_float_features: f,
        feature_groups,
        thresholds,
        trees_per_height: spec.trees_per_height,
        condition_indices,
        leaf_answers,
        scale: 1.0,
        bias: 0.0,
    })
}

/// Document-major matrix of uniform `[0, 1)` values, a pure function of
/// `(doc_count, num_features, seed)`.
pub fn generate_features(doc_count: usize, num_features: usize, seed: u64) -> FeatureMatrix {
    let mut m = FeatureMatrix::zeroed(doc_count, num_features, Orientation::DocumentMajor);
    let mut rng = SplitMix64::stream(seed, "features");
    for d in 0..doc_count {
        for f in 0..num_features {
            m.set(d, f, rng.next_unit_f32());
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_feature_hundred_thresholds() {
        let spec = SyntheticSpec {
            num_float_features: 1,
            num_binary_features: 100,
            trees_per_height: [0; HEIGHT_BUCKETS],
            seed: 7,
            doc_count: 0,
        };
        let forest = generate_forest(&spec).unwrap();
        assert_eq!(
            forest.feature_groups,
            vec![FeatureGroup { float_feature_index: 0, threshold_count: 100 }]
        );
        assert_eq!(forest.thresholds.len(), 100);
        assert!(forest.condition_indices.is_empty());
        assert!(forest.leaf_answers.is_empty());
        assert!(forest.validate().is_empty());
    }

    #[test]
    fn treeless_spec_has_empty_arrays() {
        let spec = SyntheticSpec {
            num_float_features: 1,
            num_binary_features: 1,
            trees_per_height: [0; HEIGHT_BUCKETS],
            seed: 1,
            doc_count: 0,
        };
        let forest = generate_forest(&spec).unwrap();
        assert_eq!(forest.condition_indices.len(), 0);
        assert_eq!(forest.leaf_answers.len(), 0);
    }

    #[test]
    fn hundred_trees_per_height_lengths() {
        // Direct summation oracle: sum h*100 and sum 2^h*100 over h=0..=8.
        let mut cond = 0u64;
        let mut leaf = 0u64;
        for h in 0..=8u64 {
            cond += h * 100;
            leaf += (1 << h) * 100;
        }
        assert_eq!(cond, 3600);
        assert_eq!(leaf, 51100);

        let spec = SyntheticSpec {
            num_float_features: 100,
            num_binary_features: 100,
            trees_per_height: [100; HEIGHT_BUCKETS],
            seed: 3,
            doc_count: 0,
        };
        let forest = generate_forest(&spec).unwrap();
        assert_eq!(forest.condition_indices.len() as u64, cond);
        assert_eq!(forest.leaf_answers.len() as u64, leaf);
        assert!(forest.validate().is_empty());
    }

    #[test]
    fn round_robin_distribution() {
        let spec = SyntheticSpec {
            num_float_features: 3,
            num_binary_features: 8,
            trees_per_height: [0; HEIGHT_BUCKETS],
            seed: 0,
            doc_count: 0,
        };
        let forest = generate_forest(&spec).unwrap();
        let counts: Vec<u32> = forest.feature_groups.iter().map(|g| g.threshold_count).collect();
        assert_eq!(counts, vec![3, 3, 2]);
        // Fewer binary than float features: trailing features get no group.
        let spec = SyntheticSpec { num_binary_features: 2, ..spec };
        let forest = generate_forest(&spec).unwrap();
        let idx: Vec<u32> =
            forest.feature_groups.iter().map(|g| g.float_feature_index).collect();
        assert_eq!(idx, vec![0, 1]);
    }

    #[test]
    fn invalid_specs_name_the_bound() {
        let spec = SyntheticSpec {
            num_float_features: 0,
            num_binary_features: 1,
            trees_per_height: [0; HEIGHT_BUCKETS],
            seed: 0,
            doc_count: 0,
        };
        assert_eq!(generate_forest(&spec), Err(SpecError::NoFloatFeatures));
        let mut trees_per_height = [0; HEIGHT_BUCKETS];
        trees_per_height[4] = 1;
        let spec = SyntheticSpec {
            num_float_features: 1,
            num_binary_features: 0,
            trees_per_height,
            seed: 0,
            doc_count: 0,
        };
        assert_eq!(generate_forest(&spec), Err(SpecError::NoBinaryFeatures));
        // Height-0 trees need no binary features.
        let mut trees_per_height = [0; HEIGHT_BUCKETS];
        trees_per_height[0] = 5;
        let spec = SyntheticSpec { trees_per_height, ..spec };
        assert!(generate_forest(&spec).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec {
            num_float_features: 7,
            num_binary_features: 23,
            trees_per_height: [2, 1, 0, 3, 0, 0, 1, 0, 2],
            seed: 0x5eed_cafe,
            doc_count: 0,
        };
        assert_eq!(generate_forest(&spec).unwrap(), generate_forest(&spec).unwrap());
    }

    #[test]
    fn features_deterministic_and_in_range() {
        let a = generate_features(3, 2, 9);
        let b = generate_features(3, 2, 9);
        assert_eq!(a, b);
        let big = generate_features(1024, 100, 4);
        assert_eq!(big.values().len(), 102_400);
        assert!(big.values().iter().all(|v| (0.0..1.0).contains(v)));
        let empty = generate_features(0, 5, 1);
        assert_eq!(empty.num_docs(), 0);
        assert_eq!(empty.values().len(), 0);
    }
}
