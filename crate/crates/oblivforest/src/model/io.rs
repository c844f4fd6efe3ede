//! Binary (de)serialization of forests and feature matrices.
//!
//! Forest file (`OBFV`, version 1), all integers little-endian:
//!
//! ```text
//! magic "OBFV" | u8 version | u32 F | u32 group_count
//! group_count * (u32 feature_index, u32 threshold_count)
//! K * f32 thresholds | 9 * u32 trees_per_height
//! sum(h*count) * u32 condition indices | sum(2^h*count) * u32 leaf answers
//! f64 scale | f64 bias
//! ```
//!
//! Feature file (`OBFX`, version 1):
//!
//! ```text
//! magic "OBFX" | u8 version | u32 D | u32 F | u8 orientation (0 = doc-major)
//! D*F * f32 values, row-major in the stored orientation
//! ```
//!
//! Decoders treat input as untrusted: every element count is validated
//! against the remaining byte count before any allocation, so corrupt
//! headers cannot trigger huge allocations, and all failure modes are
//! distinct error variants instead of panics.

use super::{FeatureGroup, FeatureMatrix, ObliviousForest, Orientation, Violation, HEIGHT_BUCKETS};
use thiserror::Error;

pub const FOREST_MAGIC: [u8; 4] = *b"OBFV";
pub const FEATURES_MAGIC: [u8; 4] = *b"OBFX";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IoError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (supported: {FORMAT_VERSION})")]
    UnsupportedVersion { found: u8 },
    #[error("truncated stream while reading {reading} (need {needed} more bytes, have {available})")]
    Truncated { reading: &'static str, needed: usize, available: usize },
    #[error("unknown orientation tag {0}")]
    UnknownOrientation(u8),
    #[error("{0} bytes of trailing data after the end of the stream")]
    TrailingData(usize),
    #[error("loaded forest violates invariants: {0:?}")]
    InvalidForest(Vec<Violation>),
    #[error("loaded matrix is invalid: {0}")]
    InvalidMatrix(#[from] super::MatrixError),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, reading: &'static str) -> Result<&'a [u8], IoError> {
        if self.remaining() < n {
            return Err(IoError::Truncated { reading, needed: n, available: self.remaining() });
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, reading: &'static str) -> Result<u8, IoError> {
        Ok(self.take(1, reading)?[0])
    }

    fn u32(&mut self, reading: &'static str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4, reading)?.try_into().unwrap()))
    }

    fn f64(&mut self, reading: &'static str) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8, reading)?.try_into().unwrap()))
    }

    /// Checks `count * elem_size` against the remaining bytes before
    /// allocating anything.
    fn check_elems(&self, count: u64, elem_size: usize, reading: &'static str) -> Result<usize, IoError> {
        let needed = count
            .checked_mul(elem_size as u64)
            .filter(|&n| n <= usize::MAX as u64)
            .ok_or(IoError::Truncated { reading, needed: usize::MAX, available: self.remaining() })?
            as usize;
        if needed > self.remaining() {
            return Err(IoError::Truncated { reading, needed, available: self.remaining() });
        }
        Ok(count as usize)
    }

    fn u32_vec(&mut self, count: u64, reading: &'static str) -> Result<Vec<u32>, IoError> {
        let count = self.check_elems(count, 4, reading)?;
        let bytes = self.take(count * 4, reading)?;
        Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f32_vec(&mut self, count: u64, reading: &'static str) -> Result<Vec<f32>, IoError> {
        let count = self.check_elems(count, 4, reading)?;
        let bytes = self.take(count * 4, reading)?;
        Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<(), IoError> {
        if self.remaining() > 0 {
            return Err(IoError::TrailingData(self.remaining()));
        }
        Ok(())
    }
}

fn read_magic(r: &mut Reader, expected: [u8; 4]) -> Result<(), IoError> {
    let found: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if found != expected {
        return Err(IoError::BadMagic { expected, found });
    }
    let version = r.u8("version")?;
    if version != FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion { found: version });
    }
    Ok(())
}

pub fn serialize_forest(forest: &ObliviousForest) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&FOREST_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&forest.num_float_features.to_le_bytes());
    out.extend_from_slice(&(forest.feature_groups.len() as u32).to_le_bytes());
    for g in &forest.feature_groups {
        out.extend_from_slice(&g.float_feature_index.to_le_bytes());
        out.extend_from_slice(&g.threshold_count.to_le_bytes());
    }
    for t in &forest.thresholds {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for c in &forest.trees_per_height {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for c in &forest.condition_indices {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for a in &forest.leaf_answers {
        out.extend_from_slice(&a.to_le_bytes());
    }
    out.extend_from_slice(&forest.scale.to_le_bytes());
    out.extend_from_slice(&forest.bias.to_le_bytes());
    out
}

pub fn deserialize_forest(bytes: &[u8]) -> Result<ObliviousForest, IoError> {
    let mut r = Reader::new(bytes);
    read_magic(&mut r, FOREST_MAGIC)?;
    let num_float_features = r.u32("float feature count")?;
    let group_count = r.u32("group count")?;
    r.check_elems(u64::from(group_count), 8, "feature groups")?;
    let mut feature_groups = Vec::with_capacity(group_count as usize);
    let mut num_binary: u64 = 0;
    for _ in 0..group_count {
        let float_feature_index = r.u32("group feature index")?;
        let threshold_count = r.u32("group threshold count")?;
        num_binary += u64::from(threshold_count);
        feature_groups.push(FeatureGroup { float_feature_index, threshold_count });
    }
    let thresholds = r.f32_vec(num_binary, "thresholds")?;
    let mut trees_per_height = [0u32; HEIGHT_BUCKETS];
    for c in &mut trees_per_height {
        *c = r.u32("tree counts")?;
    }
    let cond_len: u64 = trees_per_height
        .iter()
        .enumerate()
        .map(|(h, &c)| h as u64 * u64::from(c))
        .sum();
    let leaf_len: u64 = trees_per_height
        .iter()
        .enumerate()
        .map(|(h, &c)| (1u64 << h) * u64::from(c))
        .sum();
    let condition_indices = r.u32_vec(cond_len, "condition indices")?;
    let leaf_answers = r.u32_vec(leaf_len, "leaf answers")?;
    let scale = r.f64("scale")?;
    let bias = r.f64("bias")?;
    r.finish()?;
    let forest = ObliviousForest {
        num_float_features,
        feature_groups,
        thresholds,
        trees_per_height,
        condition_indices,
        leaf_answers,
        scale,
        bias,
    };
    let violations = forest.validate();
    if !violations.is_empty() {
        return Err(IoError::InvalidForest(violations));
    }
    Ok(forest)
}

pub fn serialize_features(matrix: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&FEATURES_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(matrix.num_docs() as u32).to_le_bytes());
    out.extend_from_slice(&(matrix.num_features() as u32).to_le_bytes());
    out.push(match matrix.orientation() {
        Orientation::DocumentMajor => 0,
        Orientation::FeatureMajor => 1,
    });
    for v in matrix.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize_features(bytes: &[u8]) -> Result<FeatureMatrix, IoError> {
    let mut r = Reader::new(bytes);
    read_magic(&mut r, FEATURES_MAGIC)?;
    let num_docs = r.u32("doc count")?;
    let num_features = r.u32("feature count")?;
    let orientation = match r.u8("orientation")? {
        0 => Orientation::DocumentMajor,
        1 => Orientation::FeatureMajor,
        other => return Err(IoError::UnknownOrientation(other)),
    };
    let values = r.f32_vec(u64::from(num_docs) * u64::from(num_features), "values")?;
    r.finish()?;
    let matrix =
        FeatureMatrix::from_values(num_docs as usize, num_features as usize, orientation, &values)?;
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_features, generate_forest, SyntheticSpec};

    fn sample_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_float_features: 5,
            num_binary_features: 17,
            trees_per_height: [1, 2, 0, 1, 0, 0, 2, 0, 1],
            seed: 11,
            doc_count: 0,
        }
    }

    #[test]
    fn forest_roundtrip_is_identity() {
        let forest = generate_forest(&sample_spec()).unwrap();
        let bytes = serialize_forest(&forest);
        assert_eq!(deserialize_forest(&bytes).unwrap(), forest);
    }

    #[test]
    fn features_roundtrip_is_identity() {
        let m = generate_features(13, 5, 3);
        assert_eq!(deserialize_features(&serialize_features(&m)).unwrap(), m);
        let t = m.transposed();
        assert_eq!(deserialize_features(&serialize_features(&t)).unwrap(), t);
    }

    #[test]
    fn wrong_magic_is_distinct() {
        let mut bytes = serialize_forest(&generate_forest(&sample_spec()).unwrap());
        bytes[0] = b'X';
        assert!(matches!(deserialize_forest(&bytes), Err(IoError::BadMagic { .. })));
        // A feature file is not a forest file.
        let feat = serialize_features(&generate_features(2, 2, 1));
        assert!(matches!(deserialize_forest(&feat), Err(IoError::BadMagic { .. })));
    }

    #[test]
    fn bad_version_is_distinct() {
        let mut bytes = serialize_forest(&generate_forest(&sample_spec()).unwrap());
        bytes[4] = 9;
        assert!(matches!(
            deserialize_forest(&bytes),
            Err(IoError::UnsupportedVersion { found: 9 })
        ));
    }

    #[test]
    fn truncation_mid_thresholds_is_distinct() {
        let forest = generate_forest(&sample_spec()).unwrap();
        let bytes = serialize_forest(&forest);
        // Header is 4+1+4+4 plus 8 bytes per group; cut inside the threshold
        // block.
        let cut = 13 + forest.feature_groups.len() * 8 + 6;
        assert!(matches!(
            deserialize_forest(&bytes[..cut]),
            Err(IoError::Truncated { reading: "thresholds", .. })
        ));
    }

    #[test]
    fn truncation_anywhere_never_panics() {
        let forest = generate_forest(&sample_spec()).unwrap();
        let bytes = serialize_forest(&forest);
        for cut in 0..bytes.len() {
            assert!(deserialize_forest(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = serialize_forest(&generate_forest(&sample_spec()).unwrap());
        bytes.push(0);
        assert!(matches!(deserialize_forest(&bytes), Err(IoError::TrailingData(1))));
    }

    #[test]
    fn oversized_counts_fail_before_allocating() {
        // Claims u32::MAX groups with only a few bytes behind the header.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FOREST_MAGIC);
        bytes.push(FORMAT_VERSION);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(matches!(
            deserialize_forest(&bytes),
            Err(IoError::Truncated { reading: "feature groups", .. })
        ));
    }

    #[test]
    fn invalid_forest_is_reported_after_load() {
        let mut forest = generate_forest(&sample_spec()).unwrap();
        forest.condition_indices[0] = 999; // out of range, lengths intact
        let bytes = serialize_forest(&forest);
        assert!(matches!(deserialize_forest(&bytes), Err(IoError::InvalidForest(_))));
    }

    #[test]
    fn nan_feature_values_rejected() {
        let m = generate_features(2, 2, 1);
        let mut bytes = serialize_features(&m);
        let tail = bytes.len() - 4;
        bytes[tail..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(deserialize_features(&bytes), Err(IoError::InvalidMatrix(_))));
    }
}
