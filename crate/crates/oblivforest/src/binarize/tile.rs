//! Blocked transposition of the feature matrix.
//!
//! Document-major input keeps one document's features contiguous, so reading
//! one feature across a block of documents is a strided gather. Kernels
//! therefore transpose sections of up to 128 documents by 4 float features
//! before comparing; wider blocks reuse adjacent tiles instead of defining
//! new tile shapes.

use super::BinarizeError;
use crate::model::{FeatureMatrix, Orientation};
use std::ops::Range;

/// A transposed section: `rows` features by `cols` documents, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Tile {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `get(f, d)` is the tile-relative feature `f` of tile-relative doc `d`.
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn transposed(&self) -> Tile {
        let mut data = vec![0.0f32; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                data[c * self.rows + r] = self.get(r, c);
            }
        }
        Tile { rows: self.cols, cols: self.rows, data }
    }
}

/// Transposes the section `docs` x `features_range` (at most 128 x 4) so
/// that `tile.get(f, d) == features.get(docs.start + d, features_range.start
/// + f)`.
pub fn transpose_tile(
    features: &FeatureMatrix,
    docs: Range<usize>,
    features_range: Range<usize>,
) -> Result<Tile, BinarizeError> {
    if docs.len() > 128 || features_range.len() > 4 {
        return Err(BinarizeError::TileTooLarge {
            docs: docs.len(),
            features: features_range.len(),
        });
    }
    if docs.end > features.num_docs() {
        return Err(BinarizeError::TileOutOfRange {
            start: docs.start,
            end: docs.end,
            limit: features.num_docs(),
        });
    }
    if features_range.end > features.num_features() {
        return Err(BinarizeError::TileOutOfRange {
            start: features_range.start,
            end: features_range.end,
            limit: features.num_features(),
        });
    }
    let rows = features_range.len();
    let cols = docs.len();
    let mut data = vec![0.0f32; rows * cols];
    for (r, f) in features_range.clone().enumerate() {
        for (c, d) in docs.clone().enumerate() {
            data[r * cols + c] = features.get(d, f);
        }
    }
    Ok(Tile { rows, cols, data })
}

/// Fills `out` with one float feature over documents `doc_base..`, reading
/// zeros past the end of the matrix (the zero-filled arena rule for tail
/// documents).
pub(crate) fn fill_factor_row(
    features: &FeatureMatrix,
    feature: u32,
    doc_base: usize,
    out: &mut [f32],
) {
    let feature = feature as usize;
    let docs = features.num_docs();
    match features.orientation() {
        Orientation::DocumentMajor => {
            for (t, slot) in out.iter_mut().enumerate() {
                let d = doc_base + t;
                *slot = if d < docs { features.get(d, feature) } else { 0.0 };
            }
        }
        Orientation::FeatureMajor => {
            let row = features.feature_row(feature);
            let avail = row.len().saturating_sub(doc_base);
            let n = avail.min(out.len());
            out[..n].copy_from_slice(&row[doc_base..doc_base + n]);
            out[n..].fill(0.0);
        }
    }
}
