//! 64-byte-aligned float storage backing feature matrices.

use std::ops::{Deref, DerefMut};

/// `Vec<f32>` with the first element aligned to a 64-byte boundary so that
/// rows padded to 16-float multiples start on cache-line boundaries.
#[derive(Debug)]
pub(crate) struct AlignedF32 {
    raw: Vec<f32>,
    start: usize,
    len: usize,
}

impl AlignedF32 {
    pub fn zeroed(len: usize) -> Self {
        let raw = vec![0.0f32; len + 16];
        let off = raw.as_ptr().align_offset(64);
        let start = if off <= 16 { off } else { 0 };
        Self { raw, start, len }
    }
}

impl Deref for AlignedF32 {
    type Target = [f32];
    fn deref(&self) -> &[f32] {
        &self.raw[self.start..self.start + self.len]
    }
}

impl DerefMut for AlignedF32 {
    fn deref_mut(&mut self) -> &mut [f32] {
        &mut self.raw[self.start..self.start + self.len]
    }
}

impl Clone for AlignedF32 {
    fn clone(&self) -> Self {
        let mut out = Self::zeroed(self.len);
        out.copy_from_slice(self);
        out
    }
}

impl PartialEq for AlignedF32 {
    fn eq(&self, other: &Self) -> bool {
        **self == **other
    }
}
