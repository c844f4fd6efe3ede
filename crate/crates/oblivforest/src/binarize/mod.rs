//! Binarization: evaluating `factor < threshold` for every binary feature
//! over a document batch, bit-packed per feature.
//!
//! Kernels differ in how documents are blocked and where a document's bit
//! lands inside a block:
//!
//! * `naive` — per-document scalar loop, ordered bits.
//! * `mx128` — blocks of 128 documents in 8 subgroups of 16; pack
//!   instructions leave bits in the interleaved-128 permutation.
//! * `mx256` / `mx512` — the same scheme widened to 256/512-document blocks;
//!   the per-lane behavior of the wider pack instructions yields different
//!   interleaved permutations.
//! * `ord16` / `ord32` / `ord64` — mask-producing compares emit bits already
//!   in document order, in subgroups of 16/32/64.
//!
//! Each kernel also accepts pre-transposed (feature-major) input, skipping
//! the internal transposition step. [`doc_of_offset`] defines every layout's
//! bit permutation; [`BitMatrix::canonicalize`] rewrites any layout into the
//! ordered one so outputs can be compared bit for bit.

mod interleaved;
mod naive;
mod ordered;
mod tile;

pub use naive::binarize_naive;
pub use tile::{transpose_tile, Tile};

use crate::model::{FeatureMatrix, ObliviousForest, Orientation};
use crate::pipeline::{CapabilitySet, Capability};
use crate::rng::fnv1a64;
use std::borrow::Cow;
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

/// Bit placement scheme inside one document block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BitLayout {
    /// Bit `i` of a block belongs to document `i` of that block.
    Ordered,
    /// 128-document blocks; bit `i` belongs to document `i%8*16 + i/8`.
    Interleaved128,
    /// 256-document blocks (see [`doc_of_offset`] for the permutation).
    Interleaved256,
    /// 512-document blocks (see [`doc_of_offset`] for the permutation).
    Interleaved512,
}

impl BitLayout {
    /// Intrinsic block width in bits for interleaved layouts.
    pub fn interleaved_bits(self) -> Option<usize> {
        match self {
            BitLayout::Ordered => None,
            BitLayout::Interleaved128 => Some(128),
            BitLayout::Interleaved256 => Some(256),
            BitLayout::Interleaved512 => Some(512),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BinarizeError {
    #[error("feature matrix has {actual} float features but the model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("kernel `{kernel}` requires {expected:?} input, got {actual:?}")]
    OrientationMismatch { kernel: KernelId, expected: Orientation, actual: Orientation },
    #[error("bit offset {offset} out of range for {layout:?}")]
    OffsetOutOfRange { layout: BitLayout, offset: usize },
    #[error("document {doc} out of range ({limit} documents)")]
    DocOutOfRange { doc: usize, limit: usize },
    #[error("binary feature {feature} out of range ({limit} features)")]
    FeatureOutOfRange { feature: usize, limit: usize },
    #[error("tile of {docs} documents x {features} features exceeds the 128x4 tile shape")]
    TileTooLarge { docs: usize, features: usize },
    #[error("tile range [{start}, {end}) out of bounds (limit {limit})")]
    TileOutOfRange { start: usize, end: usize, limit: usize },
    #[error("kernel `{kernel}` needs the {needed} capability, which is not enabled")]
    CapabilityMissing { kernel: KernelId, needed: Capability },
    #[error("capability {needed} was forced on but the host CPU does not support it")]
    ForcedAboveHardware { needed: Capability },
    #[error("unknown binarize kernel `{0}`")]
    UnknownKernel(String),
}

/// 0-based document ordinal carried by bit `offset` within one block.
///
/// The interleaved permutations invert what the widening pack instructions do
/// to comparison masks; the ordered layout is the identity.
pub fn doc_of_offset(layout: BitLayout, offset: usize) -> Result<usize, BinarizeError> {
    let i = offset;
    match layout {
        BitLayout::Ordered => Ok(i),
        BitLayout::Interleaved128 => {
            if i >= 128 {
                return Err(BinarizeError::OffsetOutOfRange { layout, offset });
            }
            Ok(i % 8 * 16 + i / 8)
        }
        BitLayout::Interleaved256 => {
            if i >= 256 {
                return Err(BinarizeError::OffsetOutOfRange { layout, offset });
            }
            Ok(i / 8 % 4 + i / 8 / 4 * 8 % 32 + i / 8 / 4 * 8 / 32 * 4 + i % 8 * 32)
        }
        BitLayout::Interleaved512 => {
            if i >= 512 {
                return Err(BinarizeError::OffsetOutOfRange { layout, offset });
            }
            Ok(i / 8 % 4 + i / 8 / 4 * 16 % 64 + i / 8 / 4 * 16 / 64 * 4 + i % 8 * 64)
        }
    }
}

/// Inverse of [`doc_of_offset`]: the bit offset carrying `doc`'s bit.
pub fn offset_of_doc(layout: BitLayout, doc: usize) -> Result<usize, BinarizeError> {
    match layout {
        BitLayout::Ordered => Ok(doc),
        _ => {
            let table = offset_of_doc_table(layout);
            table
                .get(doc)
                .map(|&o| o as usize)
                .ok_or(BinarizeError::OffsetOutOfRange { layout, offset: doc })
        }
    }
}

fn build_inverse_table(layout: BitLayout, bits: usize) -> Vec<u16> {
    let mut table = vec![0u16; bits];
    for offset in 0..bits {
        let doc = doc_of_offset(layout, offset).expect("offset within block");
        table[doc] = offset as u16;
    }
    table
}

/// `table[doc] = offset` for one full block of the given interleaved layout.
pub(crate) fn offset_of_doc_table(layout: BitLayout) -> &'static [u16] {
    static T128: OnceLock<Vec<u16>> = OnceLock::new();
    static T256: OnceLock<Vec<u16>> = OnceLock::new();
    static T512: OnceLock<Vec<u16>> = OnceLock::new();
    match layout {
        BitLayout::Ordered => unreachable!("ordered layout needs no table"),
        BitLayout::Interleaved128 => T128.get_or_init(|| build_inverse_table(layout, 128)),
        BitLayout::Interleaved256 => T256.get_or_init(|| build_inverse_table(layout, 256)),
        BitLayout::Interleaved512 => T512.get_or_init(|| build_inverse_table(layout, 512)),
    }
}

#[inline]
pub(crate) fn get_bit(row: &[u8], idx: usize) -> bool {
    row[idx / 8] >> (idx % 8) & 1 != 0
}

#[inline]
pub(crate) fn set_bit(row: &mut [u8], idx: usize) {
    row[idx / 8] |= 1 << (idx % 8);
}

/// Bit-packed binarization output: one row of `padded_docs` bits per binary
/// feature, split into `block_bits`-wide blocks laid out per `layout`.
///
/// Documents at ordinals `>= logical_docs` are padding. Their bits are
/// deterministic (they binarize a zero-filled arena) but carry no meaning;
/// consumers must never let them reach logical outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    layout: BitLayout,
    block_bits: usize,
    num_features: usize,
    logical_docs: usize,
    padded_docs: usize,
    data: Vec<u8>,
}

impl BitMatrix {
    pub(crate) fn zeroed(
        layout: BitLayout,
        block_bits: usize,
        num_features: usize,
        logical_docs: usize,
    ) -> Self {
        let padded = logical_docs.div_ceil(block_bits) * block_bits;
        Self::with_padding(layout, block_bits, num_features, logical_docs, padded)
    }

    pub(crate) fn with_padding(
        layout: BitLayout,
        block_bits: usize,
        num_features: usize,
        logical_docs: usize,
        padded_docs: usize,
    ) -> Self {
        if let Some(w) = layout.interleaved_bits() {
            assert_eq!(block_bits, w, "interleaved block width is fixed by the layout");
        } else {
            assert!(block_bits % 8 == 0, "ordered blocks are byte-granular");
        }
        assert!(padded_docs % block_bits == 0 && padded_docs >= logical_docs);
        let row_bytes = padded_docs / 8;
        Self {
            layout,
            block_bits,
            num_features,
            logical_docs,
            padded_docs,
            data: vec![0u8; num_features * row_bytes],
        }
    }

    pub fn layout(&self) -> BitLayout {
        self.layout
    }

    /// Documents covered by one block (equal to the block's bit width).
    pub fn block_bits(&self) -> usize {
        self.block_bits
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn logical_docs(&self) -> usize {
        self.logical_docs
    }

    pub fn padded_docs(&self) -> usize {
        self.padded_docs
    }

    pub fn num_blocks(&self) -> usize {
        self.padded_docs / self.block_bits
    }

    pub(crate) fn row_bytes(&self) -> usize {
        self.padded_docs / 8
    }

    #[inline]
    pub(crate) fn feature_bits(&self, feature: usize) -> &[u8] {
        let rb = self.row_bytes();
        &self.data[feature * rb..(feature + 1) * rb]
    }

    #[inline]
    pub(crate) fn feature_bits_mut(&mut self, feature: usize) -> &mut [u8] {
        let rb = self.row_bytes();
        &mut self.data[feature * rb..(feature + 1) * rb]
    }

    /// The `block_bits`-bit field for (binary feature, block).
    pub fn field(&self, feature: usize, block: usize) -> &[u8] {
        let fb = self.block_bits / 8;
        &self.feature_bits(feature)[block * fb..(block + 1) * fb]
    }

    pub(crate) fn field_mut(&mut self, feature: usize, block: usize) -> &mut [u8] {
        let fb = self.block_bits / 8;
        let rb = self.row_bytes();
        let start = feature * rb + block * fb;
        &mut self.data[start..start + fb]
    }

    /// Logical value of binary feature `feature` for document `doc`,
    /// independent of layout.
    pub fn bit_at(&self, feature: usize, doc: usize) -> Result<bool, BinarizeError> {
        if feature >= self.num_features {
            return Err(BinarizeError::FeatureOutOfRange { feature, limit: self.num_features });
        }
        if doc >= self.logical_docs {
            return Err(BinarizeError::DocOutOfRange { doc, limit: self.logical_docs });
        }
        let block = doc / self.block_bits;
        let offset = offset_of_doc(self.layout, doc % self.block_bits)?;
        Ok(get_bit(self.feature_bits(feature), block * self.block_bits + offset))
    }

    /// Rewrites the bits into the ordered layout. The logical bit of every
    /// document (padding included) is preserved; idempotent on ordered input.
    pub fn canonicalize(&self) -> BitMatrix {
        match self.layout {
            BitLayout::Ordered => self.clone(),
            layout => {
                let w = self.block_bits;
                let table = doc_of_offset_table(layout);
                let mut out = BitMatrix::with_padding(
                    BitLayout::Ordered,
                    8,
                    self.num_features,
                    self.logical_docs,
                    self.padded_docs,
                );
                let rb = self.row_bytes();
                for k in 0..self.num_features {
                    let src = self.feature_bits(k);
                    let dst = &mut out.data[k * rb..(k + 1) * rb];
                    for block in 0..self.padded_docs / w {
                        let base = block * w;
                        for byte in 0..w / 8 {
                            let b = src[base / 8 + byte];
                            if b == 0 {
                                continue;
                            }
                            for bit in 0..8 {
                                if b >> bit & 1 != 0 {
                                    let doc = table[byte * 8 + bit] as usize;
                                    set_bit(dst, base + doc);
                                }
                            }
                        }
                    }
                }
                out
            }
        }
    }

    fn as_canonical(&self) -> Cow<'_, BitMatrix> {
        match self.layout {
            BitLayout::Ordered => Cow::Borrowed(self),
            _ => Cow::Owned(self.canonicalize()),
        }
    }

    /// First `(feature, doc)` whose logical bit differs, comparing only the
    /// `logical_docs` documents. Layouts and padding may differ.
    pub fn logical_divergence(&self, other: &BitMatrix) -> Option<(usize, usize)> {
        assert_eq!(self.num_features, other.num_features, "feature counts differ");
        assert_eq!(self.logical_docs, other.logical_docs, "document counts differ");
        let a = self.as_canonical();
        let b = other.as_canonical();
        let docs = self.logical_docs;
        let full = docs / 8;
        let tail_mask = ((1u16 << (docs % 8)) - 1) as u8;
        for k in 0..self.num_features {
            let ra = a.feature_bits(k);
            let rb = b.feature_bits(k);
            for byte in 0..full {
                let diff = ra[byte] ^ rb[byte];
                if diff != 0 {
                    return Some((k, byte * 8 + diff.trailing_zeros() as usize));
                }
            }
            if docs % 8 != 0 {
                let diff = (ra[full] ^ rb[full]) & tail_mask;
                if diff != 0 {
                    return Some((k, full * 8 + diff.trailing_zeros() as usize));
                }
            }
        }
        None
    }

    pub fn logical_eq(&self, other: &BitMatrix) -> bool {
        self.logical_divergence(other).is_none()
    }

    /// FNV-1a over the canonical logical bits (padding masked out), prefixed
    /// with the dimensions. Identical for any layout holding the same
    /// predicate outcomes.
    pub fn logical_checksum(&self) -> u64 {
        let c = self.as_canonical();
        let docs = self.logical_docs;
        let full = docs / 8;
        let tail_mask = ((1u16 << (docs % 8)) - 1) as u8;
        let mut bytes = Vec::with_capacity(16 + self.num_features * (full + 1));
        bytes.extend_from_slice(&(self.num_features as u64).to_le_bytes());
        bytes.extend_from_slice(&(docs as u64).to_le_bytes());
        for k in 0..self.num_features {
            let row = c.feature_bits(k);
            bytes.extend_from_slice(&row[..full]);
            if docs % 8 != 0 {
                bytes.push(row[full] & tail_mask);
            }
        }
        fnv1a64(&bytes)
    }

    /// Text dump for golden tests: one `feature k: <hex bytes>` line per
    /// binary feature, padding bytes included.
    pub fn debug_dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for k in 0..self.num_features {
            write!(out, "feature {k}:").unwrap();
            for byte in self.feature_bits(k) {
                write!(out, " {byte:02x}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// `table[offset] = doc` for one full block.
pub(crate) fn doc_of_offset_table(layout: BitLayout) -> &'static [u16] {
    static T128: OnceLock<Vec<u16>> = OnceLock::new();
    static T256: OnceLock<Vec<u16>> = OnceLock::new();
    static T512: OnceLock<Vec<u16>> = OnceLock::new();
    let build = |bits: usize| -> Vec<u16> {
        (0..bits)
            .map(|i| doc_of_offset(layout, i).expect("offset within block") as u16)
            .collect()
    };
    match layout {
        BitLayout::Ordered => unreachable!("ordered layout needs no table"),
        BitLayout::Interleaved128 => T128.get_or_init(|| build(128)),
        BitLayout::Interleaved256 => T256.get_or_init(|| build(256)),
        BitLayout::Interleaved512 => T512.get_or_init(|| build(512)),
    }
}

/// Base kernel family, before the pre-transposed variant flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Naive,
    Mx128,
    Mx256,
    Mx512,
    Ord16,
    Ord32,
    Ord64,
}

impl KernelKind {
    pub const ALL: [KernelKind; 7] = [
        KernelKind::Naive,
        KernelKind::Mx128,
        KernelKind::Mx256,
        KernelKind::Mx512,
        KernelKind::Ord16,
        KernelKind::Ord32,
        KernelKind::Ord64,
    ];

    fn base_name(self) -> &'static str {
        match self {
            KernelKind::Naive => "naive",
            KernelKind::Mx128 => "mx128",
            KernelKind::Mx256 => "mx256",
            KernelKind::Mx512 => "mx512",
            KernelKind::Ord16 => "ord16",
            KernelKind::Ord32 => "ord32",
            KernelKind::Ord64 => "ord64",
        }
    }

    /// Layout the kernel emits.
    pub fn layout(self) -> BitLayout {
        match self {
            KernelKind::Naive | KernelKind::Ord16 | KernelKind::Ord32 | KernelKind::Ord64 => {
                BitLayout::Ordered
            }
            KernelKind::Mx128 => BitLayout::Interleaved128,
            KernelKind::Mx256 => BitLayout::Interleaved256,
            KernelKind::Mx512 => BitLayout::Interleaved512,
        }
    }

    /// Output block width in bits (documents per block).
    pub fn block_bits(self) -> usize {
        match self {
            KernelKind::Naive => 8,
            KernelKind::Mx128 => 128,
            KernelKind::Mx256 => 256,
            KernelKind::Mx512 => 512,
            KernelKind::Ord16 => 16,
            KernelKind::Ord32 => 32,
            KernelKind::Ord64 => 64,
        }
    }

    /// Hardware capability the vectorized path needs.
    pub fn required_capability(self) -> Capability {
        match self {
            KernelKind::Naive => Capability::Scalar,
            KernelKind::Mx128 => Capability::V128,
            KernelKind::Mx256 => Capability::V256,
            KernelKind::Mx512 => Capability::V512,
            KernelKind::Ord16 | KernelKind::Ord32 | KernelKind::Ord64 => Capability::MaskCompare,
        }
    }
}

/// CLI-facing kernel identifier: a kernel family plus the pre-transposed
/// input flag (`-t` suffix).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelId {
    pub kind: KernelKind,
    pub pretransposed: bool,
}

impl KernelId {
    pub const fn new(kind: KernelKind) -> Self {
        Self { kind, pretransposed: false }
    }

    pub const fn pretransposed(kind: KernelKind) -> Self {
        Self { kind, pretransposed: true }
    }

    /// All 14 kernel identifiers in a stable order.
    pub fn all() -> Vec<KernelId> {
        let mut out = Vec::with_capacity(KernelKind::ALL.len() * 2);
        for kind in KernelKind::ALL {
            out.push(KernelId::new(kind));
        }
        for kind in KernelKind::ALL {
            out.push(KernelId::pretransposed(kind));
        }
        out
    }

    pub fn parse(s: &str) -> Result<Self, BinarizeError> {
        let (base, pretransposed) = match s.strip_suffix("-t") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let kind = KernelKind::ALL
            .into_iter()
            .find(|k| k.base_name() == base)
            .ok_or_else(|| BinarizeError::UnknownKernel(s.to_string()))?;
        Ok(Self { kind, pretransposed })
    }

    pub fn expected_orientation(self) -> Orientation {
        if self.pretransposed {
            Orientation::FeatureMajor
        } else {
            Orientation::DocumentMajor
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.base_name())?;
        if self.pretransposed {
            f.write_str("-t")?;
        }
        Ok(())
    }
}

fn check_dims(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
) -> Result<(), BinarizeError> {
    if features.num_features() != forest.num_float_features as usize {
        return Err(BinarizeError::DimensionMismatch {
            expected: forest.num_float_features as usize,
            actual: features.num_features(),
        });
    }
    Ok(())
}

fn check_orientation(id: KernelId, features: &FeatureMatrix) -> Result<(), BinarizeError> {
    let expected = id.expected_orientation();
    if features.orientation() != expected {
        return Err(BinarizeError::OrientationMismatch {
            kernel: id,
            expected,
            actual: features.orientation(),
        });
    }
    Ok(())
}

/// Checks that `caps` enables the kernel and that the host actually has the
/// feature (a capability forced above hardware fails here, at launch).
fn check_capability(id: KernelId, caps: &CapabilitySet) -> Result<(), BinarizeError> {
    let needed = id.kind.required_capability();
    if !caps.has(needed) {
        return Err(BinarizeError::CapabilityMissing { kernel: id, needed });
    }
    if !CapabilitySet::detect().has(needed) {
        return Err(BinarizeError::ForcedAboveHardware { needed });
    }
    Ok(())
}

/// Runs the vectorized form of kernel `id` (the naive kernel is scalar by
/// definition). Fails if `caps` does not enable the kernel's tier.
pub fn run_kernel(
    id: KernelId,
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    caps: &CapabilitySet,
) -> Result<BitMatrix, BinarizeError> {
    check_orientation(id, features)?;
    check_dims(features, forest)?;
    match id.kind {
        KernelKind::Naive => naive::run(features, forest),
        KernelKind::Mx128 | KernelKind::Mx256 | KernelKind::Mx512 => {
            check_capability(id, caps)?;
            interleaved::run(features, forest, id.kind, interleaved::Path::Simd)
        }
        KernelKind::Ord16 | KernelKind::Ord32 | KernelKind::Ord64 => {
            check_capability(id, caps)?;
            ordered::run(features, forest, id.kind, ordered::Path::Simd)
        }
    }
}

/// Scalar reference twin of kernel `id`: byte-identical output, no
/// capability requirements. Serves as the fallback path and as a second
/// oracle for the vectorized kernels.
pub fn run_kernel_scalar(
    id: KernelId,
    features: &FeatureMatrix,
    forest: &ObliviousForest,
) -> Result<BitMatrix, BinarizeError> {
    check_orientation(id, features)?;
    check_dims(features, forest)?;
    match id.kind {
        KernelKind::Naive => naive::run(features, forest),
        KernelKind::Mx128 | KernelKind::Mx256 | KernelKind::Mx512 => {
            interleaved::run(features, forest, id.kind, interleaved::Path::Scalar)
        }
        KernelKind::Ord16 | KernelKind::Ord32 | KernelKind::Ord64 => {
            ordered::run(features, forest, id.kind, ordered::Path::Scalar)
        }
    }
}

/// Interleaved binarization (`mx128`/`mx256`/`mx512`) over document-major
/// input.
pub fn binarize_interleaved(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    block_bits: usize,
    caps: &CapabilitySet,
) -> Result<BitMatrix, BinarizeError> {
    let kind = match block_bits {
        128 => KernelKind::Mx128,
        256 => KernelKind::Mx256,
        512 => KernelKind::Mx512,
        _ => return Err(BinarizeError::UnknownKernel(format!("mx{block_bits}"))),
    };
    run_kernel(KernelId::new(kind), features, forest, caps)
}

/// Ordered-format binarization (`ord16`/`ord32`/`ord64`) over document-major
/// input.
pub fn binarize_ordered(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    lane_docs: usize,
    caps: &CapabilitySet,
) -> Result<BitMatrix, BinarizeError> {
    let kind = match lane_docs {
        16 => KernelKind::Ord16,
        32 => KernelKind::Ord32,
        64 => KernelKind::Ord64,
        _ => return Err(BinarizeError::UnknownKernel(format!("ord{lane_docs}"))),
    };
    run_kernel(KernelId::new(kind), features, forest, caps)
}

/// Any kernel over pre-transposed (feature-major) input. Output is identical
/// to the document-major kernel run on the untransposed matrix.
pub fn binarize_pretransposed(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    kind: KernelKind,
    caps: &CapabilitySet,
) -> Result<BitMatrix, BinarizeError> {
    run_kernel(KernelId::pretransposed(kind), features, forest, caps)
}

#[cfg(test)]
mod tests;
