//! Oblivious decision-forest inference with interchangeable vectorized
//! kernels.
//!
//! Inference runs in two stages. *Binarization* evaluates every threshold
//! condition for a batch of documents and bit-packs the outcomes in one of
//! several block layouts ([`binarize`]). *Tree application* assembles per-tree
//! leaf indices from those bits and accumulates leaf answers per document
//! under several answer-loading strategies ([`apply`]). Any binarization
//! kernel can be combined with any application strategy; all combinations
//! produce bit-identical results, which [`pipeline::verify_equivalence`]
//! checks exactly. [`bench`] adds a variance-gated timing harness around the
//! same entry points.
//!
//! Every SIMD kernel has a scalar reference twin that produces identical
//! bytes, used both as a fallback on narrower hardware and as a second oracle
//! in tests.

mod buf;
mod rng;

pub mod apply;
pub mod bench;
pub mod binarize;
pub mod model;
pub mod pipeline;

pub use apply::{apply_naive, finalize_scores, ApplyStrategy};
pub use binarize::{binarize_naive, BitLayout, BitMatrix, KernelId};
pub use model::{
    generate_features, generate_forest, FeatureMatrix, ObliviousForest, Orientation,
    SyntheticSpec,
};
pub use pipeline::{evaluate, verify_equivalence, CapabilitySet, StrategyConfig};
