//! End-to-end evaluation: capability detection, input padding, kernel
//! dispatch, strategy composition, and exact cross-config equivalence
//! verification.
//!
//! Any binarize kernel may be combined with any apply strategy (the one
//! restriction: the naive apply walk reads ordered bits). Equivalence is
//! checked on canonicalized binarizations and on the 64-bit integer sums —
//! never on the final floats — so the criterion stays exact.

use crate::apply::{self, apply_forest, ApplyError, ApplyStrategy, WidthChoice};
use crate::binarize::{self, BinarizeError, BitLayout, BitMatrix, KernelId, KernelKind};
use crate::model::{FeatureMatrix, ObliviousForest, Orientation};
use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;
use thiserror::Error;

/// One hardware facility a kernel may require.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    Scalar,
    V128,
    V256,
    V512,
    /// Compares that produce a bit mask directly (one bit per lane).
    MaskCompare,
    /// Vector loads from index-addressed locations.
    Gather,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Scalar => "scalar",
            Capability::V128 => "128-bit vector",
            Capability::V256 => "256-bit vector",
            Capability::V512 => "512-bit vector",
            Capability::MaskCompare => "mask-compare",
            Capability::Gather => "gather",
        })
    }
}

/// The vector facilities a run is allowed to use. `detect()` reflects the
/// host; [`ForceTier`] overrides produce smaller (or, for testing the error
/// path, larger) sets. Wider tiers imply narrower ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapabilitySet {
    pub v128: bool,
    pub v256: bool,
    pub v512: bool,
    pub mask_compare: bool,
    pub gather: bool,
}

impl CapabilitySet {
    pub fn scalar_only() -> Self {
        Self { v128: false, v256: false, v512: false, mask_compare: false, gather: false }
    }

    /// Hardware truth for the running CPU (cached after the first call).
    pub fn detect() -> Self {
        static DETECTED: OnceLock<CapabilitySet> = OnceLock::new();
        *DETECTED.get_or_init(Self::detect_uncached)
    }

    #[cfg(target_arch = "x86_64")]
    fn detect_uncached() -> Self {
        let v128 = is_x86_feature_detected!("sse2");
        let v256 = v128 && is_x86_feature_detected!("avx2");
        let v512 = v256
            && is_x86_feature_detected!("avx512f")
            && is_x86_feature_detected!("avx512bw");
        Self {
            v128,
            v256,
            v512,
            mask_compare: is_x86_feature_detected!("avx512f"),
            gather: v256,
        }
    }

    #[cfg(not(target_arch = "x86_64"))]
    fn detect_uncached() -> Self {
        Self::scalar_only()
    }

    /// The set a forced tier enables, regardless of hardware.
    pub fn for_tier(tier: ForceTier) -> Self {
        match tier {
            ForceTier::Scalar => Self::scalar_only(),
            ForceTier::V128 => Self { v128: true, ..Self::scalar_only() },
            ForceTier::V256 => Self { v128: true, v256: true, gather: true, ..Self::scalar_only() },
            ForceTier::V512 => {
                Self { v128: true, v256: true, v512: true, mask_compare: true, gather: true }
            }
        }
    }

    pub fn has(&self, c: Capability) -> bool {
        match c {
            Capability::Scalar => true,
            Capability::V128 => self.v128,
            Capability::V256 => self.v256,
            Capability::V512 => self.v512,
            Capability::MaskCompare => self.mask_compare,
            Capability::Gather => self.gather,
        }
    }

    /// Wider tiers imply narrower ones.
    pub fn is_consistent(&self) -> bool {
        (!self.v512 || self.v256) && (!self.v256 || self.v128)
    }
}

/// Downward (or, for error-path testing, upward) capability override,
/// accepted as `FORCE_TIER=scalar|128|256|512`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceTier {
    Scalar,
    V128,
    V256,
    V512,
}

impl FromStr for ForceTier {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, PipelineError> {
        match s {
            "scalar" => Ok(ForceTier::Scalar),
            "128" => Ok(ForceTier::V128),
            "256" => Ok(ForceTier::V256),
            "512" => Ok(ForceTier::V512),
            other => Err(PipelineError::ConfigParse(format!(
                "unknown tier `{other}` (expected scalar|128|256|512)"
            ))),
        }
    }
}

/// Environment variable consulted by the CLI for capability overrides.
pub const FORCE_TIER_VAR: &str = "FORCE_TIER";

/// Capability set for a run: the forced tier when given, hardware otherwise.
pub fn effective_caps(force: Option<ForceTier>) -> CapabilitySet {
    match force {
        Some(t) => CapabilitySet::for_tier(t),
        None => CapabilitySet::detect(),
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("incompatible configuration: {0}")]
    IncompatibleConfig(String),
    #[error("configuration: {0}")]
    ConfigParse(String),
    #[error(transparent)]
    Binarize(#[from] BinarizeError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

/// One named way to run the pipeline: a binarize kernel plus an apply
/// strategy, with the vector width used by SIMD answer loading, the height
/// cap above which permute loading falls back to gather, and whether scalar
/// reference paths may stand in for missing capabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyConfig {
    pub binarize: KernelId,
    pub apply: ApplyStrategy,
    pub apply_width: WidthChoice,
    pub permute_height_cap: u32,
    pub allow_scalar_fallback: bool,
}

impl StrategyConfig {
    pub fn new(binarize: KernelId, apply: ApplyStrategy) -> Self {
        Self {
            binarize,
            apply,
            apply_width: WidthChoice::Auto,
            permute_height_cap: apply::DEFAULT_PERMUTE_HEIGHT_CAP,
            allow_scalar_fallback: true,
        }
    }

    /// Reference configuration: naive binarization plus the naive tree walk.
    pub fn naive() -> Self {
        Self::new(KernelId::new(KernelKind::Naive), ApplyStrategy::Naive)
    }

    /// Widest configuration the capability set supports.
    pub fn auto(caps: &CapabilitySet) -> Self {
        let kind = if caps.v512 {
            KernelKind::Mx512
        } else if caps.v256 {
            KernelKind::Mx256
        } else if caps.v128 {
            KernelKind::Mx128
        } else {
            KernelKind::Naive
        };
        let apply = if caps.gather {
            ApplyStrategy::GroupedGather
        } else if kind == KernelKind::Naive {
            ApplyStrategy::Naive
        } else {
            ApplyStrategy::GroupedBatch4
        };
        Self::new(kind_id(kind), apply)
    }

    /// Parses `kernel[+strategy][@width]`, e.g. `mx256+grouped-gather@512`.
    /// A bare kernel defaults to `grouped-batch4` (or the naive walk for the
    /// naive kernel).
    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        let (body, width) = match s.rsplit_once('@') {
            Some((body, w)) => {
                let width = match w {
                    "auto" => WidthChoice::Auto,
                    "128" => WidthChoice::W128,
                    "256" => WidthChoice::W256,
                    "512" => WidthChoice::W512,
                    other => {
                        return Err(PipelineError::ConfigParse(format!(
                            "unknown width `{other}` (expected auto|128|256|512)"
                        )))
                    }
                };
                (body, width)
            }
            None => (s, WidthChoice::Auto),
        };
        let (kernel_str, apply) = match body.split_once('+') {
            Some((k, a)) => (k, ApplyStrategy::parse(a).map_err(ApplyError::from_parse)?),
            None => {
                let kernel = KernelId::parse(body)?;
                let default = if kernel.kind == KernelKind::Naive {
                    ApplyStrategy::Naive
                } else {
                    ApplyStrategy::GroupedBatch4
                };
                return Ok(Self { apply_width: width, ..Self::new(kernel, default) });
            }
        };
        let kernel = KernelId::parse(kernel_str)?;
        let mut config = Self::new(kernel, apply);
        config.apply_width = width;
        config.validate()?;
        Ok(config)
    }

    /// Checks the config against the kernel/strategy compatibility matrix.
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.apply == ApplyStrategy::Naive
            && self.binarize.kind.layout() != BitLayout::Ordered
        {
            return Err(PipelineError::IncompatibleConfig(format!(
                "the naive apply walk reads ordered bits, but kernel `{}` emits an interleaved layout",
                self.binarize
            )));
        }
        Ok(())
    }

    /// The full compatibility matrix over all kernels and strategies.
    pub fn all_supported() -> Vec<StrategyConfig> {
        let mut out = Vec::new();
        for kernel in KernelId::all() {
            for strategy in ApplyStrategy::ALL {
                let config = StrategyConfig::new(kernel, strategy);
                if config.validate().is_ok() {
                    out.push(config);
                }
            }
        }
        out
    }

    /// A small spanning subset: every kernel appears once and every strategy
    /// appears at least once.
    pub fn representative_set() -> Vec<StrategyConfig> {
        let strategies = [
            ApplyStrategy::Naive,
            ApplyStrategy::GroupedBatch4,
            ApplyStrategy::GroupedPerTree,
            ApplyStrategy::GroupedGather,
            ApplyStrategy::GroupedPermute,
        ];
        KernelId::all()
            .into_iter()
            .enumerate()
            .map(|(i, kernel)| {
                let mut s = strategies[i % strategies.len()];
                if s == ApplyStrategy::Naive && kernel.kind.layout() != BitLayout::Ordered {
                    s = ApplyStrategy::GroupedBatch4;
                }
                StrategyConfig::new(kernel, s)
            })
            .collect()
    }

    /// Parses a small `key=value` configuration file. Keys: `binarize`,
    /// `apply`, `width`, `permute_height_cap`, `allow_scalar_fallback`.
    /// `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self, PipelineError> {
        let mut binarize: Option<KernelId> = None;
        let mut apply: Option<ApplyStrategy> = None;
        let mut width = WidthChoice::Auto;
        let mut cap = apply::DEFAULT_PERMUTE_HEIGHT_CAP;
        let mut fallback = true;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::ConfigParse(format!("line {}: expected key=value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "binarize" => binarize = Some(KernelId::parse(value)?),
                "apply" => {
                    apply = Some(ApplyStrategy::parse(value).map_err(ApplyError::from_parse)?)
                }
                "width" => {
                    width = match value {
                        "auto" => WidthChoice::Auto,
                        "128" => WidthChoice::W128,
                        "256" => WidthChoice::W256,
                        "512" => WidthChoice::W512,
                        other => {
                            return Err(PipelineError::ConfigParse(format!(
                                "line {}: unknown width `{other}`",
                                lineno + 1
                            )))
                        }
                    }
                }
                "permute_height_cap" => {
                    cap = value.parse().map_err(|_| {
                        PipelineError::ConfigParse(format!(
                            "line {}: permute_height_cap must be an integer",
                            lineno + 1
                        ))
                    })?;
                    if cap > crate::model::MAX_TREE_HEIGHT as u32 {
                        return Err(PipelineError::ConfigParse(format!(
                            "line {}: permute_height_cap above the maximum tree height",
                            lineno + 1
                        )));
                    }
                }
                "allow_scalar_fallback" => {
                    fallback = value.parse().map_err(|_| {
                        PipelineError::ConfigParse(format!(
                            "line {}: allow_scalar_fallback must be true or false",
                            lineno + 1
                        ))
                    })?
                }
                other => {
                    return Err(PipelineError::ConfigParse(format!(
                        "line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        let binarize = binarize
            .ok_or_else(|| PipelineError::ConfigParse("missing `binarize` key".into()))?;
        let apply = apply.ok_or_else(|| PipelineError::ConfigParse("missing `apply` key".into()))?;
        let config = StrategyConfig {
            binarize,
            apply,
            apply_width: width,
            permute_height_cap: cap,
            allow_scalar_fallback: fallback,
        };
        config.validate()?;
        Ok(config)
    }
}

fn kind_id(kind: KernelKind) -> KernelId {
    KernelId::new(kind)
}

impl fmt::Display for StrategyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.binarize, self.apply)?;
        match self.apply_width {
            WidthChoice::Auto => Ok(()),
            WidthChoice::W128 => write!(f, "@128"),
            WidthChoice::W256 => write!(f, "@256"),
            WidthChoice::W512 => write!(f, "@512"),
        }
    }
}

/// Copies `features` into a zero-filled arena whose document count is padded
/// up to a multiple of `block_docs` and whose rows start on 64-byte
/// boundaries. Padding documents read as all-zero factor vectors.
pub fn pad_arena(features: &FeatureMatrix, block_docs: usize) -> FeatureMatrix {
    assert!(
        matches!(block_docs, 16 | 32 | 64 | 128 | 256 | 512),
        "block_docs must be one of 16|32|64|128|256|512"
    );
    let padded = features.num_docs().div_ceil(block_docs) * block_docs;
    let mut out = FeatureMatrix::zeroed_aligned_rows(
        padded,
        features.num_features(),
        features.orientation(),
    );
    for d in 0..features.num_docs() {
        for f in 0..features.num_features() {
            out.set(d, f, features.get(d, f));
        }
    }
    out
}

/// Runs the configured binarize kernel, falling back to its scalar twin when
/// the capability set lacks the kernel's tier and fallback is allowed. A
/// capability forced above hardware is an error regardless.
pub fn run_binarize(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    config: &StrategyConfig,
    caps: &CapabilitySet,
) -> Result<BitMatrix, PipelineError> {
    match binarize::run_kernel(config.binarize, features, forest, caps) {
        Ok(bits) => Ok(bits),
        Err(BinarizeError::CapabilityMissing { .. }) if config.allow_scalar_fallback => {
            Ok(binarize::run_kernel_scalar(config.binarize, features, forest)?)
        }
        Err(e) => Err(e.into()),
    }
}

/// Per-document 64-bit sums for one config. Input must be document-major;
/// pre-transposed kernels receive a transposed copy internally.
pub fn evaluate_sums(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    config: &StrategyConfig,
    caps: &CapabilitySet,
) -> Result<Vec<u64>, PipelineError> {
    config.validate()?;
    let input: Cow<'_, FeatureMatrix> = if config.binarize.pretransposed {
        Cow::Owned(features.transposed())
    } else {
        Cow::Borrowed(features)
    };
    debug_assert_eq!(input.orientation(), config.binarize.expected_orientation());
    let bits = run_binarize(&input, forest, config, caps)?;
    let sums = apply_forest(
        &bits,
        forest,
        config.apply,
        config.apply_width,
        config.permute_height_cap,
        caps,
        config.allow_scalar_fallback,
    )?;
    Ok(sums)
}

/// Final scores for one config: exactly `features.num_docs()` values.
pub fn evaluate(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    config: &StrategyConfig,
    caps: &CapabilitySet,
) -> Result<Vec<f64>, PipelineError> {
    let sums = evaluate_sums(features, forest, config, caps)?;
    Ok(crate::apply::finalize_scores(&sums, forest))
}

/// Everything equivalence verification compares for one config.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub config: String,
    pub bits: BitMatrix,
    pub sums: Vec<u64>,
}

pub fn evaluate_outcome(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    config: &StrategyConfig,
    caps: &CapabilitySet,
) -> Result<EvalOutcome, PipelineError> {
    config.validate()?;
    let input: Cow<'_, FeatureMatrix> = if config.binarize.pretransposed {
        Cow::Owned(features.transposed())
    } else {
        Cow::Borrowed(features)
    };
    let bits = run_binarize(&input, forest, config, caps)?;
    let sums = apply_forest(
        &bits,
        forest,
        config.apply,
        config.apply_width,
        config.permute_height_cap,
        caps,
        config.allow_scalar_fallback,
    )?;
    Ok(EvalOutcome { config: config.to_string(), bits: bits.canonicalize(), sums })
}

/// First point where two outcomes disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    /// Canonicalized binarizations differ at (binary feature, document).
    Binarize { feature: usize, doc: usize },
    /// 64-bit sums differ at a document.
    Sums { doc: usize, left: u64, right: u64 },
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::Binarize { feature, doc } => {
                write!(f, "binarization differs at feature {feature}, doc {doc}")
            }
            Divergence::Sums { doc, left, right } => {
                write!(f, "sums differ at doc {doc}: {left} vs {right}")
            }
        }
    }
}

/// Compares canonicalized bits first, then the integer sums.
pub fn compare_outcomes(a: &EvalOutcome, b: &EvalOutcome) -> Option<Divergence> {
    if let Some((feature, doc)) = a.bits.logical_divergence(&b.bits) {
        return Some(Divergence::Binarize { feature, doc });
    }
    for (doc, (&l, &r)) in a.sums.iter().zip(&b.sums).enumerate() {
        if l != r {
            return Some(Divergence::Sums { doc, left: l, right: r });
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct PairDivergence {
    pub left: String,
    pub right: String,
    pub divergence: Divergence,
}

/// Result of pairwise equivalence verification over a config set.
#[derive(Debug, Clone, Default)]
pub struct EquivalenceReport {
    pub configs: Vec<String>,
    pub failures: Vec<PairDivergence>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "{} configs pairwise equivalent", self.configs.len())
        } else {
            writeln!(f, "{} diverging pairs:", self.failures.len())?;
            for p in &self.failures {
                writeln!(f, "  {} vs {}: {}", p.left, p.right, p.divergence)?;
            }
            Ok(())
        }
    }
}

/// Runs every config and compares all pairs on full equality. Divergences
/// are report content, not errors.
pub fn verify_equivalence(
    features: &FeatureMatrix,
    forest: &ObliviousForest,
    configs: &[StrategyConfig],
    caps: &CapabilitySet,
) -> Result<EquivalenceReport, PipelineError> {
    let mut outcomes = Vec::with_capacity(configs.len());
    for config in configs {
        outcomes.push(evaluate_outcome(features, forest, config, caps)?);
    }
    let mut report = EquivalenceReport {
        configs: outcomes.iter().map(|o| o.config.clone()).collect(),
        failures: Vec::new(),
    };
    for i in 0..outcomes.len() {
        for j in i + 1..outcomes.len() {
            if let Some(divergence) = compare_outcomes(&outcomes[i], &outcomes[j]) {
                report.failures.push(PairDivergence {
                    left: outcomes[i].config.clone(),
                    right: outcomes[j].config.clone(),
                    divergence,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_features, generate_forest, SyntheticSpec};

    fn small_instance() -> (FeatureMatrix, ObliviousForest) {
        let spec = SyntheticSpec {
            num_float_features: 6,
            num_binary_features: 20,
            trees_per_height: [1, 1, 1, 2, 1, 1, 1, 1, 1],
            seed: 21,
            doc_count: 0,
        };
        (generate_features(157, 6, 5), generate_forest(&spec).unwrap())
    }

    #[test]
    fn detect_is_consistent() {
        assert!(CapabilitySet::detect().is_consistent());
        for tier in [ForceTier::Scalar, ForceTier::V128, ForceTier::V256, ForceTier::V512] {
            assert!(CapabilitySet::for_tier(tier).is_consistent());
        }
        assert!(CapabilitySet::for_tier(ForceTier::V512).mask_compare);
    }

    #[test]
    fn pad_arena_rounds_up_and_zero_fills() {
        let m = generate_features(129, 3, 1);
        let padded = pad_arena(&m, 128);
        assert_eq!(padded.num_docs(), 256);
        for d in 0..129 {
            for f in 0..3 {
                assert_eq!(padded.get(d, f), m.get(d, f));
            }
        }
        for d in 129..256 {
            for f in 0..3 {
                assert_eq!(padded.get(d, f), 0.0);
            }
        }
        // Aligned rows.
        assert_eq!(padded.doc_row(1).as_ptr() as usize % 64, 0);
        // Already a multiple: same logical content and doc count.
        let exact = pad_arena(&generate_features(256, 3, 1), 128);
        assert_eq!(exact.num_docs(), 256);
    }

    #[test]
    fn config_parse_roundtrip() {
        for s in ["naive", "mx128+grouped-batch4", "mx512-t+grouped-gather@512", "ord32+naive"] {
            let c = StrategyConfig::parse(s).unwrap();
            let back = StrategyConfig::parse(&c.to_string()).unwrap();
            assert_eq!(c, back);
        }
        assert!(StrategyConfig::parse("mx128+naive").is_err());
        assert!(StrategyConfig::parse("bogus+naive").is_err());
        assert!(StrategyConfig::parse("mx128+grouped-gather@99").is_err());
    }

    #[test]
    fn kv_text_parses() {
        let c = StrategyConfig::from_kv_text(
            "# comment\nbinarize = mx256\napply = grouped-gather\nwidth = 256\npermute_height_cap = 4\nallow_scalar_fallback = false\n",
        )
        .unwrap();
        assert_eq!(c.binarize.kind, KernelKind::Mx256);
        assert_eq!(c.apply, ApplyStrategy::GroupedGather);
        assert_eq!(c.apply_width, WidthChoice::W256);
        assert_eq!(c.permute_height_cap, 4);
        assert!(!c.allow_scalar_fallback);

        assert!(StrategyConfig::from_kv_text("binarize=mx128").is_err());
        assert!(StrategyConfig::from_kv_text("binarize=mx128\napply=naive").is_err());
        assert!(StrategyConfig::from_kv_text("bogus=1").is_err());
        assert!(StrategyConfig::from_kv_text("permute_height_cap=9\nbinarize=naive\napply=naive")
            .is_err());
    }

    #[test]
    fn scalar_only_caps_still_evaluate_everything() {
        let (features, forest) = small_instance();
        let caps = CapabilitySet::scalar_only();
        let reference = evaluate_sums(
            &features,
            &forest,
            &StrategyConfig::naive(),
            &caps,
        )
        .unwrap();
        for config in StrategyConfig::all_supported() {
            let sums = evaluate_sums(&features, &forest, &config, &caps).unwrap();
            assert_eq!(sums, reference, "config {config}");
        }
    }

    #[test]
    fn fallback_disabled_errors_on_missing_capability() {
        let (features, forest) = small_instance();
        let mut config = StrategyConfig::parse("mx128+grouped-batch4").unwrap();
        config.allow_scalar_fallback = false;
        let err = evaluate_sums(&features, &forest, &config, &CapabilitySet::scalar_only());
        assert!(matches!(
            err,
            Err(PipelineError::Binarize(BinarizeError::CapabilityMissing { .. }))
        ));
    }

    #[test]
    fn forced_above_hardware_is_an_error_even_with_fallback() {
        if CapabilitySet::detect().v512 {
            return; // nothing is above this host
        }
        let (features, forest) = small_instance();
        let config = StrategyConfig::parse("mx512+grouped-batch4").unwrap();
        let err = evaluate_sums(
            &features,
            &forest,
            &config,
            &CapabilitySet::for_tier(ForceTier::V512),
        );
        assert!(matches!(
            err,
            Err(PipelineError::Binarize(BinarizeError::ForcedAboveHardware { .. }))
        ));
    }

    #[test]
    fn evaluate_matches_naive_and_depends_only_on_head() {
        let (features, forest) = small_instance();
        let caps = CapabilitySet::detect();
        let config = StrategyConfig::auto(&caps);
        let naive = evaluate(&features, &forest, &StrategyConfig::naive(), &caps).unwrap();
        let fast = evaluate(&features, &forest, &config, &caps).unwrap();
        assert_eq!(naive, fast);
        assert_eq!(naive.len(), features.num_docs());

        // Appending documents never changes the first D scores.
        let head = features.head(63);
        let head_scores = evaluate(&head, &forest, &config, &caps).unwrap();
        assert_eq!(head_scores[..], fast[..63]);
    }

    #[test]
    fn evaluate_empty_batch() {
        let (_, forest) = small_instance();
        let empty = generate_features(0, 6, 1);
        let caps = CapabilitySet::detect();
        for config in [StrategyConfig::naive(), StrategyConfig::auto(&caps)] {
            assert!(evaluate(&empty, &forest, &config, &caps).unwrap().is_empty());
        }
    }

    #[test]
    fn verify_passes_on_shipped_configs_and_names_fault() {
        let (features, forest) = small_instance();
        let caps = CapabilitySet::detect();
        let configs = StrategyConfig::representative_set();
        let report = verify_equivalence(&features, &forest, &configs, &caps).unwrap();
        assert!(report.passed(), "{report}");
        assert_eq!(report.configs.len(), configs.len());

        // Single config: vacuous pass.
        let single = verify_equivalence(&features, &forest, &configs[..1], &caps).unwrap();
        assert!(single.passed());

        // Fault injection: corrupt one outcome's sums; the comparison names
        // the diverging doc.
        let a = evaluate_outcome(&features, &forest, &configs[0], &caps).unwrap();
        let mut b = a.clone();
        b.sums[17] ^= 1;
        match compare_outcomes(&a, &b) {
            Some(Divergence::Sums { doc: 17, .. }) => {}
            other => panic!("expected sum divergence at doc 17, got {other:?}"),
        }
        // Corrupt a binarization bit: named as (feature, doc).
        let mut c = a.clone();
        c.bits = {
            let mut raw = c.bits.clone();
            let row = raw.feature_bits_mut(2);
            row[3] ^= 1 << 4; // feature 2, doc 28
            raw
        };
        match compare_outcomes(&a, &c) {
            Some(Divergence::Binarize { feature: 2, doc: 28 }) => {}
            other => panic!("expected binarize divergence, got {other:?}"),
        }
    }
}
