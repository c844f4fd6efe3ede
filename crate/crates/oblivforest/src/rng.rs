//! Deterministic pseudo-random streams for synthetic model and input
//! generation.
//!
//! Every generated field draws from its own splitmix64 stream keyed by
//! `(seed, purpose tag)`, so adding a new generated field never perturbs the
//! values of existing ones and output is byte-identical across platforms.

/// 64-bit FNV-1a. Used for stream keying and output checksums.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// splitmix64 generator (Steele, Lea, Flood 2014).
#[derive(Debug, Clone)]
pub(crate) struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    /// Stream for one generated field: state starts at `seed ^ fnv1a64(tag)`.
    pub fn stream(seed: u64, tag: &str) -> Self {
        Self {
            state: seed ^ fnv1a64(tag.as_bytes()),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    /// Uniform in `[0, bound)`. Plain modulo; the tiny bias is irrelevant for
    /// synthetic inputs and keeps the mapping trivially reproducible.
    pub fn next_below(&mut self, bound: u32) -> u32 {
        debug_assert!(bound > 0);
        (self.next_u64() % u64::from(bound)) as u32
    }

    /// Uniform f32 in `[0, 1)` with 24 mantissa bits.
    pub fn next_unit_f32(&mut self) -> f32 {
        const SCALE: f32 = 1.0 / (1u64 << 24) as f32;
        (self.next_u64() >> 40) as f32 * SCALE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent() {
        let mut a = SplitMix64::stream(7, "thresholds");
        let mut b = SplitMix64::stream(7, "leaves");
        let mut a2 = SplitMix64::stream(7, "thresholds");
        assert_ne!(a.next_u64(), b.next_u64());
        let mut a = SplitMix64::stream(7, "thresholds");
        for _ in 0..100 {
            assert_eq!(a.next_u64(), a2.next_u64());
        }
    }

    #[test]
    fn unit_floats_in_range() {
        let mut r = SplitMix64::stream(42, "features");
        for _ in 0..10_000 {
            let v = r.next_unit_f32();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn fnv_reference_value() {
        // Published FNV-1a test vector.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
