//! Deterministic pseudo-random numbers.
//!
//! SplitMix64 with the standard published constants. The generator is
//! small enough to re-implement exactly in any language, which is the
//! point: a run is reproducible from its seed alone, with no dependence
//! on a platform RNG.

/// SplitMix64 stream. `Clone`/`Copy` so sweep points can fork a snapshot
/// of the stream instead of replaying it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Current stream state. `Rng::new(rng.state())` resumes the stream
    /// exactly where `rng` stands.
    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)`, built from the top 24 bits.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 / (1u32 << 24) as f32
    }

    /// Uniform in `[-r, r]`.
    pub fn uniform(&mut self, r: f32) -> f32 {
        r * (2.0 * self.next_f32() - 1.0)
    }

    /// Uniform integer in `[0, n)` by modulo reduction. The bias is below
    /// 2^-50 for every `n` used here and identical across platforms.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        (self.next_u64() % n as u64) as usize
    }
}
