//! Seeded pseudo-random numbers with a fixed, portable definition.
//!
//! Every random decision in the crate (dataset splits, epoch shuffles,
//! synthetic corpora, initialization, sampling) goes through [`SplitMix64`]
//! so results reproduce bit-for-bit across platforms and implementations.
//!
//! * Generator: SplitMix64 (Steele, Lea & Flood 2014). State advances by
//!   `0x9E3779B97F4A7C15`; output is the state passed through the
//!   `(30, 27, 31)` xor-shift/multiply finalizer.
//! * Bounded integers: `below(n)` draws `r` until `r >= (2^64 - n) mod n`
//!   and returns `r mod n` (unbiased rejection).
//! * Unit floats: `(next_u64() >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * Shuffle: Fisher-Yates over descending indices, `for i in (1..len).rev()`
//!   swap `i` with `below(i + 1)`.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. Also used to derive independent stream seeds.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `stream` derived from a base seed, e.g. one per epoch or
/// one per parameter tensor: `mix64(seed ^ mix64(stream + 1))`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream.wrapping_add(1)))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) has no valid outcome");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}
