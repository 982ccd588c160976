//! Deterministic pseudo-random numbers for weight init and shuffling.
//!
//! Training reproducibility rests on this generator being fully pinned, so
//! the update rule is spelled out here rather than delegated to an external
//! crate: the 64-bit state advances by the odd constant `0x9E3779B97F4A7C15`
//! each draw, and the output is the state passed through two
//! xorshift-multiply rounds (`0xBF58476D1CE4E5B9`, then `0x94D049BB133111EB`)
//! and a final `z ^ (z >> 31)`. Identical seeds therefore produce identical
//! streams on every platform.

/// Split-mix generator with 64 bits of state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw from `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// In-place Fisher-Yates shuffle. The swap index is `next_u64() % (i+1)`,
    /// which is part of the pinned algorithm (the modulo bias is irrelevant
    /// at dataset sizes and keeps the procedure trivial to reimplement).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}
