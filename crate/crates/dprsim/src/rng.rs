//! Self-contained pseudo-random generator.
//!
//! Workload generation must be reproducible across implementations and
//! platforms, so platform default generators are deliberately not used.
//! This is the splitmix64 sequence (Vigna), fixed here in full:
//!
//! ```text
//! state' = state + 0x9E3779B97F4A7C15                 (mod 2^64)
//! z = state'
//! z = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9          (mod 2^64)
//! z = (z XOR (z >> 27)) * 0x94D049BB133111EB          (mod 2^64)
//! output = z XOR (z >> 31)
//! ```
//!
//! Bounded draws use the 128-bit multiply-shift reduction
//! `(next() * bound) >> 64`, which is exact integer arithmetic and therefore
//! identical everywhere.

/// Splitmix64 generator with 64-bit state.
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

    /// Uniform draw in `[0, bound)`.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0, "below(0) is meaningless");
        ((u128::from(self.next_u64()) * u128::from(bound)) >> 64) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference vectors computed independently from the recurrence above.
    #[test]
    fn matches_reference_sequence() {
        let mut r = SplitMix64::new(0);
        assert_eq!(r.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(r.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(r.next_u64(), 0x06C4_5D18_8009_454F);

        let mut r = SplitMix64::new(1_234_567);
        assert_eq!(r.next_u64(), 0x599E_D017_FB08_FC85);
        assert_eq!(r.next_u64(), 0x2C73_F084_5854_0FA5);

        let mut r = SplitMix64::new(15);
        assert_eq!(r.next_u64(), 9_753_551_079_159_975_941);
        assert_eq!(r.next_u64(), 14_391_278_412_279_324_496);
    }

    #[test]
    fn bounded_draws_stay_in_range() {
        let mut r = SplitMix64::new(42);
        for _ in 0..10_000 {
            assert!(r.below(5) < 5);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = SplitMix64::new(99);
        let mut b = SplitMix64::new(99);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
