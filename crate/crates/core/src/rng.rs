//! Seeded pseudo-randomness used everywhere determinism matters.
//!
//! All random choices in this crate (projection matrices, maze carving,
//! expert detours, baseline actions, synthetic test data) flow through
//! [`SplitMix64`] so that a seed fully determines the output bit-for-bit
//! on every platform. The generator is the splitmix64 finalizer of
//! Steele, Lea and Flood: the state advances by the golden-gamma constant
//! and each output is a mixed copy of the state.

/// Golden-ratio increment used by splitmix64.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// A splitmix64 generator. Copy-cheap, no allocation, stable output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[-1, 1)`, the range used for projection matrix entries.
    pub fn next_signed_unit(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Uniform integer in `[0, n)` via rejection sampling (no modulo bias).
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }

    /// Bernoulli draw with probability `p`.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

/// Derives a child seed from `(seed, salt)`.
///
/// This is the documented `mix` function used for per-run episode seeds
/// (`mix(seed, run)`), demonstration seeds (`mix(base, demo_index)`) and
/// ablation episode seeds: one splitmix64 output drawn from the state
/// `seed XOR (salt + 1) * GOLDEN_GAMMA`.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    SplitMix64::new(seed ^ salt.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_stream() {
        let mut a = SplitMix64::new(42);
        let mut b = SplitMix64::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    // Reference values from the splitmix64 description (seed 1234567).
    #[test]
    fn matches_reference_outputs() {
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);
    }

    #[test]
    fn unit_range() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..1000 {
            let x = rng.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn next_below_bounds_and_coverage() {
        let mut rng = SplitMix64::new(11);
        let mut seen = [false; 5];
        for _ in 0..200 {
            let v = rng.next_below(5) as usize;
            assert!(v < 5);
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn mix_seed_differs_per_salt() {
        let s = mix_seed(99, 0);
        let t = mix_seed(99, 1);
        assert_ne!(s, t);
        assert_eq!(s, mix_seed(99, 0));
    }
}
