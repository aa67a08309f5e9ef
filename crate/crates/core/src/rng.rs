//! Small counter-based pseudo-random primitives.
//!
//! Everything here is a pure function of its inputs, so draws never depend on
//! evaluation order or thread count. The mixing function is SplitMix64.

/// One SplitMix64 scrambling step.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a seed with up to three context words (e.g. individual, dimension,
/// draw index) into a single well-mixed word.
#[inline]
pub fn mix(seed: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    h
}

/// Maps a word to the open interval (0, 1) with 52-bit resolution.
#[inline]
pub fn to_unit_open(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / 4_503_599_627_370_496.0)
}

/// Sequential generator used where a stream is more natural than a counter
/// (synthetic individuals, local-search restarts). Seeding is explicit, so
/// streams remain independent of scheduling.
#[derive(Clone, Debug)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { state: seed }
    }

    /// Stream dedicated to one unit of work (one individual, one restart).
    pub fn for_unit(seed: u64, unit: u64) -> Self {
        Stream {
            state: mix(seed, unit, 0x5EED, 0),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on (0, 1).
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        to_unit_open(self.next_u64())
    }

    /// Uniform integer in [0, n) via widening multiply.
    #[inline]
    pub fn next_below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard Gumbel draw, the closed-form inverse transform.
    #[inline]
    pub fn next_gumbel(&mut self) -> f64 {
        -(-self.next_unit().ln()).ln()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_values_stay_in_open_interval() {
        let mut s = Stream::new(7);
        for _ in 0..10_000 {
            let u = s.next_unit();
            assert!(u > 0.0 && u < 1.0);
        }
        assert!(to_unit_open(0) > 0.0);
        assert!(to_unit_open(u64::MAX) < 1.0);
    }

    #[test]
    fn mix_is_pure() {
        assert_eq!(mix(42, 1, 2, 3), mix(42, 1, 2, 3));
        assert_ne!(mix(42, 1, 2, 3), mix(42, 1, 2, 4));
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut s = Stream::for_unit(9, 4);
        let mut v: Vec<usize> = (0..10).collect();
        s.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn gumbel_mean_is_near_euler_gamma() {
        let mut s = Stream::new(123);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| s.next_gumbel()).sum::<f64>() / n as f64;
        assert!((mean - 0.5772).abs() < 0.01, "mean {mean}");
    }
}
