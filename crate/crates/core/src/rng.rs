//! Seeded random streams.
//!
//! Every stochastic draw in this crate goes through [`SeedStream`] so that a
//! seed reproduces the same bytes on any platform:
//!
//! * the generator is ChaCha20 (via `rand_chacha`), keyed through
//!   `SeedableRng::seed_from_u64` (SplitMix64 key expansion, stable by
//!   contract in `rand_core`);
//! * uniforms take the top 53 bits of one `u64` draw, giving `f64` in `[0,1)`;
//! * normals use the Box-Muller transform, consuming exactly two uniforms per
//!   draw (`z = sqrt(-2 ln u1) * cos(2 pi u2)` with `u1` mapped into `(0,1]`);
//! * shuffles are Fisher-Yates from the back, indices by `next_u64 % n`;
//! * child streams are keyed by `splitmix64(seed + (id + 1) * GOLDEN)`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for an independent stream (ensemble member, grid cell).
pub fn derive_seed(base: u64, stream_id: u64) -> u64 {
    splitmix64(base.wrapping_add(stream_id.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// A deterministic random stream.
#[derive(Debug, Clone)]
pub struct SeedStream {
    rng: ChaCha20Rng,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Child stream with its own seed; see [`derive_seed`].
    pub fn child(&self, base: u64, stream_id: u64) -> Self {
        let _ = self;
        Self::new(derive_seed(base, stream_id))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform `f64` in `[0, 1)` from the top 53 bits of one `u64`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform `f64` in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms.
    pub fn normal(&mut self) -> f64 {
        // Map u1 into (0, 1] so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            xs.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeedStream::new(42);
        let mut b = SeedStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = SeedStream::new(7);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments_roughly_standard() {
        let mut s = SeedStream::new(3);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        // Stable values: frozen so golden files stay valid.
        assert_eq!(derive_seed(0, 0), splitmix64(GOLDEN));
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut s = SeedStream::new(9);
        let mut xs: Vec<u32> = (0..57).collect();
        s.shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..57).collect::<Vec<_>>());
    }
}
