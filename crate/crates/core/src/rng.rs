//! Seeded, platform-independent randomness.
//!
//! The generator is xoshiro256** whose 256-bit state is filled from four
//! consecutive SplitMix64 outputs of the 64-bit seed. On top of the raw
//! `u64` stream this module fixes every derived quantity, because two
//! parties that share a seed must derive the same permutation:
//!
//! * uniform `f64` in `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * integer in `[0, n)`: Lemire's multiply-shift, rejecting the low word
//!   while it is below `2^64 mod n`
//! * standard normal: Box–Muller on `u1 = 1 - uniform()`, `u2 = uniform()`,
//!   emitting `r cos θ` and then the cached `r sin θ`

use rand_core::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::tensor::Tensor;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function, used to derive independent substream seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug)]
pub struct Rng {
    inner: Xoshiro256StarStar,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent substream `stream` of `seed`. Used for per-round party
    /// randomness and per-trial Monte Carlo streams.
    pub fn substream(seed: u64, stream: u64) -> Self {
        Self::new(mix64(seed ^ mix64(stream)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let mut m = self.next_u64() as u128 * n as u128;
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = self.next_u64() as u128 * n as u128;
            }
        }
        (m >> 64) as u64
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, shape: &[usize]) -> Tensor {
        self.fill(shape, |r| r.next_normal())
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let width = hi - lo;
        self.fill(shape, |r| lo + width * r.next_f64())
    }

    fn fill(&mut self, shape: &[usize], mut draw: impl FnMut(&mut Self) -> f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| draw(self)).collect();
        Tensor::new(shape.to_vec(), data).expect("finite draws")
    }

    /// Fisher–Yates shuffle, walking `i` from the end down to 1.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
