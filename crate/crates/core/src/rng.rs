//! Counter-based generator for reproducible scene synthesis.
//!
//! Each stream is keyed by `(seed, stream)` and draws are addressed by a
//! 64-bit counter, so the value for a given pixel never depends on the
//! order in which other pixels were generated. The mixing function is the
//! SplitMix64 finalizer:
//!
//! ```text
//! z = x + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! The stream key is `mix(seed ^ mix(stream))` and draw `i` is
//! `mix(key + i * 0x9E3779B97F4A7C15)`. Transcendental functions come from
//! `libm` so results match across platforms.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: u64,
}

impl CounterRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            key: splitmix64(seed ^ splitmix64(stream)),
        }
    }

    #[inline]
    pub fn u64_at(&self, counter: u64) -> u64 {
        splitmix64(self.key.wrapping_add(counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in the open interval (0, 1), 53-bit resolution.
    #[inline]
    pub fn uniform(&self, counter: u64) -> f64 {
        ((self.u64_at(counter) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller on draws `2i` and `2i + 1`.
    #[inline]
    pub fn normal(&self, index: u64) -> f64 {
        let u1 = self.uniform(index.wrapping_mul(2));
        let u2 = self.uniform(index.wrapping_mul(2).wrapping_add(1));
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
    }

    /// Unit-mean exponential.
    #[inline]
    pub fn exponential(&self, index: u64) -> f64 {
        -libm::log(self.uniform(index))
    }
}
