//! Counter-based splittable generator.
//!
//! A stream is a 64-bit key. The `n`-th draw of a stream is
//! `mix(key + (n + 1) * GAMMA)` with the SplitMix64 finalizer as `mix`, and a
//! child stream of `key` labelled `tag` has key `mix(key ^ mix(tag))`. Only
//! wrapping integer arithmetic is involved, so output is identical on every
//! platform. Derived floats use plain IEEE arithmetic without
//! transcendental functions for the same reason.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            key: mix(seed),
            counter: 0,
        }
    }

    /// Independent child stream; does not advance `self`.
    pub fn split(&self, tag: u64) -> Stream {
        Stream {
            key: mix(self.key ^ mix(tag)),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        // multiply-shift; bias is below 2^-64 * n
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Approximately standard normal: sum of twelve uniforms minus six.
    pub fn normal(&mut self) -> f64 {
        (0..12).map(|_| self.uniform()).sum::<f64>() - 6.0
    }
}
