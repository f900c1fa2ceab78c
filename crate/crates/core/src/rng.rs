//! Seeded, platform-independent random number generation.
//!
//! Every experiment draws all of its randomness from one root [`Rng`];
//! components derive child streams by name so that adding a consumer never
//! shifts the draws seen by another.

use alloc::vec::Vec;

use libm::{cos, log, sin, sqrt};

const TWO_PI: f64 = 6.283185307179586476925286766559;

/// Generator algorithm tag. Only one algorithm is implemented; the tag is
/// stored in checkpoints so a future change stays detectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngAlgorithm {
    /// SplitMix64 over a (seed, stream) pair.
    SplitMix64,
}

/// Deterministic random source: identical `(seed, stream)` produce identical
/// draw sequences on every platform (all arithmetic is integer or `libm`).
#[derive(Debug, Clone)]
pub struct Rng {
    algorithm: RngAlgorithm,
    seed: u64,
    stream: u64,
    state: u64,
    draws: u64,
    /// Second Box-Muller output, pending delivery.
    cached_normal: Option<f64>,
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a over the component name, used to derive stream ids.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl Rng {
    /// Root generator for a run seed (stream 0).
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Generator on an explicit stream of the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        // Mix seed and stream so nearby streams decorrelate.
        let mut s = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
        let state = splitmix64(&mut s);
        Rng {
            algorithm: RngAlgorithm::SplitMix64,
            seed,
            stream,
            state,
            draws: 0,
            cached_normal: None,
        }
    }

    /// Child generator whose stream id is the hash of `name`.
    pub fn derive(&self, name: &str) -> Rng {
        Rng::with_stream(self.seed, self.stream ^ fnv1a(name.as_bytes()))
    }

    /// Child generator for an indexed substream (e.g. one per round).
    pub fn derive_index(&self, index: u64) -> Rng {
        Rng::with_stream(self.seed, self.stream ^ index.wrapping_mul(0xd1342543de82ef95).wrapping_add(1))
    }

    pub fn algorithm(&self) -> RngAlgorithm {
        self.algorithm
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of raw 64-bit draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        splitmix64(&mut self.state)
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn uniform_usize(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is below 2^-49 for the sizes used here.
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal draw via Box-Muller; pairs are consumed in order.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log stays finite.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
        let u2 = self.uniform();
        let r = sqrt(-2.0 * log(u1));
        let theta = TWO_PI * u2;
        self.cached_normal = Some(r * sin(theta));
        r * cos(theta)
    }

    /// Vector of standard normal draws.
    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.normal());
        }
        out
    }

    /// Fisher-Yates shuffle of indices `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.uniform_usize(i + 1);
            idx.swap(i, j);
        }
        idx
    }
}
