//! Deterministic PCG32 stream used everywhere randomness is needed.
//!
//! The generator is the standard PCG XSH-RR 64/32 variant. Constants match
//! the reference implementation, so streams can be cross-checked against
//! independent PCG32 implementations. All game randomness is drawn from a
//! single VM-owned stream in scheduling order; which call consumes which
//! draw is part of the observable semantics.

/// LCG multiplier of the reference PCG32 implementation.
pub const PCG32_MULTIPLIER: u64 = 6364136223846793005;

/// Default stream selector (yields the reference increment 1442695040888963407).
pub const PCG32_DEFAULT_STREAM: u64 = 721347520444481703;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pcg32 {
    state: u64,
    increment: u64,
}

impl Pcg32 {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, PCG32_DEFAULT_STREAM)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let increment = (stream << 1) | 1;
        let mut rng = Pcg32 { state: 0, increment };
        rng.step();
        rng.state = rng.state.wrapping_add(seed);
        rng.step();
        rng
    }

    /// Derives an independent child stream from a master seed and a purpose
    /// tag. Identical (seed, tag) pairs always yield the same stream.
    pub fn derive(master_seed: u64, tag: &str) -> Self {
        let h = fnv1a64(tag.as_bytes());
        Self::with_stream(splitmix64(master_seed ^ h), h | 1)
    }

    fn step(&mut self) {
        self.state = self.state.wrapping_mul(PCG32_MULTIPLIER).wrapping_add(self.increment);
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.step();
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform in [0, 1) with 32 bits of precision; consumes one draw.
    pub fn uniform(&mut self) -> f64 {
        self.next_u32() as f64 * (1.0 / 4294967296.0)
    }

    /// Uniform in [0, 1) with 53 bits of precision; consumes two draws.
    pub fn uniform53(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    /// Uniform integer in [0, n); consumes exactly one draw. n must be > 0.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((self.next_u32() as u64 * n) >> 32).min(n - 1)
    }

    /// Uniform index into a slice of the given length.
    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    /// Uniform real in [lo, hi); consumes one draw.
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + self.uniform() * (hi - lo)
    }

    /// Standard normal deviate (Box-Muller).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform53();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform53();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// True with the given probability.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Deterministic sample of `k` distinct indices out of `n` (k <= n).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<usize> = (0..n).collect();
        self.shuffle(&mut all);
        all.truncate(k);
        all.sort_unstable();
        all
    }

    pub fn state_bits(&self) -> (u64, u64) {
        (self.state, self.increment)
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 finalizer, used for seed derivation.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Incremental FNV-1a hasher for canonical state digests.
#[derive(Debug, Clone)]
pub struct StateHasher {
    h: u64,
}

impl StateHasher {
    pub fn new() -> Self {
        StateHasher { h: 0xcbf29ce484222325 }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.h ^= b as u64;
            self.h = self.h.wrapping_mul(0x100000001b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }

    pub fn write_str(&mut self, s: &str) {
        self.write_u64(s.len() as u64);
        self.write_bytes(s.as_bytes());
    }

    pub fn write_bool(&mut self, v: bool) {
        self.write_bytes(&[v as u8]);
    }

    pub fn finish(&self) -> u64 {
        self.h
    }
}

impl Default for StateHasher {
    fn default() -> Self {
        Self::new()
    }
}
