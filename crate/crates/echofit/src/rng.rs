//! Pinned deterministic random number generation.
//!
//! Simulation outputs must be bit-identical for a given seed, across
//! platforms and across releases, so the generator is fixed here rather
//! than delegated to an external crate whose algorithm may change:
//! xoshiro256** (Blackman & Vigna 2018) seeded through SplitMix64.
//! Sub-streams for independent Monte Carlo trajectories are derived from
//! `(seed, index)` so trajectories can be evaluated in any order.

/// SplitMix64 (Steele, Lea & Flood 2014). Used only for seeding.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// xoshiro256** 1.0.
#[derive(Clone, Debug)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Expands `seed` into the full 256-bit state via SplitMix64, as
    /// recommended by the xoshiro authors.
    pub fn seed_from_u64(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        let s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        Rng { s }
    }

    /// Independent sub-stream for trajectory `index` of a run seeded with
    /// `seed`. Mixing both through SplitMix64 decorrelates neighbouring
    /// indices.
    pub fn substream(seed: u64, index: u64) -> Self {
        let mut sm = SplitMix64::new(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        // burn one output so substream(s, 0) differs from seed_from_u64(s)
        sm.next_u64();
        let s = [sm.next_u64(), sm.next_u64(), sm.next_u64(), sm.next_u64()];
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1]
            .wrapping_mul(5)
            .rotate_left(7)
            .wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe as a log/tan argument.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate, Box-Muller. One deviate per call; the
    /// second root is discarded to keep the stream position predictable.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Cauchy (Lorentzian) deviate with half-width `gamma` at zero median,
    /// by inverse CDF.
    pub fn cauchy(&mut self, gamma: f64) -> f64 {
        let u = self.uniform();
        gamma * (std::f64::consts::PI * (u - 0.5)).tan()
    }
}
