//! Deterministic, splittable random number generation.
//!
//! Every stochastic component takes an explicit seed and derives child
//! streams with [`Rng::derive`], keyed by a string tag and an index. There is
//! no global state, so results are independent of execution order and thread
//! count. The generator is SplitMix64; normal deviates use Box-Muller on the
//! 53-bit uniform output, which is simple enough to reproduce in any
//! language given the same uniform stream.

/// SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used only to fold stream tags into seeds.
fn hash_tag(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        // Scramble once so that small consecutive seeds give unrelated streams.
        let mut s = seed;
        let state = splitmix64(&mut s);
        Rng { state }
    }

    /// Derives an independent child stream keyed by `(tag, index)`.
    pub fn derive(&self, tag: &str, index: u64) -> Rng {
        let mut s = self
            .state
            .wrapping_add(hash_tag(tag))
            .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let state = splitmix64(&mut s);
        Rng { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, bound). `bound` must be positive.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Rejection sampling to avoid modulo bias.
        let zone = u64::MAX - (u64::MAX % bound);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Standard normal deviate via Box-Muller (cosine branch only).
    pub fn next_normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Samples `count` distinct indices from `0..n`, returned sorted.
    pub fn sample_without_replacement(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "cannot sample {count} from {n}");
        // Partial Fisher-Yates over an index pool.
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = i + self.next_below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool.sort_unstable();
        pool
    }
}
