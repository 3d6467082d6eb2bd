/// Deterministic pseudo-random generator used everywhere in the toolkit.
///
/// The core step is splitmix64: a 64-bit counter scrambled by two
/// multiply-xorshift rounds. It is fast, has full 2^64 period over the
/// counter, and the same seed always reproduces the same stream on every
/// platform, which is what checkpoint and report reproducibility rest on.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes, used to derive independent named streams
/// from one root seed.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF29CE484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001B3);
    }
    h
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        // One scramble round so that small seeds (0, 1, 2...) do not start
        // in nearby states.
        let mut s = seed;
        let first = splitmix64(&mut s);
        Rng { state: first }
    }

    /// Child generator for a named stream. Streams with different labels are
    /// decorrelated; the parent state is not advanced.
    pub fn stream(root: u64, label: &str) -> Rng {
        Rng::new(root ^ fnv1a(label.as_bytes()))
    }

    /// Child generator for an indexed substream (fold index, epoch, ...).
    pub fn substream(&self, index: u64) -> Rng {
        let mut probe = self.state ^ index.wrapping_mul(0x9E3779B97F4A7C15);
        Rng { state: splitmix64(&mut probe) }
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller. Only the cosine branch is used so one
    /// draw always consumes exactly two uniforms; no spare value is cached,
    /// keeping the stream position a pure function of the draw count.
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log never sees zero.
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9007199254740992.0);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Draw from N(0, sigma^2) and clamp the result into [-1, 1].
    /// The clamp bounds the logit perturbation regardless of sigma.
    pub fn sample_clamped_normal(&mut self, sigma: f64) -> f64 {
        debug_assert!(sigma >= 0.0, "sigma must be nonnegative");
        (sigma * self.normal()).clamp(-1.0, 1.0)
    }

    /// Uniform integer in [0, n). Rejection sampling, so no modulo bias.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) is undefined");
        let n64 = n as u64;
        let zone = u64::MAX - (u64::MAX % n64 + 1) % n64;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return (v % n64) as usize;
            }
        }
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
