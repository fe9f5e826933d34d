//! Counter-based deterministic random number generation.
//!
//! Every output is a pure function of `(seed, stream_id, counter)`.
//! This is what makes certification and training reproducible under
//! any parallel schedule: draw `j` for input `i` always reads position
//! `j` of stream `i`, no matter which worker computes it or in what
//! order.  Splitting a run across workers therefore yields bit-identical
//! results to the sequential run.
//!
//! The generator is the SplitMix64 sequence: position `c` of a stream
//! with base state `b` outputs `mix13(b + c·GOLDEN)`.  Streams derive
//! their base states by hashing `(seed, stream_id)` with the same
//! finalizer, so distinct streams land far apart in state space.

/// Golden-ratio increment of the SplitMix64 sequence.
const GOLDEN: u64 = 0x9E3779B9_7F4A7C15;

/// Stafford variant 13 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
fn mix13(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D_1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB_133111EB);
    z ^ (z >> 31)
}

/// Base state for a `(seed, stream_id)` pair.
#[inline]
fn stream_base(seed: u64, stream_id: u64) -> u64 {
    mix13(mix13(seed.wrapping_add(GOLDEN)) ^ stream_id)
}

/// A positioned view into one deterministic random stream.
///
/// The struct is tiny and `Copy`-free on purpose: cloning is cheap, and
/// holding a `&mut` makes counter advancement explicit at call sites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    counter: u64,
}

impl RngStream {
    /// Stream `stream_id` of the generator family keyed by `seed`,
    /// positioned at counter 0.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id, counter: 0 }
    }

    /// As [`RngStream::new`] but starting at an explicit counter.
    pub fn with_counter(seed: u64, stream_id: u64, counter: u64) -> Self {
        RngStream { seed, stream_id, counter }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Current position; the next word drawn will be this one.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Reposition the stream.  Jumping is O(1): outputs depend only on
    /// the counter value, not on how it was reached.
    pub fn jump_to(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// Derive a child stream for domain separation (e.g. shuffling vs
    /// noise draws).  Children of distinct `(stream_id, child_id)`
    /// pairs never collide because derivation re-hashes both.
    pub fn substream(&self, child_id: u64) -> RngStream {
        RngStream {
            seed: mix13(stream_base(self.seed, self.stream_id) ^ child_id),
            stream_id: child_id,
            counter: 0,
        }
    }

    /// Next raw 64-bit word; advances the counter by 1.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let word = mix13(
            stream_base(self.seed, self.stream_id)
                .wrapping_add(self.counter.wrapping_mul(GOLDEN)),
        );
        self.counter = self.counter.wrapping_add(1);
        word
    }

    /// Uniform draw in [0, 1) using the top 53 bits.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `n` i.i.d. uniform draws in [0, 1).
    pub fn uniform(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_uniform()).collect()
    }

    /// Uniform integer in [0, bound) via the multiply-shift method.
    /// Consumes exactly one word.
    #[inline]
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// One standard-normal pair via Box–Muller.  The radius uses
    /// `1 − u ∈ (0, 1]`, so the logarithm never sees 0.
    #[inline]
    fn gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// `dim` i.i.d. N(0, σ²) draws.  Consumes exactly
    /// [`gaussian_words`]`(dim)` counter words regardless of σ, so a
    /// vector draw occupies a fixed counter block.
    pub fn gaussian_vector(&mut self, dim: usize, sigma: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(dim);
        while out.len() + 2 <= dim {
            let (a, b) = self.gaussian_pair();
            out.push(sigma * a);
            out.push(sigma * b);
        }
        if out.len() < dim {
            let (a, _) = self.gaussian_pair();
            out.push(sigma * a);
        }
        out
    }

    /// Fisher–Yates permutation of `0..n`.  Consumes `n − 1` words
    /// (none for `n ≤ 1`).
    pub fn shuffled_indices(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.next_below(i as u64 + 1) as usize;
            idx.swap(i, j);
        }
        idx
    }
}

/// Counter words consumed by a `gaussian_vector` call of this length:
/// two words per Box–Muller pair, odd lengths round up.
pub fn gaussian_words(dim: usize) -> u64 {
    (dim as u64).div_ceil(2) * 2
}
