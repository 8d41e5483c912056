//! Reproducible random-number streams.
//!
//! Every trajectory owns one [`RngStream`] keyed by `(seed, stream_id)`. The
//! generator is ChaCha8 in counter mode: the stream id selects an independent
//! keystream and the word position is the draw counter, so stream `i` can be
//! constructed directly without replaying streams `0..i`.
//!
//! Normal variates use the Box–Muller transform on pairs of 64-bit words.
//! Each pair of normals consumes exactly two `u64` draws (four 32-bit words
//! of keystream), so `normal_vector(n)` advances the counter by
//! `4 * ceil(n / 2)` words regardless of the values drawn.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Number of 32-bit keystream words consumed per standard-normal pair.
pub const WORDS_PER_NORMAL_PAIR: u128 = 4;

const TWO_PI: f64 = std::f64::consts::TAU;
const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Current draw position in 32-bit keystream words.
    pub fn counter(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Jump to an absolute draw position.
    pub fn set_counter(&mut self, words: u128) {
        self.inner.set_word_pos(words);
    }

    /// An independent stream for auxiliary randomness (e.g. minibatch
    /// selection) that leaves this stream's sequence untouched.
    pub fn substream(&self, lane: u64) -> RngStream {
        let seed = splitmix64(self.seed ^ splitmix64(lane.wrapping_add(0x5eed)));
        RngStream::new(seed, self.stream_id)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Uniform on `(0, 1]`; never returns zero, so it is safe under `ln`.
    #[inline]
    fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * INV_2_53
    }

    /// Uniform integer in `0..n` using one draw (multiply-high reduction).
    #[inline]
    pub fn index_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    #[inline]
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TWO_PI * u2).sin_cos();
        (radius * c, radius * s)
    }

    /// Fill `out` with i.i.d. standard normals. An odd-length request
    /// discards the second member of the final pair.
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (a, b) = self.normal_pair();
            pair[0] = a;
            pair[1] = b;
        }
        if let [last] = chunks.into_remainder() {
            *last = self.normal_pair().0;
        }
    }

    pub fn normal_vector(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_normal(&mut v);
        v
    }
}

#[inline]
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
