//! Deterministic random streams.
//!
//! Every stochastic routine in the crate draws from [`Stream`], a ChaCha8
//! generator (RFC 7539 block function, 8 rounds) seeded from a 64-bit value.
//! The 64-bit seed is expanded to the 256-bit ChaCha key by four successive
//! SplitMix64 outputs, so a stream depends only on its `u64` seed and is
//! identical on every platform.
//!
//! Child streams are derived with [`derive_seed`]: `splitmix64(parent ^
//! splitmix64(label))`, where `label` is either a chunk/trial index or the
//! FNV-1a hash of a text tag (see [`tag`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function applied to `x + golden`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(parent ^ splitmix64(label))
}

/// FNV-1a hash of a tag, used as a `derive_seed` label.
pub fn tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn stream(seed: u64) -> Stream {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

pub fn child(parent: u64, name: &str) -> Stream {
    stream(derive_seed(parent, tag(name)))
}

pub fn normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut Stream) -> f64 {
    rng.random::<f64>()
}

pub fn bernoulli(rng: &mut Stream, p: f64) -> bool {
    rng.random::<f64>() < p
}

pub fn below(rng: &mut Stream, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Draws `k` distinct indices from `0..n` (partial Fisher-Yates), in draw order.
pub fn choose_distinct(rng: &mut Stream, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, n - i);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Index drawn from a discrete distribution given by `weights` (sum 1).
pub fn categorical(rng: &mut Stream, weights: &[f64]) -> usize {
    let u = uniform(rng);
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
