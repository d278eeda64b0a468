//! Reproducible random streams.
//!
//! Every stochastic routine draws from a ChaCha stream keyed by `(seed, stream)`.
//! Work is partitioned into fixed-size blocks with one stream per block, so results
//! do not depend on how many worker threads execute the blocks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derive a child seed so nested consumers (chains inside an experiment, say)
/// do not share streams with their parent.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal_vec<R: rand::Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}

/// Uniform direction on the unit sphere.
pub fn unit_vector<R: rand::Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v = standard_normal_vec(rng, d);
        let n = crate::linalg::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Split `n` items into blocks of `block` (last may be short).
pub fn blocks(n: usize, block: usize) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    let mut remaining = n;
    let mut idx = 0u64;
    while remaining > 0 {
        let len = remaining.min(block);
        out.push((idx, len));
        remaining -= len;
        idx += 1;
    }
    out
}
