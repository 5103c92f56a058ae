//! Seedable random streams.
//!
//! Every stochastic routine takes a `seed` and derives independent
//! substreams from it: the generator is ChaCha8 keyed by the seed, and the
//! 64-bit ChaCha stream id selects the substream (one per trajectory, per
//! generated sample, ...). Normal variates use the ziggurat sampler of
//! `rand_distr::StandardNormal`. The combination is identified by
//! [`RNG_ALGORITHM`], which is recorded in model files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Identifier of the generator + normal transform pair.
pub const RNG_ALGORITHM: &str = "chacha8-stream/ziggurat-normal";

pub type Stream = ChaCha8Rng;

/// Substream `stream` of the generator keyed by `seed`.
pub fn substream(seed: u64, stream: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    fill_standard_normal(rng, &mut v);
    v
}
