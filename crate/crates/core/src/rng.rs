//! Seeded random streams.
//!
//! Every run derives its randomness from a single `u64` seed. Independent
//! consumers (index sampling, output draws, sign flips, negative-curvature
//! searches, Monte-Carlo replays) read from distinct ChaCha streams keyed by
//! the same seed, so adding draws to one consumer never perturbs another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SpiderRng = ChaCha8Rng;

/// Stream used for component-index sampling inside the optimizer loop.
pub const STREAM_SAMPLING: u64 = 0;
/// Stream used for the uniform output draw of expectation-style runs.
pub const STREAM_OUTPUT: u64 = 1;
/// Stream used for Rademacher signs of second-order descent.
pub const STREAM_SIGNS: u64 = 2;
/// First stream id reserved for negative-curvature searches (one per call).
pub const STREAM_NCS_BASE: u64 = 1 << 32;
/// First stream id reserved for Monte-Carlo replays (one per trial).
pub const STREAM_REPLAY_BASE: u64 = 1 << 40;

/// Returns the ChaCha8 generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> SpiderRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform index in `[0, n)`.
#[inline]
pub fn uniform_index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Standard Gaussian vector of length `d`.
pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// +1.0 or -1.0 with equal probability.
#[inline]
pub fn rademacher<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Standard Gaussian vector normalised to unit length.
pub fn random_unit<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let mut w = gaussian_vec(rng, d);
        let nrm = crate::vecops::norm(&w);
        if nrm > 1e-300 {
            crate::vecops::scale(&mut w, 1.0 / nrm);
            return w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(7, 0).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s0 = stream_rng(7, 0);
        let mut s1 = stream_rng(7, 1);
        let x: u64 = s0.random();
        let y: u64 = s1.random();
        assert_ne!(x, y);
    }

    #[test]
    fn rademacher_is_balanced() {
        let mut rng = stream_rng(1, 0);
        let sum: f64 = (0..20_000).map(|_| rademacher(&mut rng)).sum();
        assert!(sum.abs() < 600.0);
    }
}
