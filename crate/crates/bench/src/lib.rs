//! Shared fixtures for the benchmarks.

use gwr_core::simulation::{generate_proposed_pair, generating_tensor};
use gwr_core::GaussianMeasure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n` predictor/response pairs drawn from the proposed model in dimension `d`.
pub fn proposed_pairs(d: usize, n: usize, seed: u64) -> (Vec<GaussianMeasure>, Vec<GaussianMeasure>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b0 = generating_tensor(d);
    (0..n)
        .map(|_| {
            let pair = generate_proposed_pair(&mut rng, d, b0.tensor()).expect("generated pair");
            (pair.predictor, pair.response)
        })
        .unzip()
}
