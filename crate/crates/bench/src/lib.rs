//! Shared fixtures for the criterion benchmarks.

use qsa_core::experiments::{lognormal_vectors, GradientDistribution};
use qsa_core::ring::{Role, SharedRandomness};
use rand::Rng;

/// `n` log-normal gradient surrogates of dimension `d`.
pub fn gradients(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    lognormal_vectors(
        n,
        d,
        &GradientDistribution::default(),
        &SharedRandomness::new(seed),
    )
    .expect("default log-normal parameters are valid")
}

/// Aggregation inputs: an `n x m` bit matrix and per-client scales.
pub struct AggregationInput {
    pub bits: Vec<Vec<u8>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Random aggregation inputs with scales in [-1, 1].
pub fn aggregation_input(n: usize, m: usize, seed: u64) -> AggregationInput {
    let mut rng = SharedRandomness::new(seed).stream(Role::Public, 0);
    let bits = (0..n)
        .map(|_| (0..m).map(|_| rng.random::<bool>() as u8).collect())
        .collect();
    let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
    let hi = lo.iter().map(|l| l + rng.random_range(0.0..1.0)).collect();
    AggregationInput { bits, lo, hi }
}
