//! Shared fixtures for the benchmarks.

use nsbl_core::aero::{experiment, synthesize_observations, AeroSystem, ObservationSeries, SimulationConfig};
use nsbl_core::gmm::build_kde_gmm;
use nsbl_core::GmmApproximation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Gaussian cloud of `n` draws around the reference parameters of `id`.
pub fn posterior_like_samples(id: &str, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let spec = experiment(id).expect("known experiment");
    let centre = spec.phi_of(&AeroSystem::reference());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            centre
                .iter()
                .map(|&c| {
                    let sd = if c == 0.0 { 50.0 } else { 0.05 * c.abs() };
                    c + sd * z.sample(&mut rng)
                })
                .collect()
        })
        .collect()
}

/// KDE mixture over [`posterior_like_samples`] with the experiment's partition.
pub fn kde_fixture(id: &str, n: usize) -> GmmApproximation {
    let spec = experiment(id).expect("known experiment");
    build_kde_gmm(&posterior_like_samples(id, n, 7), &spec.partition()).expect("non-degenerate samples")
}

/// Observation record of `seconds` length from the reference system.
pub fn observations(seconds: f64) -> ObservationSeries {
    let cfg = SimulationConfig {
        duration_s: seconds,
        ..Default::default()
    };
    synthesize_observations(&AeroSystem::reference(), &cfg).expect("reference system simulates")
}
