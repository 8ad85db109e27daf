//! Convergence-rate check at the 1-bit medium-SNR operating point: most
//! seeded trials must meet the stopping tolerance well before the iteration
//! cap.

use valse_ep_cli::experiment::run_experiment;
use valse_ep_cli::scenario::{Algorithm, BitDepth, ScenarioConfig, WeightMagnitude};

#[test]
fn one_bit_medium_snr_converges_within_200_iterations() {
    let cfg = ScenarioConfig {
        n: 100,
        k: 3,
        snr_db: vec![20.0],
        bits: vec![BitDepth::Finite(1)],
        trials: 50,
        seed: 424_242,
        algorithms: vec![Algorithm::ValseEp],
        freqs: None,
        weight_magnitude: WeightMagnitude::Gaussian,
        max_iters: 1000,
        tol: 1e-6,
    };
    let (rows, _) = run_experiment(&cfg).unwrap();
    let good = rows
        .iter()
        .filter(|r| r.converged && r.iterations <= 200)
        .count() as f64
        / rows.len() as f64;
    assert!(
        good >= 0.90,
        "only {good:.2} of trials converged within 200 iterations"
    );
}
