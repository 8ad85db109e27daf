//! Per-trial metric records and their aggregation.

use serde::Serialize;

/// Outcome of a single Monte Carlo trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub algorithm: String,
    pub n: usize,
    pub k: usize,
    pub snr_db: f64,
    pub bits: String,
    pub trial: usize,
    pub k_hat: usize,
    pub success: bool,
    /// Raw NMSE in dB (always recorded).
    pub nmse_db: f64,
    /// Scale-debiased NMSE in dB (the headline metric under 1 bit).
    pub dnmse_db: f64,
    /// Frequency MSE in dB; present only when the model order was correct.
    pub freq_mse_db: Option<f64>,
    /// Frequency CRB trace in dB for this trial's ground truth and channel.
    pub crb_freq_db: Option<f64>,
    /// Unquantized frequency CRB trace in dB (reference curve).
    pub crb_unq_freq_db: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Trial failed outside the estimator contract (recorded, not fatal).
    pub error: Option<String>,
}

/// Aggregate over the trials of one scenario cell; every field is
/// recomputable from the per-trial rows.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub scenario: String,
    pub algorithm: String,
    pub n: usize,
    pub k: usize,
    pub snr_db: f64,
    pub bits: String,
    pub trials: usize,
    /// Empirical probability of correct model order.
    pub p_correct: f64,
    /// Mean linear NMSE over all completed trials, in dB.
    pub nmse_db: f64,
    pub dnmse_db: f64,
    /// Mean linear frequency MSE over model-order-correct trials, in dB.
    pub freq_mse_db: Option<f64>,
    /// Mean CRB trace over the same gated trials, in dB.
    pub crb_freq_db: Option<f64>,
    pub crb_unq_freq_db: Option<f64>,
    pub median_iterations: usize,
    pub converged_rate: f64,
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn linear_mean_db(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Some(10.0 * mean.max(1e-300).log10())
}

/// Reduce the trial rows of one scenario cell. Trials that errored count
/// as model-order misses and are excluded from the error metrics.
pub fn aggregate(rows: &[TrialRecord]) -> Aggregate {
    assert!(!rows.is_empty());
    let head = &rows[0];
    let completed: Vec<&TrialRecord> = rows.iter().filter(|r| r.error.is_none()).collect();
    let successes: Vec<&TrialRecord> = completed.iter().copied().filter(|r| r.success).collect();
    let p_correct = successes.len() as f64 / rows.len() as f64;

    let nmse_db = linear_mean_db(completed.iter().map(|r| db_to_linear(r.nmse_db)))
        .unwrap_or(f64::NAN);
    let dnmse_db = linear_mean_db(completed.iter().map(|r| db_to_linear(r.dnmse_db)))
        .unwrap_or(f64::NAN);
    let freq_mse_db = linear_mean_db(
        successes
            .iter()
            .filter_map(|r| r.freq_mse_db)
            .map(db_to_linear),
    );
    let crb_freq_db = linear_mean_db(
        successes
            .iter()
            .filter_map(|r| r.crb_freq_db)
            .map(db_to_linear),
    );
    let crb_unq_freq_db = linear_mean_db(
        successes
            .iter()
            .filter_map(|r| r.crb_unq_freq_db)
            .map(db_to_linear),
    );

    let mut iters: Vec<usize> = completed.iter().map(|r| r.iterations).collect();
    iters.sort_unstable();
    let median_iterations = if iters.is_empty() {
        0
    } else {
        iters[iters.len() / 2]
    };
    let converged_rate = if completed.is_empty() {
        0.0
    } else {
        completed.iter().filter(|r| r.converged).count() as f64 / completed.len() as f64
    };

    Aggregate {
        scenario: head.scenario.clone(),
        algorithm: head.algorithm.clone(),
        n: head.n,
        k: head.k,
        snr_db: head.snr_db,
        bits: head.bits.clone(),
        trials: rows.len(),
        p_correct,
        nmse_db,
        dnmse_db,
        freq_mse_db,
        crb_freq_db,
        crb_unq_freq_db,
        median_iterations,
        converged_rate,
    }
}
