//! Classic variational line spectral estimator for homogeneous noise.
//!
//! This is the reference path that fits the samples directly under a scalar
//! noise variance: `J` and `h` are formed from plain inner products divided
//! by `sigma2`, the frequency updates use the scalar-noise expression for
//! `eta_i`, and the noise variance (when learned) is updated by the EM
//! residual form inside this module. It doubles as the AQNM baseline when
//! fed midpoint-dequantized samples, and as the equivalence oracle the
//! message-passing estimator must collapse to on unquantized data.

use crate::error::{Error, Result};
use crate::runner::{toeplitz_noise_floor, IterationRecord, RunTrace};
use crate::signal::{ComplexSignal, EstimateResult};
use crate::valse::{
    estimate_prior_params, greedy_support_search, posterior_lse, FrequencyPosterior,
    PriorParams, SupportState, TAU_MIN,
};
use crate::vonmises::LobeProjector;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Configuration of the homogeneous reference estimator.
#[derive(Debug, Clone)]
pub struct ValseConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub learn_noise: bool,
    pub sigma2: Option<f64>,
    pub full_trace: bool,
}

impl Default for ValseConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            learn_noise: true,
            sigma2: None,
            full_trace: false,
        }
    }
}

/// Homogeneous `J' = A^H A` (diagonal overwritten with N) and `h' = A^H y`,
/// divided by the scalar noise variance.
fn jh_homogeneous(
    a_hat: &DMatrix<Complex64>,
    y: &DVector<Complex64>,
    sigma2: f64,
) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let n = a_hat.nrows();
    let mut j = a_hat.adjoint() * a_hat;
    for i in 0..n {
        j[(i, i)] = Complex64::new(n as f64, 0.0);
    }
    let h = a_hat.adjoint() * y;
    let inv = Complex64::new(1.0 / sigma2, 0.0);
    (j * inv, h * inv)
}

/// Run the homogeneous estimator on (possibly dequantized) samples.
pub fn run_valse(y: &ComplexSignal, cfg: &ValseConfig) -> Result<(EstimateResult, RunTrace)> {
    if cfg.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
    }
    if !cfg.learn_noise && cfg.sigma2.is_none() {
        return Err(Error::InvalidParameter(
            "a fixed noise variance requires sigma2".into(),
        ));
    }
    let n = y.len();
    let yv = DVector::from_column_slice(y.as_slice());
    let mut projector = LobeProjector::new(n);
    let mut sigma2 = match cfg.sigma2 {
        Some(s2) => s2,
        None => toeplitz_noise_floor(y.as_slice()),
    };

    // moment-matched prior scale, then the sequential matched-filter pass
    let rho = 0.5;
    let fit: f64 = yv.norm_squared() / sigma2;
    let trace_inv = n as f64 / sigma2;
    let tau = (fit - n as f64) / (rho * n as f64 * trace_inv);
    let mut prior = PriorParams::clamped(rho, tau.max(TAU_MIN), n);

    // same single-component profile-likelihood density as the
    // message-passing path, specialized to the scalar noise variance
    let profile_scale = 1.0 / trace_inv;
    let mut freq_post = FrequencyPosterior::uniform(n);
    let mut residual = yv.clone();
    for i in 0..n {
        let c: Vec<Complex64> = residual.iter().map(|r| r / sigma2).collect();
        let vm = projector.project_power(&c, profile_scale);
        freq_post.set(i, vm);
        let a_i = freq_post.moment_col(i);
        let w_i = a_i.dotc(&residual) / sigma2 * profile_scale;
        residual -= a_i * w_i;
    }

    let mut support = vec![false; n];
    let mut trace = RunTrace::default();
    let mut z_prev: Option<DVector<Complex64>> = None;
    let mut final_state: Option<(SupportState, DVector<Complex64>)> = None;

    for _t in 0..cfg.max_iters {
        let (j, h) = jh_homogeneous(freq_post.moments(), &yv, sigma2);
        let mut state = SupportState::new(j, h, &support, &prior)?;
        greedy_support_search(&mut state, &prior, 5 * n)?;
        support.copy_from_slice(state.support());
        prior = estimate_prior_params(&state, &prior);
        update_frequencies_homogeneous(&state, &mut freq_post, &yv, sigma2, &mut projector);
        let (z_post, v_post) =
            posterior_lse(&freq_post, state.active(), state.weights(), state.weight_cov());
        if cfg.learn_noise {
            sigma2 = (((&yv - &z_post).norm_squared()) + v_post.sum()) / n as f64;
            sigma2 = sigma2.max(1e-14);
        }

        let rel_change = match &z_prev {
            Some(prev) => {
                let num = (&z_post - prev).norm();
                let den = z_post.norm();
                if den > 0.0 {
                    num / den
                } else if num == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            None => f64::INFINITY,
        };
        trace.iterations.push(IterationRecord {
            k_hat: state.model_order(),
            sigma2,
            rho: prior.rho,
            tau: prior.tau,
            rel_change,
        });
        if cfg.full_trace {
            trace.spectra.push(z_post.iter().copied().collect());
            trace
                .freqs
                .push(state.active().iter().map(|&i| freq_post.vm(i).mu).collect());
        }

        z_prev = Some(z_post.clone());
        final_state = Some((state, z_post));
        if rel_change < cfg.tol {
            trace.converged = true;
            break;
        }
    }

    let (state, z_post) = final_state.expect("max_iters >= 1");
    let estimate = EstimateResult {
        model_order: state.model_order(),
        freqs: state.active().iter().map(|&i| freq_post.vm(i).mu).collect(),
        weights: state.weights().iter().copied().collect(),
        spectrum: ComplexSignal::new(z_post.iter().copied().collect())
            .unwrap_or_else(|_| ComplexSignal::new(vec![Complex64::ZERO; n]).unwrap()),
        support: state.active().to_vec(),
    };
    Ok((estimate, trace))
}

/// Scalar-noise frequency refresh:
/// `eta_i = (2/sigma2) [(y - sum_{l != i} a_l w_l) w_i^* - sum_{l != i} a_l C_li]`.
fn update_frequencies_homogeneous(
    state: &SupportState,
    freq_post: &mut FrequencyPosterior,
    y: &DVector<Complex64>,
    sigma2: f64,
    projector: &mut LobeProjector,
) {
    let n = y.len();
    let active = state.active().to_vec();
    if active.is_empty() {
        return;
    }
    let mut residual = y.clone();
    for (p, &i) in active.iter().enumerate() {
        residual -= freq_post.moment_col(i) * state.weights()[p];
    }
    let scale = 2.0 / sigma2;
    let mut eta = vec![Complex64::ZERO; n];
    for (p, &i) in active.iter().enumerate() {
        let a_i = freq_post.moment_col(i);
        let w_i = state.weights()[p];
        let mut cross = DVector::zeros(n);
        for (q, &l) in active.iter().enumerate() {
            if q != p {
                cross += freq_post.moment_col(l) * state.weight_cov()[(q, p)];
            }
        }
        for r in 0..n {
            let excl = residual[r] + a_i[r] * w_i;
            eta[r] = scale * (excl * w_i.conj() - cross[r]);
        }
        let vm = projector.project_eta(&eta);
        freq_post.set(i, vm);
        let a_new = freq_post.moment_col(i);
        for r in 0..n {
            residual[r] += (a_i[r] - a_new[r]) * w_i;
        }
    }
}
