//! Outer loop of the estimator: initialization, alternation between the
//! linear module and the MMSE module, noise-variance EM and convergence
//! control.

use crate::error::{Error, Result};
use crate::message::{self, GaussianMessage};
use crate::mmse::{self, Channel, NoiseModel};
use crate::quantizer::dequantize_aqnm;
use crate::signal::{ComplexSignal, EstimateResult};
use crate::valse::{
    self, compute_jh, estimate_prior_params, greedy_support_search, posterior_lse,
    FrequencyPosterior, PriorParams, SupportState, TAU_MIN,
};
use crate::vonmises::LobeProjector;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Knobs of a single estimation run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub max_iters: usize,
    /// Relative spectrum change below which the run stops.
    pub tol: f64,
    /// Learn the noise variance by EM; when false `sigma2` must be given.
    pub learn_noise: bool,
    /// Known noise variance, or the initial value when learning. `None`
    /// estimates the initial value from the measurement autocorrelation.
    pub sigma2: Option<f64>,
    /// Initial extrinsic variance fed to the MMSE module.
    pub init_v_ext: f64,
    /// Carried in run metadata; the estimator itself draws no randomness.
    pub seed: u64,
    /// Record per-iteration spectra and message moments (diagnostics).
    pub full_trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-6,
            learn_noise: true,
            sigma2: None,
            init_v_ext: 10.0,
            seed: 0,
            full_trace: false,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("tol must be positive".into()));
        }
        if !self.learn_noise && self.sigma2.is_none() {
            return Err(Error::InvalidParameter(
                "a fixed noise variance requires sigma2".into(),
            ));
        }
        if let Some(s2) = self.sigma2 {
            if !(s2 > 0.0) {
                return Err(Error::InvalidParameter("sigma2 must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Scalar summary of one outer iteration.
#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    pub k_hat: usize,
    pub sigma2: f64,
    pub rho: f64,
    pub tau: f64,
    pub rel_change: f64,
}

/// Message moments captured per iteration when `full_trace` is on.
#[derive(Debug, Clone)]
pub struct EpRecord {
    pub v_a_post: Vec<f64>,
    pub z_b_post: Vec<Complex64>,
    pub v_b_post: Vec<f64>,
    pub z_b_ext: Vec<Complex64>,
    pub v_b_ext: Vec<f64>,
    pub sigma2_before: f64,
    pub sigma2_after: f64,
}

/// Per-iteration history of a run.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    /// Reconstructed spectrum per iteration (only with `full_trace`).
    pub spectra: Vec<Vec<Complex64>>,
    /// Active frequencies per iteration (only with `full_trace`).
    pub freqs: Vec<Vec<f64>>,
    /// EP message diagnostics per iteration (only with `full_trace`).
    pub ep: Vec<EpRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }
}

/// State produced by the initialization stage.
pub struct InitState {
    pub pseudo_y: Vec<Complex64>,
    pub pseudo_var: Vec<f64>,
    pub freq_post: FrequencyPosterior,
    pub prior: PriorParams,
    pub sigma2: f64,
    pub ext_a: GaussianMessage,
}

/// Noise-floor estimate: build the Hermitian Toeplitz autocorrelation
/// estimate of the samples and average its lowest quarter of eigenvalues.
pub fn toeplitz_noise_floor(y: &[Complex64]) -> f64 {
    let n = y.len();
    let mut gamma = vec![Complex64::ZERO; n];
    for lag in 0..n {
        let mut acc = Complex64::ZERO;
        for k in lag..n {
            acc += y[k] * y[k - lag].conj();
        }
        gamma[lag] = acc / n as f64;
    }
    let t = DMatrix::from_fn(n, n, |r, c| {
        if r >= c {
            gamma[r - c]
        } else {
            gamma[c - r].conj()
        }
    });
    let herm = (&t + t.adjoint()) * Complex64::new(0.5, 0.0);
    let mut eigs: Vec<f64> = herm.symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    let quarter = (n / 4).max(1);
    let mean = eigs[..quarter].iter().sum::<f64>() / quarter as f64;
    mean.max(1e-12)
}

/// Initialization: AQNM dequantization, Toeplitz noise floor, one MMSE pass,
/// moment-matched prior parameters and a sequential residual-matched-filter
/// pass over all component frequencies.
pub fn initialize(
    y: &ComplexSignal,
    channel: &Channel,
    cfg: &RunConfig,
    projector: &mut LobeProjector,
) -> Result<InitState> {
    let n = y.len();
    let y_q = match channel {
        Channel::Quantized(spec) => dequantize_aqnm(spec, y)?,
        Channel::Identity => y.clone(),
    };
    let sigma2 = match cfg.sigma2 {
        Some(s2) => s2,
        None => toeplitz_noise_floor(y_q.as_slice()),
    };

    let ext_a = GaussianMessage::flat(n, cfg.init_v_ext);
    let noise = NoiseModel::new(channel.clone(), sigma2)?;
    let post_b = mmse::posterior_moments(&ext_a, y, &noise)?;
    let ext_b = mmse::extrinsic(&post_b, &ext_a);
    let pseudo_y = ext_b.mean.clone();
    let pseudo_var = ext_b.var.clone();

    let rho = 0.5;
    let trace_inv: f64 = pseudo_var.iter().map(|v| 1.0 / v).sum();
    let fit: f64 = pseudo_y
        .iter()
        .zip(&pseudo_var)
        .map(|(yv, v)| yv.norm_sqr() / v)
        .sum();
    let tau = (fit - n as f64) / (rho * n as f64 * trace_inv);
    let prior = PriorParams::clamped(rho, tau.max(TAU_MIN), n);

    // Sequential frequency initialization on the weighted residual. The
    // density is the single-component profile likelihood with the weight
    // maximized out: exp(|y_r^H S^-1 a(theta)|^2 / tr(S^-1)); it scales
    // correctly for any pseudo noise level and stays concentrated enough to
    // seed the first support search. The weight estimate is the matching
    // weighted least-squares fit.
    let profile_scale = 1.0 / trace_inv;
    let mut freq_post = FrequencyPosterior::uniform(n);
    let mut residual = DVector::from_column_slice(&pseudo_y);
    for i in 0..n {
        let c: Vec<Complex64> = residual
            .iter()
            .zip(&pseudo_var)
            .map(|(r, v)| r / *v)
            .collect();
        let vm = projector.project_power(&c, profile_scale);
        freq_post.set(i, vm);
        let a_i = freq_post.moment_col(i);
        let w_i = a_i
            .iter()
            .zip(residual.iter())
            .zip(&pseudo_var)
            .map(|((a, r), v)| a.conj() * r / *v)
            .sum::<Complex64>()
            * profile_scale;
        residual -= a_i * w_i;
    }

    Ok(InitState {
        pseudo_y,
        pseudo_var,
        freq_post,
        prior,
        sigma2,
        ext_a,
    })
}

/// Run the full estimator on quantized (or unquantized) measurements.
pub fn run(
    y: &ComplexSignal,
    channel: &Channel,
    cfg: &RunConfig,
) -> Result<(EstimateResult, RunTrace)> {
    cfg.validate()?;
    let n = y.len();
    let mut projector = LobeProjector::new(n);
    let init = initialize(y, channel, cfg, &mut projector)?;

    let mut pseudo_y = init.pseudo_y;
    let mut pseudo_var = init.pseudo_var;
    let mut freq_post = init.freq_post;
    let mut prior = init.prior;
    let mut sigma2 = init.sigma2;
    let mut support = vec![false; n];

    // scale gauge exists only for the sign quantizer (both cells unbounded)
    let gauge_target: Option<f64> = match channel {
        Channel::Quantized(spec) if spec.cell_count() == 2 => {
            Some(dequantize_aqnm(spec, y)?.energy())
        }
        _ => None,
    };

    let mut trace = RunTrace::default();
    let mut z_prev: Option<DVector<Complex64>> = None;
    let mut final_state: Option<(SupportState, DVector<Complex64>)> = None;

    for _t in 0..cfg.max_iters {
        let (j, h) = compute_jh(freq_post.moments(), &pseudo_y, &pseudo_var);
        let mut state = SupportState::new(j, h, &support, &prior)?;
        greedy_support_search(&mut state, &prior, 5 * n)?;
        support.copy_from_slice(state.support());
        prior = estimate_prior_params(&state, &prior);
        valse::update_frequencies(&state, &mut freq_post, &pseudo_y, &pseudo_var, &mut projector);
        let (z_post, v_post) =
            posterior_lse(&freq_post, state.active(), state.weights(), state.weight_cov());
        let ext_a = valse::extrinsic(&z_post, &v_post, &pseudo_y, &pseudo_var);

        let noise = NoiseModel::new(channel.clone(), sigma2)?;
        let post_b = mmse::posterior_moments(&ext_a, y, &noise)?;
        let ext_b = mmse::extrinsic(&post_b, &ext_a);
        let sigma2_before = sigma2;
        if cfg.learn_noise {
            sigma2 = mmse::em_noise_update(&ext_b.mean, &post_b, n)?;
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
            trace.ep.push(EpRecord {
                v_a_post: v_post.iter().copied().collect(),
                z_b_post: post_b.mean.clone(),
                v_b_post: post_b.var.clone(),
                z_b_ext: ext_b.mean.clone(),
                v_b_ext: ext_b.var.clone(),
                sigma2_before,
                sigma2_after: sigma2,
            });
        }

        pseudo_y = ext_b.mean;
        pseudo_var = ext_b.var;
        if let Some(target) = gauge_target {
            // A sign quantizer carries no amplitude information, so scaling
            // (pseudo_y, pseudo_var, sigma2, tau) by a common factor is an
            // exact symmetry of every update and the EM iteration drifts
            // along it. Pin the gauge to the AQNM level scale.
            let current: f64 = pseudo_y.iter().map(|v| v.norm_sqr()).sum();
            if current > 0.0 {
                let g2 = (target / current).clamp(1e-12, 1e12);
                let g = g2.sqrt();
                for v in &mut pseudo_y {
                    *v *= g;
                }
                for v in &mut pseudo_var {
                    *v = message::clamp_var(*v * g2);
                }
                sigma2 *= g2;
                prior = PriorParams::clamped(prior.rho, prior.tau * g2, n);
            }
        }
        z_prev = Some(z_post.clone());
        final_state = Some((state, z_post));

        if rel_change < cfg.tol {
            trace.converged = true;
            break;
        }
    }

    let (state, z_post) = final_state.expect("max_iters >= 1");
    let estimate = build_estimate(&state, &freq_post, &z_post)?;
    Ok((estimate, trace))
}

fn build_estimate(
    state: &SupportState,
    freq_post: &FrequencyPosterior,
    z_post: &DVector<Complex64>,
) -> Result<EstimateResult> {
    let freqs: Vec<f64> = state.active().iter().map(|&i| freq_post.vm(i).mu).collect();
    let weights: Vec<Complex64> = state.weights().iter().copied().collect();
    Ok(EstimateResult {
        model_order: state.model_order(),
        freqs,
        weights,
        spectrum: ComplexSignal::new(z_post.iter().copied().collect())
            .unwrap_or_else(|_| ComplexSignal::new(vec![Complex64::ZERO; state.n()]).unwrap()),
        support: state.active().to_vec(),
    })
}

/// The two noise-variance routes of the unquantized algorithm.
///
/// `sigma2_va` is the closed form with `J'_ii = N`, `J'_ij = a_i^H a_j`;
/// `sigma2_em` applies the EM residual form to the linear-module posterior.
/// They agree algebraically; both are returned so equality can be asserted.
pub fn property1_noise_estimates(
    y: &ComplexSignal,
    freq_post: &FrequencyPosterior,
    active: &[usize],
    w: &DVector<Complex64>,
    c: &DMatrix<Complex64>,
) -> (f64, f64) {
    let n = y.len() as f64;
    let yv = DVector::from_column_slice(y.as_slice());

    // direct (variational) form
    let mut recon = DVector::zeros(y.len());
    for (p, &i) in active.iter().enumerate() {
        recon += freq_post.moment_col(i) * w[p];
    }
    let fit = (&yv - &recon).norm_squared() / n;
    let mut jc = 0.0;
    for (p, &i) in active.iter().enumerate() {
        for (q, &l) in active.iter().enumerate() {
            let jpq = if p == q {
                Complex64::new(n, 0.0)
            } else {
                freq_post.moment_col(i).dotc(&freq_post.moment_col(l))
            };
            // tr(J' C) accumulates J'_{pq} C_{qp}
            jc += (jpq * c[(q, p)]).re;
        }
    }
    let mut atom_deficit = 0.0;
    for (p, &i) in active.iter().enumerate() {
        let norm2 = freq_post.moment_col(i).norm_squared();
        atom_deficit += w[p].norm_sqr() * (1.0 - norm2 / n);
    }
    let sigma2_va = fit + jc / n + atom_deficit;

    // EM form on the module-A posterior
    let (z_post, v_post) = posterior_lse(freq_post, active, w, c);
    let sigma2_em = ((&yv - &z_post).norm_squared() + v_post.sum()) / n;

    (sigma2_va, sigma2_em)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vonmises::VonMises;
    use approx::assert_relative_eq;

    #[test]
    fn toeplitz_floor_on_pure_noise() {
        // Monte Carlo check against a known noise variance. Averaging the
        // lowest quarter of the eigenvalues is a deliberate floor: on pure
        // AWGN the measured median ratio is ~0.26, stable across seeds.
        use rand::prelude::*;
        use rand_distr::{Distribution, Normal};
        let n = 100;
        let sigma2 = 0.5f64;
        let axis = Normal::new(0.0, (sigma2 / 2.0).sqrt()).unwrap();
        let mut ratios: Vec<f64> = (0..20u64)
            .map(|trial| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1000 + trial);
                let y: Vec<Complex64> = (0..n)
                    .map(|_| Complex64::new(axis.sample(&mut rng), axis.sample(&mut rng)))
                    .collect();
                toeplitz_noise_floor(&y) / sigma2
            })
            .collect();
        ratios.sort_by(|a, b| a.total_cmp(b));
        let median = ratios[ratios.len() / 2];
        assert!((0.1..=1.0).contains(&median), "median ratio {median}");
        assert!(ratios[0] > 0.03 && ratios[ratios.len() - 1] < 2.0);
    }

    #[test]
    fn init_locks_onto_a_clean_tone() {
        // noiseless single tone, unquantized: the first initialized
        // component must land within one grid bin of the true frequency
        let theta = 1.234;
        let truth = crate::signal::GroundTruth::new(
            vec![theta],
            vec![Complex64::new(1.0, 0.4)],
        )
        .unwrap();
        let z = crate::signal::synthesize(&truth, 64).unwrap();
        let mut proj = crate::vonmises::LobeProjector::new(64);
        let cfg = RunConfig {
            sigma2: Some(1e-4),
            ..Default::default()
        };
        let init = initialize(&z, &Channel::Identity, &cfg, &mut proj).unwrap();
        let bin = std::f64::consts::TAU / proj.grid_size() as f64;
        let got = init.freq_post.vm(0).mu;
        assert!(
            crate::signal::wrap(got - theta).abs() <= bin,
            "first mode {got} vs tone {theta}"
        );
        assert!(init.freq_post.vm(0).kappa > 100.0);
    }

    #[test]
    fn init_on_pure_noise_clamps_prior_scale() {
        use rand::prelude::*;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let axis = Normal::new(0.0, 0.5).unwrap();
        let y = ComplexSignal::new(
            (0..64)
                .map(|_| Complex64::new(axis.sample(&mut rng), axis.sample(&mut rng)))
                .collect(),
        )
        .unwrap();
        let mut proj = crate::vonmises::LobeProjector::new(64);
        // a huge assumed noise variance forces the moment-matched tau
        // negative, which must clamp at the floor
        let cfg = RunConfig {
            sigma2: Some(100.0),
            ..Default::default()
        };
        let init = initialize(&y, &Channel::Identity, &cfg, &mut proj).unwrap();
        assert_eq!(init.prior.rho, 0.5);
        assert!(init.prior.tau <= 1e-9, "tau {} not clamped", init.prior.tau);
    }

    #[test]
    fn property1_empty_support_reduces_to_power() {
        let y = ComplexSignal::new(vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.3, 0.2),
            Complex64::new(0.0, -1.0),
        ])
        .unwrap();
        let fp = FrequencyPosterior::uniform(3);
        let (va, em) = property1_noise_estimates(
            &y,
            &fp,
            &[],
            &DVector::zeros(0),
            &DMatrix::zeros(0, 0),
        );
        let power = y.energy() / 3.0;
        assert_relative_eq!(va, power, max_relative = 1e-14);
        assert_relative_eq!(em, power, max_relative = 1e-14);
    }

    #[test]
    fn property1_exact_atoms_agree() {
        let n = 6;
        let mut fp = FrequencyPosterior::uniform(n);
        fp.set(0, VonMises { mu: 0.5, kappa: 1e12 });
        fp.set(3, VonMises { mu: -1.1, kappa: 1e12 });
        let w = DVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let mut c = DMatrix::zeros(2, 2);
        c[(0, 0)] = Complex64::new(0.01, 0.0);
        c[(1, 1)] = Complex64::new(0.02, 0.0);
        let y = ComplexSignal::new(
            (0..n).map(|i| Complex64::new(0.3 * i as f64, -0.2)).collect(),
        )
        .unwrap();
        let (va, em) = property1_noise_estimates(&y, &fp, &[0, 3], &w, &c);
        assert_relative_eq!(va, em, max_relative = 1e-12);
    }
}
