//! Acceptance suite: every release gate runs here at its stated tolerance
//! and prints one PASS line per criterion (run with `--nocapture` to see
//! them; failures print the measured values).
//!
//! The full-figure reproduction at publication scale (500 trials, full
//! SNR/N/K sweeps) is deliberately not asserted; the README documents the
//! long-running recipe that regenerates those curves.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::sync::OnceLock;
use valse_ep::homogeneous::{run_valse, ValseConfig};
use valse_ep::mmse::{posterior_moments, Channel, NoiseModel};
use valse_ep::oracles::{
    best_support_exhaustive, dense_weight_posterior, jacobian_finite_difference, ln_evidence,
    trunc_posterior_quadrature,
};
use valse_ep::quantizer::{quantize, QuantizerSpec};
use valse_ep::runner::{property1_noise_estimates, run, RunConfig};
use valse_ep::signal::{synthesize, wrap, ComplexSignal, GroundTruth};
use valse_ep::valse::{compute_jh, FrequencyPosterior, PriorParams, SupportState};
use valse_ep::vonmises::{LobeProjector, VonMises};
use valse_ep::GaussianMessage;
use valse_ep_cli::metrics::TrialRecord;
use valse_ep_cli::scenario::{Algorithm, BitDepth, ScenarioConfig, WeightMagnitude};

const TRIALS: usize = 50;

fn scenario(
    n: usize,
    k: usize,
    snr_db: f64,
    bits: BitDepth,
    algorithms: Vec<Algorithm>,
    freqs: Option<Vec<f64>>,
    unit_mags: bool,
) -> ScenarioConfig {
    ScenarioConfig {
        n,
        k,
        snr_db: vec![snr_db],
        bits: vec![bits],
        trials: TRIALS,
        seed: 20_260_809,
        algorithms,
        freqs,
        weight_magnitude: if unit_mags {
            WeightMagnitude::Unit
        } else {
            WeightMagnitude::Gaussian
        },
        max_iters: 1000,
        tol: 1e-6,
    }
}

fn sweep(cfg: &ScenarioConfig) -> Vec<TrialRecord> {
    let (rows, _) = valse_ep_cli::experiment::run_experiment(cfg).expect("sweep runs");
    rows
}

fn linear_mean_db(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    assert!(!v.is_empty(), "no gated trials");
    10.0 * (v.iter().map(|d| 10f64.powf(d / 10.0)).sum::<f64>() / v.len() as f64).log10()
}

fn criterion2_rows() -> &'static Vec<TrialRecord> {
    static ROWS: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    ROWS.get_or_init(|| {
        sweep(&scenario(
            100,
            3,
            40.0,
            BitDepth::Inf,
            vec![Algorithm::ValseEp],
            None,
            false,
        ))
    })
}

fn criterion3_rows() -> &'static Vec<TrialRecord> {
    static ROWS: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    ROWS.get_or_init(|| {
        sweep(&scenario(
            160,
            3,
            10.0,
            BitDepth::Finite(1),
            vec![Algorithm::ValseEp],
            None,
            false,
        ))
    })
}

#[test]
fn criterion_1_harmonic_suppression() {
    let started = std::time::Instant::now();
    let cfg = scenario(
        100,
        2,
        20.0,
        BitDepth::Finite(1),
        vec![Algorithm::ValseEp, Algorithm::ValseAqnm],
        Some(vec![-1.0, 2.0]),
        true,
    );
    let rows = sweep(&cfg);
    let ep: Vec<&TrialRecord> = rows.iter().filter(|r| r.algorithm == "valse_ep").collect();
    let aqnm: Vec<&TrialRecord> = rows
        .iter()
        .filter(|r| r.algorithm == "valse_aqnm")
        .collect();
    assert_eq!(ep.len(), TRIALS);
    assert_eq!(aqnm.len(), TRIALS);
    let ep_correct = ep.iter().filter(|r| r.k_hat == 2).count() as f64 / TRIALS as f64;
    let aqnm_over = aqnm.iter().filter(|r| r.k_hat > 2).count() as f64 / TRIALS as f64;
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        ep_correct >= 0.80,
        "message-passing correct-order rate {ep_correct:.2} < 0.80"
    );
    assert!(
        aqnm_over >= 0.50,
        "baseline overestimation rate {aqnm_over:.2} < 0.50"
    );
    assert!(elapsed <= 300.0, "runtime {elapsed:.0}s over budget");
    println!(
        "criterion 1 PASS: harmonic suppression (correct {ep_correct:.2}, baseline-over \
         {aqnm_over:.2}, {elapsed:.0}s)"
    );
}

#[test]
fn criterion_2_unquantized_crb_approach() {
    let started = std::time::Instant::now();
    let rows = criterion2_rows();
    let mse = linear_mean_db(rows.iter().filter_map(|r| r.freq_mse_db));
    let crb = linear_mean_db(rows.iter().filter_map(|r| r.crb_unq_freq_db));
    let gap = mse - crb;
    let elapsed = started.elapsed().as_secs_f64();
    assert!(
        gap.abs() <= 3.0,
        "frequency MSE {mse:.2} dB vs CRB {crb:.2} dB: gap {gap:.2} dB exceeds 3 dB"
    );
    assert!(elapsed <= 300.0, "runtime {elapsed:.0}s over budget");
    println!(
        "criterion 2 PASS: unquantized CRB approach (MSE {mse:.2} dB, CRB {crb:.2} dB, gap \
         {gap:+.2} dB)"
    );
}

#[test]
fn criterion_3_one_bit_near_crb() {
    let started = std::time::Instant::now();
    let rows = criterion3_rows();
    let success =
        rows.iter().filter(|r| r.success).count() as f64 / rows.len() as f64;
    let mse = linear_mean_db(rows.iter().filter_map(|r| r.freq_mse_db));
    let crb = linear_mean_db(rows.iter().filter_map(|r| r.crb_freq_db));
    let gap = mse - crb;
    let elapsed = started.elapsed().as_secs_f64();
    assert!(success >= 0.7, "model-order success rate {success:.2} < 0.7");
    assert!(
        gap.abs() <= 5.0,
        "frequency MSE {mse:.2} dB vs 1-bit CRB {crb:.2} dB: gap {gap:.2} dB exceeds 5 dB"
    );
    assert!(elapsed <= 600.0, "runtime {elapsed:.0}s over budget");
    println!(
        "criterion 3 PASS: 1-bit near-CRB (success {success:.2}, MSE {mse:.2} dB, CRB {crb:.2} \
         dB, gap {gap:+.2} dB)"
    );
}

#[test]
fn criterion_4_convergence_in_tens_of_iterations() {
    let median = |rows: &[TrialRecord]| -> usize {
        let mut iters: Vec<usize> = rows.iter().map(|r| r.iterations).collect();
        iters.sort_unstable();
        iters[iters.len() / 2]
    };
    let m2 = median(criterion2_rows());
    let m3 = median(criterion3_rows());
    assert!(m2 <= 100, "criterion-2 median iterations {m2} > 100");
    assert!(m3 <= 100, "criterion-3 median iterations {m3} > 100");
    println!("criterion 4 PASS: median iterations {m2} (unquantized) / {m3} (1-bit)");
}

#[test]
fn criterion_5_noise_variance_route_equality() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(8..24);
        let m = rng.random_range(1..5.min(n));
        let mut fp = FrequencyPosterior::uniform(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut active = idx[..m].to_vec();
        active.sort_unstable();
        for &i in &active {
            fp.set(
                i,
                VonMises {
                    mu: rng.random_range(-3.1..3.1),
                    kappa: rng.random_range(0.0..300.0),
                },
            );
        }
        let w = DVector::from_iterator(
            m,
            (0..m).map(|_| Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))),
        );
        let l = DMatrix::from_fn(m, m, |r, c| {
            if r > c {
                Complex64::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3))
            } else if r == c {
                Complex64::new(rng.random_range(0.05..0.5), 0.0)
            } else {
                Complex64::ZERO
            }
        });
        let cov = &l * l.adjoint();
        let y = ComplexSignal::new(
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect(),
        )
        .unwrap();
        let (va, em) = property1_noise_estimates(&y, &fp, &active, &w, &cov);
        worst = worst.max((va - em).abs() / va.abs());
    }
    assert!(worst <= 1e-10, "worst relative route split {worst:.3e}");
    println!("criterion 5 PASS: noise-variance routes agree (worst split {worst:.1e})");
}

#[test]
fn criterion_6_unquantized_equivalence() {
    let mut worst_spec: f64 = 0.0;
    let mut worst_ext: f64 = 0.0;
    for seed in 0..20u64 {
        let (y, sigma2) = random_unquantized_instance(64, 3, 20.0, 600 + seed);
        let ep_cfg = RunConfig {
            learn_noise: false,
            sigma2: Some(sigma2),
            full_trace: true,
            ..Default::default()
        };
        let (_, tr_ep) = run(&y, &Channel::Identity, &ep_cfg).unwrap();
        let va_cfg = ValseConfig {
            learn_noise: false,
            sigma2: Some(sigma2),
            full_trace: true,
            ..Default::default()
        };
        let (_, tr_va) = run_valse(&y, &va_cfg).unwrap();
        assert_eq!(
            tr_ep.len(),
            tr_va.len(),
            "seed {seed}: iteration counts differ"
        );
        for t in 0..tr_ep.len() {
            assert_eq!(
                tr_ep.iterations[t].k_hat, tr_va.iterations[t].k_hat,
                "seed {seed}: model order diverged at t={t}"
            );
            let num: f64 = tr_ep.spectra[t]
                .iter()
                .zip(&tr_va.spectra[t])
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let den: f64 = tr_va.spectra[t].iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
            worst_spec = worst_spec.max(num / (1.0 + den));
            for (fa, fb) in tr_ep.freqs[t].iter().zip(&tr_va.freqs[t]) {
                worst_spec = worst_spec.max(wrap(fa - fb).abs());
            }
            // the EP identity: extrinsic of the MMSE module is exactly the
            // measurement and the known noise variance
            let rec = &tr_ep.ep[t];
            for (ext, meas) in rec.z_b_ext.iter().zip(y.as_slice()) {
                worst_ext = worst_ext.max((ext - meas).norm() / (1.0 + meas.norm()));
            }
            for v in &rec.v_b_ext {
                worst_ext = worst_ext.max((v - sigma2).abs() / sigma2);
            }
        }
    }
    assert!(worst_spec <= 1e-8, "worst per-iteration deviation {worst_spec:.3e}");
    assert!(worst_ext <= 1e-10, "worst extrinsic identity error {worst_ext:.3e}");
    println!(
        "criterion 6 PASS: unquantized equivalence (path dev {worst_spec:.1e}, extrinsic \
         identity {worst_ext:.1e})"
    );
}

#[test]
fn criterion_7a_mmse_moments_vs_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut worst: f64 = 0.0;
    for case in 0..120 {
        let b = 1 + (case % 3) as u32;
        let spec = QuantizerSpec::build_uniform(b, 1.0).unwrap();
        let mean = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let var: f64 = rng.random_range(0.05..6.0);
        let sigma2: f64 = rng.random_range(0.05..6.0);
        let x = Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let y = quantize(&spec, &ComplexSignal::new(vec![x]).unwrap()).unwrap();
        let prior = GaussianMessage::new(vec![mean], vec![var]).unwrap();
        let noise = NoiseModel::new(Channel::Quantized(spec.clone()), sigma2).unwrap();
        let post = posterior_moments(&prior, &y, &noise).unwrap();
        let (lo, hi) = spec.interval_of(spec.level_index(y[0].re).unwrap()).unwrap();
        let (m, v) = trunc_posterior_quadrature(mean.re, var / 2.0, sigma2 / 2.0, lo, hi, 20001);
        worst = worst.max((post.mean[0].re - m).abs());
        let (loi, hii) = spec.interval_of(spec.level_index(y[0].im).unwrap()).unwrap();
        let (mi, vi) =
            trunc_posterior_quadrature(mean.im, var / 2.0, sigma2 / 2.0, loi, hii, 20001);
        worst = worst.max((post.mean[0].im - mi).abs());
        worst = worst.max((post.var[0] - (v + vi)).abs());
    }
    assert!(worst <= 1e-6, "worst moment deviation {worst:.3e}");
    println!("criterion 7a PASS: MMSE moments vs quadrature (worst {worst:.1e})");
}

#[test]
fn criterion_7b_evidence_increments_vs_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(701);
    let mut worst: f64 = 0.0;
    for n in 3..=6 {
        for _ in 0..15 {
            let mut fp = FrequencyPosterior::uniform(n);
            for i in 0..n {
                fp.set(
                    i,
                    VonMises {
                        mu: rng.random_range(-3.1..3.1),
                        kappa: rng.random_range(0.0..60.0),
                    },
                );
            }
            let y: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
                .collect();
            let vars: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
            let (j, h) = compute_jh(fp.moments(), &y, &vars);
            let prior =
                PriorParams::clamped(rng.random_range(0.2..0.8), rng.random_range(0.3..3.0), n);
            let s: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            let mut state = SupportState::new(j.clone(), h.clone(), &s, &prior).unwrap();
            let base = ln_evidence(&j, &h, &s, prior.rho, prior.tau);
            for k in 0..n {
                let mut flipped = s.clone();
                flipped[k] = !flipped[k];
                let oracle = ln_evidence(&j, &h, &flipped, prior.rho, prior.tau) - base;
                let delta = if s[k] {
                    state.delta_deactivate(k, &prior)
                } else {
                    state.delta_activate(k, &prior).unwrap().0
                };
                worst = worst.max((delta - oracle).abs() / (1.0 + oracle.abs()));
            }
            // run greedy to a local optimum, tracking the incremental
            // posterior against dense recomputation
            while let Some(_) = state.greedy_step(&prior).unwrap() {
                let (c_dense, w_dense) =
                    dense_weight_posterior(&j, &h, state.active(), prior.tau);
                let dc = (state.weight_cov() - &c_dense).norm() / (1.0 + c_dense.norm());
                let dw = (state.weights() - &w_dense).norm() / (1.0 + w_dense.norm());
                worst = worst.max(dc).max(dw);
            }
            let (_, best) = best_support_exhaustive(&j, &h, prior.rho, prior.tau);
            let reached = ln_evidence(&j, &h, state.support(), prior.rho, prior.tau);
            assert!(reached <= best + 1e-9, "greedy exceeded the exhaustive optimum");
        }
    }
    assert!(worst <= 1e-8, "worst incremental deviation {worst:.3e}");
    println!("criterion 7b PASS: evidence increments and rank-one updates (worst {worst:.1e})");
}

#[test]
fn criterion_7c_jacobians_vs_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(702);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let k = rng.random_range(1..4);
        let truth = random_truth(k, 24, &mut rng);
        for &n in &[1usize, 3, 11, 24] {
            let (dre, dim) = valse_ep::crb::jacobian_rows(&truth, n).unwrap();
            let (fre, fim) = jacobian_finite_difference(&truth, n, 1e-6);
            for d in 0..3 * k {
                let scale = 1.0 + dre[d].abs().max(dim[d].abs());
                worst = worst.max((dre[d] - fre[d]).abs() / scale);
                worst = worst.max((dim[d] - fim[d]).abs() / scale);
            }
        }
    }
    assert!(worst <= 1e-5, "worst jacobian deviation {worst:.3e}");
    println!("criterion 7c PASS: jacobians vs finite differences (worst {worst:.1e})");
}

#[test]
fn criterion_7d_information_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(703);
    for trial in 0..50 {
        let k = 1 + (trial % 3);
        let truth = random_truth(k, 20, &mut rng);
        let sigma2 = rng.random_range(0.05..2.0);
        let f_unq = valse_ep::crb::fim_unquantized(&truth, 20, sigma2).unwrap();
        let mut last_crb = f64::INFINITY;
        for b in 1..=4 {
            let spec = QuantizerSpec::build_uniform(b, (k as f64).sqrt()).unwrap();
            let f_q = valse_ep::crb::fim_quantized(&truth, 20, &spec, sigma2).unwrap();
            // sandwich: quantization never adds information
            let diff = &f_unq - &f_q;
            let sym = (&diff + diff.transpose()) * 0.5;
            let min_eig = sym
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let trace: f64 = (0..diff.nrows()).map(|i| diff[(i, i)]).sum();
            assert!(
                min_eig >= -1e-8 * trace.max(1.0),
                "trial {trial} b={b}: information sandwich violated"
            );
            // frequency CRB must not increase with depth
            if let Ok(crb) = valse_ep::crb::crb_freq(&f_q, k) {
                let t = valse_ep::crb::crb_freq_trace(&crb);
                assert!(t <= last_crb * (1.0 + 1e-9), "trial {trial}: CRB not monotone");
                last_crb = t;
            }
        }
    }
    println!("criterion 7d PASS: information sandwich and CRB monotonicity over 50 truths");
}

#[test]
fn criterion_7e_projection_exact_family() {
    let mut proj = LobeProjector::new(64);
    let mut worst: f64 = 0.0;
    for &(mu, kappa) in &[
        (0.0, 0.3),
        (0.4, 0.5),
        (-2.9, 2.0),
        (1.2, 50.0),
        (2.2, 420.0),
        (0.0, 1000.0),
    ] {
        let mut eta = vec![Complex64::ZERO; 64];
        eta[1] = Complex64::from_polar(kappa, mu);
        let vm = proj.project_eta(&eta);
        worst = worst.max(wrap(vm.mu - mu).abs());
        worst = worst.max((vm.kappa - kappa).abs() / kappa);
    }
    assert!(worst <= 1e-6, "worst recovery error {worst:.3e}");
    println!("criterion 7e PASS: von Mises projection exact-family recovery (worst {worst:.1e})");
}

// ---------------------------------------------------------------- helpers

fn random_truth(k: usize, n: usize, rng: &mut ChaCha8Rng) -> GroundTruth {
    let min_sep = std::f64::consts::TAU / n as f64;
    let freqs: Vec<f64> = loop {
        let cand: Vec<f64> = (0..k)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let ok = (0..k)
            .all(|i| (i + 1..k).all(|j| wrap(cand[i] - cand[j]).abs() > 1.5 * min_sep));
        if ok {
            break cand;
        }
    };
    let weights: Vec<Complex64> = (0..k)
        .map(|_| {
            Complex64::from_polar(
                rng.random_range(0.6..1.4),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        })
        .collect();
    GroundTruth::new(freqs, weights).unwrap()
}

fn random_unquantized_instance(n: usize, k: usize, snr_db: f64, seed: u64) -> (ComplexSignal, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_truth(k, n, &mut rng);
    let clean = synthesize(&truth, n).unwrap();
    let sigma2 = clean.energy() / (n as f64 * 10f64.powf(snr_db / 10.0));
    let axis = Normal::new(0.0, (sigma2 / 2.0).sqrt()).unwrap();
    let noisy = ComplexSignal::new(
        clean
            .as_slice()
            .iter()
            .map(|z| z + Complex64::new(axis.sample(&mut rng), axis.sample(&mut rng)))
            .collect(),
    )
    .unwrap();
    (noisy, sigma2)
}
