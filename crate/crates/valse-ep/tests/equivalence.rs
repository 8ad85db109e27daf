//! Unquantized-channel identities: the message-passing estimator must
//! collapse to the homogeneous reference when the noise variance is known,
//! the MMSE extrinsic must reproduce the raw measurements exactly, and the
//! two noise-variance routes must coincide.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use valse_ep::homogeneous::{run_valse, ValseConfig};
use valse_ep::mmse::Channel;
use valse_ep::runner::{property1_noise_estimates, run, RunConfig};
use valse_ep::signal::{synthesize, wrap, ComplexSignal, GroundTruth};
use valse_ep::valse::FrequencyPosterior;
use valse_ep::vonmises::VonMises;

fn noisy_instance(
    n: usize,
    k: usize,
    snr_db: f64,
    seed: u64,
) -> (ComplexSignal, GroundTruth, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_sep = std::f64::consts::TAU / n as f64;
    let freqs: Vec<f64> = loop {
        let cand: Vec<f64> = (0..k)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let ok = (0..k)
            .all(|i| (i + 1..k).all(|j| wrap(cand[i] - cand[j]).abs() > min_sep));
        if ok {
            break cand;
        }
    };
    let weights: Vec<Complex64> = (0..k)
        .map(|_| {
            Complex64::from_polar(
                1.0 + 0.2 * rng.random_range(-1.0..1.0),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        })
        .collect();
    let truth = GroundTruth::new(freqs, weights).unwrap();
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
    (noisy, truth, sigma2)
}

#[test]
fn unquantized_extrinsic_returns_measurements_exactly() {
    // identity channel: after every MMSE pass, the extrinsic message is
    // (y, sigma2 * 1) up to floating-point reassembly
    let (y, _, sigma2) = noisy_instance(48, 2, 15.0, 7);
    let cfg = RunConfig {
        learn_noise: false,
        sigma2: Some(sigma2),
        full_trace: true,
        max_iters: 60,
        ..Default::default()
    };
    let (_, trace) = run(&y, &Channel::Identity, &cfg).unwrap();
    assert!(trace.len() > 2);
    for rec in &trace.ep {
        for (ext, meas) in rec.z_b_ext.iter().zip(y.as_slice()) {
            assert!(
                (ext - meas).norm() <= 1e-10 * (1.0 + meas.norm()),
                "z_b_ext deviates: {ext} vs {meas}"
            );
        }
        for v in &rec.v_b_ext {
            assert!(
                (v - sigma2).abs() <= 1e-10 * sigma2,
                "v_b_ext deviates: {v} vs {sigma2}"
            );
        }
    }
}

#[test]
fn property2_posterior_relation_holds_while_learning_noise() {
    // with EM noise learning on the identity channel:
    // 1/v_B(t+1) = 1/v_A(t+1) - 1/s2(t) + 1/s2(t+1), and the mean relation
    let (y, _, sigma2) = noisy_instance(48, 2, 15.0, 11);
    let cfg = RunConfig {
        learn_noise: true,
        sigma2: Some(sigma2 * 2.0), // start away from the truth
        full_trace: true,
        max_iters: 50,
        ..Default::default()
    };
    let (_, trace) = run(&y, &Channel::Identity, &cfg).unwrap();
    assert!(trace.len() > 3);
    for t in 0..trace.len() - 1 {
        let prev = &trace.ep[t];
        let cur = &trace.ep[t + 1];
        let z_a = &trace.spectra[t + 1];
        for i in 0..y.len() {
            let lhs = 1.0 / cur.v_b_post[i];
            let rhs = 1.0 / cur.v_a_post[i] - 1.0 / prev.sigma2_before
                + 1.0 / cur.sigma2_before;
            assert!(
                (lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()),
                "variance relation off at t={t} i={i}: {lhs} vs {rhs}"
            );
            let lhs_m = cur.z_b_post[i] / cur.v_b_post[i];
            let rhs_m = Complex64::new(z_a[i].re, z_a[i].im) / cur.v_a_post[i]
                - y[i] * (1.0 / prev.sigma2_before - 1.0 / cur.sigma2_before);
            assert!(
                (lhs_m - rhs_m).norm() <= 1e-8 * (1.0 + lhs_m.norm().max(rhs_m.norm())),
                "mean relation off at t={t} i={i}"
            );
        }
    }
}

#[test]
fn known_noise_run_matches_homogeneous_reference_per_iteration() {
    // fixed sigma2, identity channel: per-iteration spectra, model orders
    // and frequencies must coincide with the homogeneous path
    let mut checked = 0;
    for seed in 0..20u64 {
        let (y, _, sigma2) = noisy_instance(64, 3, 20.0, 100 + seed);
        let ep_cfg = RunConfig {
            learn_noise: false,
            sigma2: Some(sigma2),
            full_trace: true,
            ..Default::default()
        };
        let (est_ep, tr_ep) = run(&y, &Channel::Identity, &ep_cfg).unwrap();
        let va_cfg = ValseConfig {
            learn_noise: false,
            sigma2: Some(sigma2),
            full_trace: true,
            ..Default::default()
        };
        let (est_va, tr_va) = run_valse(&y, &va_cfg).unwrap();

        assert_eq!(tr_ep.len(), tr_va.len(), "seed {seed}: iteration counts differ");
        for t in 0..tr_ep.len() {
            assert_eq!(
                tr_ep.iterations[t].k_hat, tr_va.iterations[t].k_hat,
                "seed {seed}: model order diverges at t={t}"
            );
            let za = &tr_ep.spectra[t];
            let zb = &tr_va.spectra[t];
            let num: f64 = za
                .iter()
                .zip(zb)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let den: f64 = zb.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
            assert!(
                num <= 1e-8 * (1.0 + den),
                "seed {seed}: spectra diverge at t={t} ({num:.3e} vs norm {den:.3e})"
            );
            for (fa, fb) in tr_ep.freqs[t].iter().zip(&tr_va.freqs[t]) {
                assert!(
                    wrap(fa - fb).abs() <= 1e-8,
                    "seed {seed}: frequency diverges at t={t}"
                );
            }
        }
        assert_eq!(est_ep.model_order, est_va.model_order);
        checked += 1;
    }
    assert_eq!(checked, 20);
}

#[test]
fn noise_variance_routes_agree_on_random_states() {
    // the closed-form variational route and the EM residual route are the
    // same number for any posterior state
    let mut rng = ChaCha8Rng::seed_from_u64(3001);
    for _ in 0..100 {
        let n = rng.random_range(6..20);
        let m = rng.random_range(1..4.min(n));
        let mut fp = FrequencyPosterior::uniform(n);
        let active: Vec<usize> = {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut sel = idx[..m].to_vec();
            sel.sort_unstable();
            sel
        };
        for &i in &active {
            fp.set(
                i,
                VonMises {
                    mu: rng.random_range(-3.1..3.1),
                    kappa: rng.random_range(0.0..500.0),
                },
            );
        }
        let w = DVector::from_iterator(
            m,
            (0..m).map(|_| {
                Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5))
            }),
        );
        // random Hermitian PD covariance
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
        assert!(
            (va - em).abs() <= 1e-10 * va.abs(),
            "routes disagree: {va} vs {em}"
        );
    }
}

#[test]
fn runs_are_deterministic() {
    let (y, _, sigma2) = noisy_instance(48, 2, 12.0, 555);
    let cfg = RunConfig {
        sigma2: Some(sigma2),
        ..Default::default()
    };
    let (a, ta) = run(&y, &Channel::Identity, &cfg).unwrap();
    let (b, tb) = run(&y, &Channel::Identity, &cfg).unwrap();
    assert_eq!(a.model_order, b.model_order);
    assert_eq!(a.freqs, b.freqs);
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.spectrum.as_slice(), b.spectrum.as_slice());
    assert_eq!(ta.len(), tb.len());
}

#[test]
fn stopping_rule_respects_bounds() {
    let (y, _, sigma2) = noisy_instance(48, 2, 15.0, 777);
    let cfg = RunConfig {
        max_iters: 7,
        sigma2: Some(sigma2),
        ..Default::default()
    };
    let (_, trace) = run(&y, &Channel::Identity, &cfg).unwrap();
    assert!(trace.len() <= 7);
    let cfg_full = RunConfig {
        sigma2: Some(sigma2),
        ..Default::default()
    };
    let (_, trace_full) = run(&y, &Channel::Identity, &cfg_full).unwrap();
    if trace_full.converged {
        let last = trace_full.iterations.last().unwrap();
        assert!(last.rel_change < cfg_full.tol);
    }
}
