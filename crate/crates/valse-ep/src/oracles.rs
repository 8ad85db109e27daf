//! Independent numerical oracles for the verification suites.
//!
//! Everything here recomputes quantities by brute force (dense linear
//! algebra, quadrature, finite differences) without touching the incremental
//! or closed-form paths it is used to check. Compiled only with the
//! `oracles` feature; not part of the estimator.

use crate::signal::GroundTruth;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Truncated-model posterior moments by Simpson quadrature.
///
/// Prior `x ~ N(mean, var)`, observation `u = x + noise` constrained to
/// `[lo, hi)` with `noise ~ N(0, noise_var)`; integrates the unnormalized
/// posterior of x over `mean ± 12 sqrt(var)`.
pub fn trunc_posterior_quadrature(
    mean: f64,
    var: f64,
    noise_var: f64,
    lo: f64,
    hi: f64,
    points: usize,
) -> (f64, f64) {
    assert!(points >= 3 && points % 2 == 1, "need an odd point count");
    let sd = var.sqrt();
    let s = noise_var.sqrt();
    // the window must cover the cell as well: a far-away cell drags the
    // posterior mass toward its boundary
    let lo_f = if lo.is_finite() { lo } else { mean };
    let hi_f = if hi.is_finite() { hi } else { mean.max(lo_f) };
    let pad = 12.0 * (sd + s);
    let a = mean.min(lo_f.min(hi_f)) - pad;
    let b = mean.max(lo_f.max(hi_f)) + pad;
    let h = (b - a) / (points - 1) as f64;
    // upper tail Q(t) via erfc stays accurate down to ~1e-300
    let q = |t: f64| 0.5 * libm::erfc(t / std::f64::consts::SQRT_2);
    let logw = |x: f64| -> f64 {
        let prior = -0.5 * ((x - mean) / sd).powi(2);
        let cell = match (lo == f64::NEG_INFINITY, hi == f64::INFINITY) {
            (true, true) => 1.0,
            (false, true) => q((lo - x) / s),
            (true, false) => q((x - hi) / s),
            (false, false) => {
                // difference taken in the tail direction that avoids
                // cancellation between near-unity CDF values
                if lo + hi > 2.0 * x {
                    q((lo - x) / s) - q((hi - x) / s)
                } else {
                    q((x - hi) / s) - q((x - lo) / s)
                }
            }
        };
        prior + cell.max(1e-320).ln()
    };
    let mut max_lw = f64::NEG_INFINITY;
    let lws: Vec<f64> = (0..points)
        .map(|i| {
            let lw = logw(a + i as f64 * h);
            max_lw = max_lw.max(lw);
            lw
        })
        .collect();
    let simpson = |f: &dyn Fn(usize) -> f64| -> f64 {
        let mut acc = f(0) + f(points - 1);
        for i in 1..points - 1 {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
        }
        acc * h / 3.0
    };
    let w = |i: usize| (lws[i] - max_lw).exp();
    let z0 = simpson(&|i| w(i));
    let m1 = simpson(&|i| w(i) * (a + i as f64 * h)) / z0;
    let m2 = simpson(&|i| {
        let x = a + i as f64 * h;
        w(i) * (x - m1) * (x - m1)
    }) / z0;
    (m1, m2)
}

/// Dense weight posterior `(C, w)` for a given active set.
pub fn dense_weight_posterior(
    j: &DMatrix<Complex64>,
    h: &DVector<Complex64>,
    active: &[usize],
    tau: f64,
) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let m = active.len();
    let mut a = DMatrix::zeros(m, m);
    for (p, &i) in active.iter().enumerate() {
        for (q, &l) in active.iter().enumerate() {
            a[(p, q)] = j[(i, l)];
        }
        a[(p, p)] += Complex64::new(1.0 / tau, 0.0);
    }
    let inv = a.lu().try_inverse().expect("oracle matrix invertible");
    let h_s = DVector::from_iterator(m, active.iter().map(|&i| h[i]));
    let w = &inv * &h_s;
    (inv, w)
}

/// Dense evidence `ln Z(s)` up to the support-independent constant:
/// `-ln det(J_S + I/tau) + h_S^H (J_S + I/tau)^{-1} h_S
///  + |S| ln(rho/(1-rho)) + |S| ln(1/tau)`.
pub fn ln_evidence(
    j: &DMatrix<Complex64>,
    h: &DVector<Complex64>,
    support: &[bool],
    rho: f64,
    tau: f64,
) -> f64 {
    let active: Vec<usize> = (0..support.len()).filter(|&i| support[i]).collect();
    let m = active.len();
    if m == 0 {
        return 0.0;
    }
    let mut a = DMatrix::zeros(m, m);
    for (p, &i) in active.iter().enumerate() {
        for (q, &l) in active.iter().enumerate() {
            a[(p, q)] = j[(i, l)];
        }
        a[(p, p)] += Complex64::new(1.0 / tau, 0.0);
    }
    let h_s = DVector::from_iterator(m, active.iter().map(|&i| h[i]));
    let lu = a.clone().lu();
    let logdet = lu.determinant().norm().ln();
    let solved = lu.solve(&h_s).expect("oracle matrix invertible");
    let quad = h_s.dotc(&solved).re;
    -logdet + quad + m as f64 * ((rho / (1.0 - rho)).ln() + (1.0 / tau).ln())
}

/// Exhaustive search of the evidence over all 2^N supports (small N only).
pub fn best_support_exhaustive(
    j: &DMatrix<Complex64>,
    h: &DVector<Complex64>,
    rho: f64,
    tau: f64,
) -> (Vec<bool>, f64) {
    let n = h.len();
    assert!(n <= 16, "exhaustive oracle limited to small N");
    let mut best = (vec![false; n], f64::NEG_INFINITY);
    for mask in 0u32..(1 << n) {
        let s: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let v = ln_evidence(j, h, &s, rho, tau);
        if v > best.1 {
            best = (s, v);
        }
    }
    best
}

/// Central finite differences of `(Re z_n, Im z_n)` with respect to the
/// parameter vector `[theta; g; phi]`.
pub fn jacobian_finite_difference(
    truth: &GroundTruth,
    n: usize,
    step: f64,
) -> (Vec<f64>, Vec<f64>) {
    let k = truth.k();
    let sample = |t: &GroundTruth| -> Complex64 {
        let z = crate::signal::synthesize(t, n).expect("valid truth");
        z[n - 1]
    };
    let perturb = |dim: usize, delta: f64| -> GroundTruth {
        let mut freqs = truth.freqs.clone();
        let mut weights = truth.weights.clone();
        if dim < k {
            freqs[dim] += delta;
        } else if dim < 2 * k {
            let i = dim - k;
            let g = weights[i].norm() + delta;
            weights[i] = Complex64::from_polar(g, weights[i].arg());
        } else {
            let i = dim - 2 * k;
            weights[i] = Complex64::from_polar(weights[i].norm(), weights[i].arg() + delta);
        }
        GroundTruth { freqs, weights }
    };
    let mut dre = vec![0.0; 3 * k];
    let mut dim_v = vec![0.0; 3 * k];
    for d in 0..3 * k {
        let plus = sample(&perturb(d, step));
        let minus = sample(&perturb(d, -step));
        dre[d] = (plus.re - minus.re) / (2.0 * step);
        dim_v[d] = (plus.im - minus.im) / (2.0 * step);
    }
    (dre, dim_v)
}
