//! Fisher information and Cramér-Rao bounds for quantized and unquantized
//! measurements of a line spectral signal.
//!
//! The parameter vector is `kappa = [theta_1..theta_K, g_1..g_K, phi_1..phi_K]`
//! with `g = |w|` and `phi = angle(w)`. The quantized information weights each
//! sample by cell sums of squared density differences over cell probabilities;
//! those sums are evaluated through the shared tail-safe cell moments so that
//! saturated cells at high SNR underflow to zero instead of dividing by zero.

use crate::error::{Error, Result};
use crate::normal::cell_moments;
use crate::quantizer::QuantizerSpec;
use crate::signal::GroundTruth;
use nalgebra::{DMatrix, DVector};

/// Condition-number guard for inverting the information matrix.
const MAX_CONDITION: f64 = 1e12;

/// Polar weight parameters derived from a ground truth.
fn polar(truth: &GroundTruth) -> Result<(Vec<f64>, Vec<f64>)> {
    let g: Vec<f64> = truth.weights.iter().map(|w| w.norm()).collect();
    if g.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidParameter(
            "weight magnitudes must be positive".into(),
        ));
    }
    let phi: Vec<f64> = truth.weights.iter().map(|w| w.arg()).collect();
    Ok((g, phi))
}

/// Partial derivatives of `Re z_n` and `Im z_n` with respect to the 3K
/// parameters, at the 1-based sample index n.
pub fn jacobian_rows(truth: &GroundTruth, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample index is 1-based".into()));
    }
    let (g, phi) = polar(truth)?;
    let k = truth.k();
    let m = (n - 1) as f64;
    let mut dre = vec![0.0; 3 * k];
    let mut dim = vec![0.0; 3 * k];
    for i in 0..k {
        let psi = m * truth.freqs[i] + phi[i];
        let (sin, cos) = psi.sin_cos();
        dre[i] = -m * g[i] * sin;
        dre[k + i] = cos;
        dre[2 * k + i] = -g[i] * sin;
        dim[i] = m * g[i] * cos;
        dim[k + i] = sin;
        dim[2 * k + i] = g[i] * cos;
    }
    Ok((dre, dim))
}

/// Unquantized Fisher information: `(2/sigma2) sum_n (dre dre^T + dim dim^T)`.
pub fn fim_unquantized(truth: &GroundTruth, n_samples: usize, sigma2: f64) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter("sigma2 must be positive".into()));
    }
    let k3 = 3 * truth.k();
    let mut f = DMatrix::zeros(k3, k3);
    let w = 2.0 / sigma2;
    for n in 1..=n_samples {
        let (dre, dim) = jacobian_rows(truth, n)?;
        accumulate_outer(&mut f, &dre, w);
        accumulate_outer(&mut f, &dim, w);
    }
    Ok(f)
}

/// Quantized Fisher information (per-sample weights `lambda_n`, `chi_n`).
pub fn fim_quantized(
    truth: &GroundTruth,
    n_samples: usize,
    spec: &QuantizerSpec,
    sigma2: f64,
) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter("sigma2 must be positive".into()));
    }
    let z = crate::signal::synthesize(truth, n_samples)?;
    let k3 = 3 * truth.k();
    let mut f = DMatrix::zeros(k3, k3);
    for n in 1..=n_samples {
        let (dre, dim) = jacobian_rows(truth, n)?;
        let lambda = cell_information(spec, z[n - 1].re, sigma2);
        let chi = cell_information(spec, z[n - 1].im, sigma2);
        accumulate_outer(&mut f, &dre, lambda);
        accumulate_outer(&mut f, &dim, chi);
    }
    Ok(f)
}

/// `(2/sigma2) sum_l (phi(a_l) - phi(b_l))^2 / P_l` over the quantizer cells,
/// standardized around the clean value `x` with axis deviation `sigma/sqrt2`.
///
/// Each cell term is `P_l * m1_l^2`; the probability is reassembled from its
/// logarithm so cells beyond the tail cutoff vanish gracefully.
fn cell_information(spec: &QuantizerSpec, x: f64, sigma2: f64) -> f64 {
    let s = (sigma2 / 2.0).sqrt();
    let mut acc = 0.0;
    for l in 0..spec.cell_count() {
        let (lo, hi) = spec.interval_of(l).expect("cell index in range");
        let alpha = if lo == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            (lo - x) / s
        };
        let beta = if hi == f64::INFINITY {
            f64::INFINITY
        } else {
            (hi - x) / s
        };
        let cm = cell_moments(alpha, beta);
        let p = cm.log_prob.exp();
        acc += p * cm.m1 * cm.m1;
    }
    2.0 / sigma2 * acc
}

fn accumulate_outer(f: &mut DMatrix<f64>, row: &[f64], weight: f64) {
    let d = row.len();
    for a in 0..d {
        if row[a] == 0.0 {
            continue;
        }
        let wa = weight * row[a];
        for b in 0..d {
            f[(a, b)] += wa * row[b];
        }
    }
}

/// Leading K-by-K block of the inverse information matrix: the frequency CRB.
///
/// Fails with the observed condition number when the information matrix is
/// numerically singular (e.g. coinciding frequencies).
pub fn crb_freq(fim: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let d = fim.nrows();
    if k == 0 || 3 * k != d {
        return Err(Error::DimensionMismatch { expected: 3 * k, got: d });
    }
    let sym = (fim + fim.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(Error::SingularMatrix {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    let inv_diag = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| 1.0 / l));
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_diag) * eig.eigenvectors.transpose();
    Ok(inv.view((0, 0), (k, k)).into_owned())
}

/// Sum of the frequency CRB diagonal: the scalar bound the harness compares
/// frequency MSE against.
pub fn crb_freq_trace(crb: &DMatrix<f64>) -> f64 {
    (0..crb.nrows()).map(|i| crb[(i, i)]).sum()
}
