//! Signal synthesis, angle wrapping and estimation-error metrics.
//!
//! A line spectral signal is a superposition of complex sinusoids
//! `z_n = sum_k w_k exp(j(n-1)theta_k)` sampled at n = 1..N. All angles are
//! radians wrapped to the half-open interval `[-pi, pi)`.

use crate::error::{Error, Result};
use itertools::Itertools;
use num_complex::Complex64;
use std::f64::consts::{PI, TAU};

/// Error floor in dB: exact recoveries report this instead of -inf so that
/// Monte Carlo aggregation stays finite.
pub const DB_FLOOR: f64 = -300.0;

/// Complex baseband samples of length N.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    values: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("signal must be non-empty".into()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("signal"));
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.values
    }

    /// Squared Euclidean norm of the sample vector.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }
}

impl std::ops::Index<usize> for ComplexSignal {
    type Output = Complex64;
    fn index(&self, i: usize) -> &Complex64 {
        &self.values[i]
    }
}

/// The true sinusoid parameters a synthetic scenario is generated from.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub freqs: Vec<f64>,
    pub weights: Vec<Complex64>,
}

impl GroundTruth {
    pub fn new(freqs: Vec<f64>, weights: Vec<Complex64>) -> Result<Self> {
        if freqs.is_empty() {
            return Err(Error::InvalidParameter("at least one sinusoid".into()));
        }
        if freqs.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: freqs.len(),
                got: weights.len(),
            });
        }
        if freqs.iter().any(|f| !f.is_finite() || *f < -PI || *f >= PI) {
            return Err(Error::InvalidParameter(
                "frequencies must lie in [-pi, pi)".into(),
            ));
        }
        Ok(Self { freqs, weights })
    }

    pub fn k(&self) -> usize {
        self.freqs.len()
    }

    /// Smallest pairwise wrap-around distance between the frequencies.
    pub fn min_separation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.freqs.len() {
            for j in (i + 1)..self.freqs.len() {
                min = min.min(wrap(self.freqs[i] - self.freqs[j]).abs());
            }
        }
        min
    }
}

/// Output of an estimation run: model order, frequencies, weights and the
/// reconstructed spectrum.
#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub model_order: usize,
    pub freqs: Vec<f64>,
    pub weights: Vec<Complex64>,
    pub spectrum: ComplexSignal,
    pub support: Vec<usize>,
}

/// Wrap an angle to `[-pi, pi)`.
pub fn wrap(angle: f64) -> f64 {
    let mut a = (angle + PI).rem_euclid(TAU) - PI;
    // rem_euclid can return exactly TAU for inputs like -pi - 1e-18
    if a >= PI {
        a -= TAU;
    }
    a
}

/// Synthesize `z_n = sum_k w_k exp(j(n-1)theta_k)` for n = 1..N.
pub fn synthesize(truth: &GroundTruth, n: usize) -> Result<ComplexSignal> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    let mut values = vec![Complex64::ZERO; n];
    for (theta, w) in truth.freqs.iter().zip(&truth.weights) {
        for (i, v) in values.iter_mut().enumerate() {
            *v += w * Complex64::from_polar(1.0, i as f64 * theta);
        }
    }
    ComplexSignal::new(values)
}

/// Normalized MSE of the reconstructed signal in dB.
pub fn nmse(estimate: &ComplexSignal, truth: &ComplexSignal) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let denom = truth.energy();
    if denom == 0.0 {
        return Err(Error::ZeroNorm("truth signal"));
    }
    let num: f64 = estimate
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(e, t)| (e - t).norm_sqr())
        .sum();
    Ok(to_db(num / denom))
}

/// Scale-debiased NMSE in dB: minimizes over a complex scalar c the error
/// `||z - c zhat||^2 / ||z||^2`. Required under 1-bit observation where the
/// amplitude is not identifiable.
pub fn dnmse(estimate: &ComplexSignal, truth: &ComplexSignal) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            got: estimate.len(),
        });
    }
    let denom = truth.energy();
    if denom == 0.0 {
        return Err(Error::ZeroNorm("truth signal"));
    }
    let est_energy = estimate.energy();
    if est_energy == 0.0 {
        // c is irrelevant; the residual is the whole signal
        return Ok(0.0);
    }
    // least-squares minimizer c = (zhat^H z)/||zhat||^2
    let cross: Complex64 = estimate
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(e, t)| e.conj() * t)
        .sum();
    let residual = (denom - cross.norm_sqr() / est_energy).max(0.0);
    Ok(to_db(residual / denom))
}

/// Frequency MSE in dB: matches estimates to truths by minimal total
/// wrap-around distance, then reports `10 log10(sum_k wrap(diff_k)^2)`.
///
/// Only meaningful when the model order was estimated correctly; a count
/// mismatch is an error the caller must gate on.
pub fn freq_mse(est_freqs: &[f64], true_freqs: &[f64]) -> Result<f64> {
    if est_freqs.len() != true_freqs.len() {
        return Err(Error::DimensionMismatch {
            expected: true_freqs.len(),
            got: est_freqs.len(),
        });
    }
    if est_freqs.is_empty() {
        return Err(Error::InvalidParameter("empty frequency sets".into()));
    }
    Ok(to_db(assignment_cost(est_freqs, true_freqs)))
}

/// Minimal total squared wrap-around distance over assignments.
///
/// Exhaustive for K <= 8. For larger K both sets are sorted and the best
/// cyclic shift is taken; an optimal matching of points on a circle is
/// non-crossing, and the non-crossing perfect matchings of two sorted
/// circular sequences are exactly the cyclic shifts.
fn assignment_cost(est: &[f64], truth: &[f64]) -> f64 {
    let k = est.len();
    let cost = |pairing: &dyn Fn(usize) -> usize| -> f64 {
        (0..k)
            .map(|i| {
                let d = wrap(est[pairing(i)] - truth[i]);
                d * d
            })
            .sum()
    };
    if k <= 8 {
        (0..k)
            .permutations(k)
            .map(|perm| cost(&|i| perm[i]))
            .fold(f64::INFINITY, f64::min)
    } else {
        let mut es: Vec<f64> = est.to_vec();
        let mut ts: Vec<f64> = truth.to_vec();
        es.sort_by(|a, b| a.total_cmp(b));
        ts.sort_by(|a, b| a.total_cmp(b));
        (0..k)
            .map(|shift| {
                (0..k)
                    .map(|i| {
                        let d = wrap(es[(i + shift) % k] - ts[i]);
                        d * d
                    })
                    .sum()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn to_db(ratio: f64) -> f64 {
    if ratio <= 0.0 {
        DB_FLOOR
    } else {
        (10.0 * ratio.log10()).max(DB_FLOOR)
    }
}
