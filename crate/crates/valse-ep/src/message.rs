//! Diagonal complex Gaussian beliefs, the currency exchanged between the
//! linear-model module and the componentwise MMSE module.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Lower clamp for message variances.
pub const VAR_FLOOR: f64 = 1e-11;
/// Upper clamp for message variances; a component clamped here is treated as
/// carrying no information.
pub const VAR_CEIL: f64 = 1e11;

/// Mean vector and per-component variance of a diagonal complex Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMessage {
    pub mean: Vec<Complex64>,
    pub var: Vec<f64>,
}

impl GaussianMessage {
    /// Builds a message, clamping variances into `[VAR_FLOOR, VAR_CEIL]`.
    pub fn new(mean: Vec<Complex64>, var: Vec<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if mean.iter().any(|m| !m.re.is_finite() || !m.im.is_finite()) {
            return Err(Error::NonFinite("message mean"));
        }
        if var.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("message variance"));
        }
        let var = var.into_iter().map(clamp_var).collect();
        Ok(Self { mean, var })
    }

    /// Flat prior: zero mean, a single shared variance.
    pub fn flat(len: usize, var: f64) -> Self {
        Self {
            mean: vec![Complex64::ZERO; len],
            var: vec![clamp_var(var); len],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

pub fn clamp_var(v: f64) -> f64 {
    v.clamp(VAR_FLOOR, VAR_CEIL)
}

/// Gaussian division in precision space: forms the extrinsic message
/// `posterior / incoming` componentwise.
///
/// Nonpositive resulting precisions are clamped to `VAR_CEIL` and the mean is
/// kept at the posterior mean, so a degenerate division yields a genuinely
/// uninformative message instead of a huge spurious pseudo-observation.
pub fn divide(posterior: &GaussianMessage, incoming: &GaussianMessage) -> GaussianMessage {
    debug_assert_eq!(posterior.len(), incoming.len());
    let mut mean = Vec::with_capacity(posterior.len());
    let mut var = Vec::with_capacity(posterior.len());
    for i in 0..posterior.len() {
        let precision = 1.0 / posterior.var[i] - 1.0 / incoming.var[i];
        if precision <= 1.0 / VAR_CEIL {
            var.push(VAR_CEIL);
            mean.push(posterior.mean[i]);
        } else {
            let v = clamp_var(1.0 / precision);
            let m = v * (posterior.mean[i] / posterior.var[i]
                - incoming.mean[i] / incoming.var[i]);
            var.push(v);
            mean.push(m);
        }
    }
    GaussianMessage { mean, var }
}
