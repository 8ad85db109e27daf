//! Componentwise MMSE module: posterior moments of z under the measurement
//! likelihood, the extrinsic message back to the linear module, and the EM
//! update of the noise variance.
//!
//! The quantized channel observes each axis of `z + noise` through an
//! interval indicator, so the posterior per component factors into two real
//! truncated-Gaussian problems. The identity channel reduces to the product
//! of two Gaussians and is what makes the unquantized algorithm collapse to
//! plain VALSE.

use crate::error::{Error, Result};
use crate::message::{divide, GaussianMessage};
use crate::normal::interval_posterior;
use crate::quantizer::QuantizerSpec;
use crate::signal::ComplexSignal;
use num_complex::Complex64;

/// Measurement channel of the denoiser: quantized cells or plain AWGN.
#[derive(Debug, Clone)]
pub enum Channel {
    Quantized(QuantizerSpec),
    Identity,
}

/// Channel plus the current estimate of the complex noise variance.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub channel: Channel,
    pub sigma2: f64,
}

impl NoiseModel {
    pub fn new(channel: Channel, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParameter(
                "noise variance must be positive".into(),
            ));
        }
        Ok(Self { channel, sigma2 })
    }
}

/// Componentwise posterior mean and variance of z given the incoming belief
/// and the observed (quantized) measurements.
///
/// Real and imaginary axes are treated independently: the prior of one axis
/// is `N(Re m, v/2)`, the axis noise variance is `sigma2/2`, and a quantized
/// observation constrains the noisy value to the half-open cell of the
/// observed level.
pub fn posterior_moments(
    prior: &GaussianMessage,
    y: &ComplexSignal,
    noise: &NoiseModel,
) -> Result<GaussianMessage> {
    if prior.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.len(),
            got: y.len(),
        });
    }
    let n = prior.len();
    let mut mean = Vec::with_capacity(n);
    let mut var = Vec::with_capacity(n);
    match &noise.channel {
        Channel::Identity => {
            let s2 = noise.sigma2;
            for i in 0..n {
                let precision = 1.0 / prior.var[i] + 1.0 / s2;
                let v = 1.0 / precision;
                let m = v * (prior.mean[i] / prior.var[i] + y[i] / s2);
                mean.push(m);
                var.push(v);
            }
        }
        Channel::Quantized(spec) => {
            let axis_noise = noise.sigma2 / 2.0;
            for i in 0..n {
                let half_var = prior.var[i] / 2.0;
                let (re_cell_lo, re_cell_hi) = spec.interval_of(spec.level_index(y[i].re)?)?;
                let (im_cell_lo, im_cell_hi) = spec.interval_of(spec.level_index(y[i].im)?)?;
                let (mr, vr) = interval_posterior(
                    prior.mean[i].re,
                    half_var,
                    axis_noise,
                    re_cell_lo,
                    re_cell_hi,
                );
                let (mi, vi) = interval_posterior(
                    prior.mean[i].im,
                    half_var,
                    axis_noise,
                    im_cell_lo,
                    im_cell_hi,
                );
                mean.push(Complex64::new(mr, mi));
                var.push(vr + vi);
            }
        }
    }
    GaussianMessage::new(mean, var)
}

/// Extrinsic message from the MMSE module: the posterior divided by the
/// incoming extrinsic belief, clamped into the legal variance range.
pub fn extrinsic(posterior: &GaussianMessage, incoming: &GaussianMessage) -> GaussianMessage {
    divide(posterior, incoming)
}

/// EM update of the noise variance from the pseudo measurement model:
/// `sigma2 = (||pseudo_y - post_mean||^2 + sum(post_var)) / observed`.
pub fn em_noise_update(
    pseudo_y: &[Complex64],
    posterior: &GaussianMessage,
    observed: usize,
) -> Result<f64> {
    if observed == 0 {
        return Err(Error::InvalidParameter(
            "at least one observed measurement".into(),
        ));
    }
    if pseudo_y.len() != posterior.len() {
        return Err(Error::DimensionMismatch {
            expected: posterior.len(),
            got: pseudo_y.len(),
        });
    }
    let residual: f64 = pseudo_y
        .iter()
        .zip(&posterior.mean)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let total_var: f64 = posterior.var.iter().sum();
    Ok(((residual + total_var) / observed as f64).max(1e-14))
}
