//! Grid-less variational Bayesian line spectral estimation from coarsely
//! quantized complex samples.
//!
//! The estimator alternates between two modules joined by expectation
//! propagation: a variational solver for the pseudo linear model with
//! per-component noise variances (support, weights and von Mises frequency
//! posteriors) and a componentwise MMSE denoiser for the quantized
//! measurement channel. Model order, frequencies, amplitudes, the noise
//! variance and the Bernoulli-Gaussian prior parameters are all learned
//! jointly. Cramér-Rao bounds for the quantized and unquantized channels are
//! provided as the benchmark oracle.

pub mod bessel;
pub mod crb;
pub mod error;
pub mod homogeneous;
pub mod message;
pub mod mmse;
pub mod normal;
pub mod quantizer;
pub mod runner;
pub mod signal;
pub mod valse;
pub mod vonmises;

#[cfg(feature = "oracles")]
pub mod oracles;

pub use error::{Error, Result};
pub use message::GaussianMessage;
pub use mmse::{Channel, NoiseModel};
pub use quantizer::QuantizerSpec;
pub use runner::{run, RunConfig, RunTrace};
pub use signal::{ComplexSignal, EstimateResult, GroundTruth};
