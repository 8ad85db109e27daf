//! Scenario configuration and synthetic data generation for the Monte Carlo
//! harness.

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use valse_ep::quantizer::{quantize, QuantizerSpec};
use valse_ep::signal::{wrap, ComplexSignal, GroundTruth};

/// Measurement resolution: a finite bit depth or unquantized samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum BitDepth {
    Finite(u32),
    #[serde(serialize_with = "ser_inf")]
    Inf,
}

fn ser_inf<S: serde::Serializer>(s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str("inf")
}

impl<'de> Deserialize<'de> for BitDepth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(b) => Ok(BitDepth::Finite(b)),
            Raw::Text(t) if t.eq_ignore_ascii_case("inf") => Ok(BitDepth::Inf),
            Raw::Text(t) => t
                .parse::<u32>()
                .map(BitDepth::Finite)
                .map_err(|_| serde::de::Error::custom(format!("invalid bit depth `{t}`"))),
        }
    }
}

impl std::fmt::Display for BitDepth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BitDepth::Finite(b) => write!(f, "{b}"),
            BitDepth::Inf => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for BitDepth {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("inf") {
            Ok(BitDepth::Inf)
        } else {
            s.parse::<u32>()
                .map(BitDepth::Finite)
                .map_err(|_| format!("invalid bit depth `{s}` (expected integer or `inf`)"))
        }
    }
}

/// Estimator selector for a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Message-passing estimator on the quantized likelihood.
    ValseEp,
    /// Homogeneous estimator fed midpoint-dequantized samples.
    ValseAqnm,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::ValseEp => write!(f, "valse_ep"),
            Algorithm::ValseAqnm => write!(f, "valse_aqnm"),
        }
    }
}

/// Weight magnitude law: Gaussian around one, or exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMagnitude {
    #[default]
    Gaussian,
    Unit,
}

fn default_trials() -> usize {
    50
}
fn default_seed() -> u64 {
    1
}
fn default_max_iters() -> usize {
    1000
}
fn default_tol() -> f64 {
    1e-6
}
fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::ValseEp]
}

/// One sweep description: the cross product of `snr_db`, `bits` and
/// `algorithms` is executed with `trials` Monte Carlo trials each.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub k: usize,
    pub snr_db: Vec<f64>,
    pub bits: Vec<BitDepth>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    /// Fixed true frequencies (length k); omitted means random draws with
    /// the minimum wrap-around separation 2*pi/n.
    #[serde(default)]
    pub freqs: Option<Vec<f64>>,
    #[serde(default)]
    pub weight_magnitude: WeightMagnitude,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).context("invalid scenario config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            bail!("n and k must be positive");
        }
        if self.k >= self.n {
            bail!("k must be smaller than n");
        }
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.snr_db.is_empty() || self.bits.is_empty() || self.algorithms.is_empty() {
            bail!("snr_db, bits and algorithms must be non-empty");
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            bail!("snr_db entries must be finite");
        }
        if let Some(freqs) = &self.freqs {
            if freqs.len() != self.k {
                bail!("freqs must have length k = {}", self.k);
            }
            if freqs
                .iter()
                .any(|f| !(-std::f64::consts::PI..std::f64::consts::PI).contains(f))
            {
                bail!("fixed frequencies must lie in [-pi, pi)");
            }
        }
        for b in &self.bits {
            if let BitDepth::Finite(v) = b {
                if *v == 0 || *v > 16 {
                    bail!("bit depth must be in 1..=16 or `inf`");
                }
            }
        }
        Ok(())
    }

    /// The quantizer standard deviation used throughout: sqrt(k), matching
    /// the unit-magnitude signal power approximation.
    pub fn sigma_z(&self) -> f64 {
        (self.k as f64).sqrt()
    }
}

const MAX_REJECTIONS: usize = 10_000;

/// Draw a ground truth: frequencies with the minimum wrap-around separation
/// (or the configured fixed list), magnitudes from the configured law,
/// phases uniform.
pub fn draw_truth(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Result<GroundTruth> {
    let min_sep = std::f64::consts::TAU / cfg.n as f64;
    let freqs: Vec<f64> = match &cfg.freqs {
        Some(fixed) => fixed.clone(),
        None => {
            let mut attempt = 0;
            loop {
                let cand: Vec<f64> = (0..cfg.k)
                    .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                    .collect();
                let ok = (0..cfg.k).all(|i| {
                    (i + 1..cfg.k).all(|j| wrap(cand[i] - cand[j]).abs() > min_sep)
                });
                if ok {
                    break cand;
                }
                attempt += 1;
                if attempt >= MAX_REJECTIONS {
                    bail!(
                        "could not draw {} frequencies with separation {:.4} after {} attempts",
                        cfg.k,
                        min_sep,
                        MAX_REJECTIONS
                    );
                }
            }
        }
    };
    let mag_law = Normal::new(1.0, 0.2).expect("valid normal");
    let weights: Vec<Complex64> = (0..cfg.k)
        .map(|_| {
            let mag = match cfg.weight_magnitude {
                WeightMagnitude::Unit => 1.0,
                WeightMagnitude::Gaussian => loop {
                    let m = mag_law.sample(rng);
                    if m > 0.0 {
                        break m;
                    }
                },
            };
            let phase = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Complex64::from_polar(mag, phase)
        })
        .collect();
    Ok(GroundTruth::new(freqs, weights)?)
}

/// Complex AWGN at the requested SNR, then the quantizer (if any).
/// Returns the measurements and the noise variance that realizes the SNR in
/// expectation: `sigma2 = ||z||^2 / (n 10^(snr/10))`.
pub fn apply_noise_and_quantize(
    z: &ComplexSignal,
    snr_db: f64,
    spec: Option<&QuantizerSpec>,
    rng: &mut ChaCha8Rng,
) -> Result<(ComplexSignal, f64)> {
    let n = z.len();
    let energy = z.energy();
    if energy == 0.0 {
        bail!("cannot set an SNR for an all-zero signal");
    }
    let sigma2 = energy / (n as f64 * 10f64.powf(snr_db / 10.0));
    let axis = Normal::new(0.0, (sigma2 / 2.0).sqrt()).expect("valid normal");
    let noisy = ComplexSignal::new(
        z.as_slice()
            .iter()
            .map(|v| v + Complex64::new(axis.sample(rng), axis.sample(rng)))
            .collect(),
    )?;
    let y = match spec {
        Some(spec) => quantize(spec, &noisy)?,
        None => noisy,
    };
    Ok((y, sigma2))
}

/// Build the quantizer for a scenario bit depth (none when unquantized).
pub fn build_quantizer(bits: BitDepth, sigma_z: f64) -> Result<Option<QuantizerSpec>> {
    match bits {
        BitDepth::Inf => Ok(None),
        BitDepth::Finite(b) => Ok(Some(QuantizerSpec::build_uniform(b, sigma_z)?)),
    }
}

/// Deterministic per-trial RNG: one stream per trial index, so extending the
/// trial count never changes earlier trials.
pub fn trial_rng(master_seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64 + 1);
    rng
}
