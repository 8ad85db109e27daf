//! Componentwise scalar quantization of complex samples.
//!
//! The quantizer maps a real value to the output level of the half-open cell
//! `[t_l, t_{l+1})` containing it and is applied independently to the real and
//! imaginary parts. Output levels are cell midpoints, so dequantization under
//! the additive quantization noise model is the identity on levels.

use crate::error::{Error, Result};
use crate::signal::ComplexSignal;
use num_complex::Complex64;

/// Thresholds and output levels of a scalar quantizer with 2^B cells.
///
/// `thresholds` has length 2^B + 1 with `t_0 = -inf` and `t_{2^B} = +inf`;
/// `levels` has one midpoint per cell, the two unbounded cells using the
/// midpoint of their clipped portion so all levels stay finite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    bit_depth: u32,
    thresholds: Vec<f64>,
    levels: Vec<f64>,
    clip_halfwidth: f64,
}

impl QuantizerSpec {
    /// Uniform quantizer over `[-r, r]` with `r = 3 sigma_z / sqrt(2)`.
    ///
    /// The 2^B cells have equal width inside the clip range and the outer
    /// cells extend to infinity. For B = 1 this degenerates to a sign
    /// quantizer with its single threshold at zero.
    pub fn build_uniform(bit_depth: u32, sigma_z: f64) -> Result<Self> {
        if bit_depth == 0 {
            return Err(Error::InvalidParameter("bit depth must be >= 1".into()));
        }
        if bit_depth > 24 {
            return Err(Error::InvalidParameter("bit depth too large".into()));
        }
        if !(sigma_z > 0.0) || !sigma_z.is_finite() {
            return Err(Error::InvalidParameter("sigma_z must be positive".into()));
        }
        let cells = 1usize << bit_depth;
        let r = 3.0 * sigma_z / std::f64::consts::SQRT_2;
        let width = 2.0 * r / cells as f64;
        let mut thresholds = Vec::with_capacity(cells + 1);
        thresholds.push(f64::NEG_INFINITY);
        for l in 1..cells {
            thresholds.push(-r + width * l as f64);
        }
        thresholds.push(f64::INFINITY);
        let levels: Vec<f64> = (0..cells)
            .map(|l| -r + width * (l as f64 + 0.5))
            .collect();
        Ok(Self {
            bit_depth,
            thresholds,
            levels,
            clip_halfwidth: r,
        })
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    pub fn cell_count(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn clip_halfwidth(&self) -> f64 {
        self.clip_halfwidth
    }

    /// Index of the half-open cell `[t_l, t_{l+1})` containing `a`.
    pub fn cell_index(&self, a: f64) -> Result<usize> {
        if a.is_nan() {
            return Err(Error::NonFinite("quantizer input"));
        }
        let cells = self.cell_count();
        let r = self.clip_halfwidth;
        let width = 2.0 * r / cells as f64;
        let idx = ((a + r) / width).floor();
        Ok((idx.max(0.0) as usize).min(cells - 1))
    }

    /// The half-open cell `(t_l, t_{l+1})` for level index `l`.
    pub fn interval_of(&self, l: usize) -> Result<(f64, f64)> {
        if l >= self.cell_count() {
            return Err(Error::InvalidParameter(format!(
                "level index {l} out of range (cells: {})",
                self.cell_count()
            )));
        }
        Ok((self.thresholds[l], self.thresholds[l + 1]))
    }

    /// Quantize one real value to its cell's output level.
    pub fn quantize_real(&self, a: f64) -> Result<f64> {
        Ok(self.levels[self.cell_index(a)?])
    }

    /// Recover the cell index of a value that is exactly an output level.
    pub fn level_index(&self, level: f64) -> Result<usize> {
        if !level.is_finite() {
            return Err(Error::UnknownLevel(level));
        }
        let idx = self.cell_index(level)?;
        let tol = 1e-9 * self.clip_halfwidth.max(1.0);
        if (self.levels[idx] - level).abs() > tol {
            return Err(Error::UnknownLevel(level));
        }
        Ok(idx)
    }
}

/// Apply the quantizer componentwise: `y_n = Q(Re x_n) + j Q(Im x_n)`.
pub fn quantize(spec: &QuantizerSpec, x: &ComplexSignal) -> Result<ComplexSignal> {
    let values = x
        .as_slice()
        .iter()
        .map(|v| {
            Ok(Complex64::new(
                spec.quantize_real(v.re)?,
                spec.quantize_real(v.im)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    ComplexSignal::new(values)
}

/// Midpoint dequantizer of the additive quantization noise model.
///
/// Levels already are cell midpoints, so this validates the entries and
/// returns them unchanged; it exists as a named step because the AQNM
/// baseline and the initialization consume `y_q` rather than raw levels.
pub fn dequantize_aqnm(spec: &QuantizerSpec, y: &ComplexSignal) -> Result<ComplexSignal> {
    let values = y
        .as_slice()
        .iter()
        .map(|v| {
            let re = spec.levels()[spec.level_index(v.re)?];
            let im = spec.levels()[spec.level_index(v.im)?];
            Ok(Complex64::new(re, im))
        })
        .collect::<Result<Vec<_>>>()?;
    ComplexSignal::new(values)
}
