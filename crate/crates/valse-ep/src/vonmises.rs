//! Von Mises frequency posteriors: moment vectors and single-lobe projection.
//!
//! A frequency belief is kept as a von Mises distribution `VM(mu, kappa)`
//! whose circular moments `E[exp(j n theta)] = exp(j n mu) I_n(kappa)/I_0(kappa)`
//! serve as the expected steering vector. Exact frequency posteriors are trig
//! polynomials in theta; they are projected back to a single von Mises by
//! locating the dominant lobe on a dense grid, refining the mode by Newton
//! steps, and matching the first circular moment by normalized quadrature.

use crate::bessel;
use crate::signal::wrap;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Mean direction and concentration of a von Mises distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMises {
    pub mu: f64,
    pub kappa: f64,
}

impl VonMises {
    pub const UNIFORM: VonMises = VonMises { mu: 0.0, kappa: 0.0 };
}

/// Moment vector `a_hat_n = exp(j n mu) I_n(kappa)/I_0(kappa)`, n = 0..len-1.
pub fn vm_moments(vm: VonMises, len: usize) -> Vec<Complex64> {
    let ratios = bessel::ratio_vector(vm.kappa, len);
    ratios
        .iter()
        .enumerate()
        .map(|(n, r)| Complex64::from_polar(*r, n as f64 * vm.mu))
        .collect()
}

/// Minimum number of coarse-grid points a lobe must span before the grid
/// quadrature is trusted; narrower lobes are re-integrated on a local grid
/// sized from the curvature at the mode.
const MIN_LOBE_POINTS: usize = 32;

const FINE_POINTS: usize = 801;

/// Log-density drop that delimits the dominant lobe (boundary weight e^-30).
const LOBE_CUTOFF: f64 = 30.0;

/// Projects exact (unnormalized log) frequency posteriors onto a von Mises.
///
/// Densities are evaluated on a uniform grid of `max(2^12, 8 n_atoms)` points
/// via a zero-padded FFT of the trig-polynomial coefficients.
pub struct LobeProjector {
    grid_size: usize,
    ifft: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl LobeProjector {
    pub fn new(n_atoms: usize) -> Self {
        let grid_size = (8 * n_atoms).max(1 << 12).next_power_of_two();
        let ifft = FftPlanner::new().plan_fft_inverse(grid_size);
        Self {
            grid_size,
            ifft,
            scratch: vec![Complex64::ZERO; grid_size],
        }
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    fn theta(&self, l: usize) -> f64 {
        -std::f64::consts::PI
            + std::f64::consts::TAU * l as f64 / self.grid_size as f64
    }

    /// Evaluate `g(theta_l) = sum_n coeffs_n exp(j n theta_l)` on the grid.
    fn eval_series_on_grid(&mut self, coeffs: &[Complex64]) -> Vec<Complex64> {
        assert!(coeffs.len() <= self.grid_size);
        self.scratch.fill(Complex64::ZERO);
        for (n, c) in coeffs.iter().enumerate() {
            // shift by exp(-j pi n) so index 0 of the transform lands at -pi
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            self.scratch[n] = c * sign;
        }
        self.ifft.process(&mut self.scratch);
        self.scratch.clone()
    }

    /// Project `ln q(theta) = Re(eta^H a(theta))` onto a von Mises.
    ///
    /// A zero eta yields the uniform distribution (kappa = 0).
    pub fn project_eta(&mut self, eta: &[Complex64]) -> VonMises {
        let energy: f64 = eta.iter().map(|e| e.norm_sqr()).sum();
        if !(energy > 0.0) || !energy.is_finite() {
            return VonMises::UNIFORM;
        }
        let coeffs: Vec<Complex64> = eta.iter().map(|e| e.conj()).collect();
        let grid = self.eval_series_on_grid(&coeffs);
        let lnq: Vec<f64> = grid.iter().map(|v| v.re).collect();
        let series = TrigSeries::Linear(&coeffs);
        self.project_grid(&lnq, &series)
    }

    /// Project `ln q(theta) = scale * |sum_n conj(c_n) exp(j n theta)|^2`.
    ///
    /// Used by the initialization, where the density is a normalized
    /// matched-filter (periodogram-like) response.
    pub fn project_power(&mut self, c: &[Complex64], scale: f64) -> VonMises {
        let energy: f64 = c.iter().map(|e| e.norm_sqr()).sum();
        if !(energy > 0.0) || !energy.is_finite() || scale <= 0.0 {
            return VonMises::UNIFORM;
        }
        let coeffs: Vec<Complex64> = c.iter().map(|e| e.conj()).collect();
        let grid = self.eval_series_on_grid(&coeffs);
        let lnq: Vec<f64> = grid.iter().map(|v| scale * v.norm_sqr()).collect();
        let series = TrigSeries::Power(&coeffs, scale);
        self.project_grid(&lnq, &series)
    }

    fn project_grid(&self, lnq: &[f64], series: &TrigSeries) -> VonMises {
        let l = self.grid_size;
        let step = std::f64::consts::TAU / l as f64;
        let (mut peak, mut f_max) = (0usize, f64::NEG_INFINITY);
        let mut f_min = f64::INFINITY;
        for (i, &v) in lnq.iter().enumerate() {
            if v > f_max {
                f_max = v;
                peak = i;
            }
            f_min = f_min.min(v);
        }
        if !(f_max - f_min > 1e-12) || !f_max.is_finite() {
            return VonMises::UNIFORM;
        }

        // Newton refinement of the mode on the trig polynomial
        let mut theta_star = self.theta(peak);
        let mut f_star = f_max;
        let mut t = theta_star;
        for _ in 0..3 {
            let (f, df, d2f) = series.eval(t);
            if f > f_star {
                f_star = f;
                theta_star = t;
            }
            if d2f >= 0.0 {
                break;
            }
            let delta = df / d2f;
            if !delta.is_finite() || delta.abs() > 1.5 * step {
                break;
            }
            t -= delta;
        }
        let (f_last, _, curv) = series.eval(t);
        if f_last > f_star {
            f_star = f_last;
            theta_star = t;
        }

        // dominant lobe: the contiguous region around the global peak above
        // a fixed log-density cutoff. A threshold (rather than the nearest
        // local minimum) keeps the region stable under grid refinement;
        // separated side lobes fall below the cutoff and stay excluded.
        let mut lo = peak;
        let mut lobe_len = 1usize;
        while lobe_len < l {
            let prev = (lo + l - 1) % l;
            if lnq[prev] - f_star >= -LOBE_CUTOFF {
                lo = prev;
                lobe_len += 1;
            } else {
                break;
            }
        }
        let mut hi = peak;
        while lobe_len < l {
            let next = (hi + 1) % l;
            if lnq[next] - f_star >= -LOBE_CUTOFF {
                hi = next;
                lobe_len += 1;
            } else {
                break;
            }
        }

        // grid points that actually carry mass; a narrow peak can still span
        // many grid points at negligible weight, so the lobe extent alone is
        // not a resolution check
        let mut resolved = 0usize;
        {
            let mut idx = lo;
            for _ in 0..lobe_len {
                if lnq[idx] - f_star >= -12.5 {
                    resolved += 1;
                }
                idx = (idx + 1) % l;
            }
        }

        let m1 = if resolved >= MIN_LOBE_POINTS {
            // quadrature on the coarse grid, phases referenced to the mode
            let mut num = Complex64::ZERO;
            let mut den = 0.0;
            let mut idx = lo;
            for _ in 0..lobe_len {
                let w = (lnq[idx] - f_star).exp();
                num += w * Complex64::from_polar(1.0, self.theta(idx) - theta_star);
                den += w;
                idx = (idx + 1) % l;
            }
            num / den
        } else {
            // narrow lobe: local quadrature sized by the curvature at the mode
            let c2 = if curv < 0.0 { -curv } else { 1.0 / (step * step) };
            let half = (10.0 / c2.sqrt()).min(std::f64::consts::PI);
            let mut num = Complex64::ZERO;
            let mut den = 0.0;
            for m in 0..FINE_POINTS {
                let u = -half + 2.0 * half * m as f64 / (FINE_POINTS - 1) as f64;
                let (f, _, _) = series.eval(theta_star + u);
                let w = (f - f_star).exp();
                num += w * Complex64::from_polar(1.0, u);
                den += w;
            }
            num / den
        };

        let r = m1.norm().min(1.0);
        VonMises {
            mu: wrap(theta_star + m1.arg()),
            kappa: bessel::mean_resultant_inverse(r),
        }
    }
}

/// Log-density, first and second derivative of the two posterior families.
enum TrigSeries<'a> {
    /// `f = Re sum c_n e^{j n t}`
    Linear(&'a [Complex64]),
    /// `f = scale * |sum c_n e^{j n t}|^2`
    Power(&'a [Complex64], f64),
}

impl TrigSeries<'_> {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self {
            TrigSeries::Linear(coeffs) => {
                let (g, dg, d2g) = series_with_derivatives(coeffs, t);
                (g.re, dg.re, d2g.re)
            }
            TrigSeries::Power(coeffs, scale) => {
                let (g, dg, d2g) = series_with_derivatives(coeffs, t);
                let f = scale * g.norm_sqr();
                let df = 2.0 * scale * (dg * g.conj()).re;
                let d2f = 2.0 * scale * (dg.norm_sqr() + (d2g * g.conj()).re);
                (f, df, d2f)
            }
        }
    }
}

fn series_with_derivatives(coeffs: &[Complex64], t: f64) -> (Complex64, Complex64, Complex64) {
    let rot = Complex64::from_polar(1.0, t);
    let mut e = Complex64::new(1.0, 0.0);
    let mut g = Complex64::ZERO;
    let mut dg = Complex64::ZERO;
    let mut d2g = Complex64::ZERO;
    for (n, c) in coeffs.iter().enumerate() {
        let nf = n as f64;
        let ce = c * e;
        g += ce;
        dg += Complex64::new(0.0, nf) * ce;
        d2g -= nf * nf * ce;
        e *= rot;
    }
    (g, dg, d2g)
}
