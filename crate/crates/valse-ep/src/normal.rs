//! Standard-normal helpers and tail-safe truncated-Gaussian cell moments.
//!
//! Both the componentwise MMSE denoiser and the quantized Fisher information
//! reduce to moments of a Gaussian restricted to an interval; everything here
//! works in standardized coordinates. When both cell endpoints are deep in
//! the same tail the ratios are evaluated through Mills-ratio asymptotics so
//! that no cell probability is ever divided out at zero.

use std::f64::consts::SQRT_2;

const LN_SQRT_TAU: f64 = 0.918_938_533_204_672_8; // ln(sqrt(2 pi))

/// Standardized endpoints beyond which the Mills-ratio branch is used.
const TAIL_SWITCH: f64 = 8.0;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (SQRT_2 * std::f64::consts::PI.sqrt())
}

/// Standard normal CDF via erfc (accurate in both tails).
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Moments of a standard normal conditioned on the cell `[alpha, beta)`.
///
/// `m1 = (phi(a) - phi(b)) / P`, `m2 = (a phi(a) - b phi(b)) / P` with
/// `P = Phi(b) - Phi(a)`; `log_prob = ln P`. Infinite endpoints are allowed.
#[derive(Debug, Clone, Copy)]
pub struct CellMoments {
    pub log_prob: f64,
    pub m1: f64,
    pub m2: f64,
}

pub fn cell_moments(alpha: f64, beta: f64) -> CellMoments {
    debug_assert!(alpha < beta, "empty cell [{alpha}, {beta})");
    if alpha == f64::NEG_INFINITY && beta == f64::INFINITY {
        return CellMoments {
            log_prob: 0.0,
            m1: 0.0,
            m2: 0.0,
        };
    }
    // reduce a left-tail cell to the mirrored right-tail cell
    if beta <= -TAIL_SWITCH {
        let m = cell_moments(-beta, -alpha);
        return CellMoments {
            log_prob: m.log_prob,
            m1: -m.m1,
            m2: m.m2,
        };
    }
    if alpha >= TAIL_SWITCH {
        return tail_cell_moments(alpha, beta);
    }
    central_cell_moments(alpha, beta)
}

fn central_cell_moments(alpha: f64, beta: f64) -> CellMoments {
    let (pa, pb) = (pdf_or_zero(alpha), pdf_or_zero(beta));
    // ordered so the difference of CDFs is computed in its stable direction
    let prob = if alpha + beta > 0.0 {
        cdf(-alpha) - cdf(-beta)
    } else {
        cdf(beta) - cdf(alpha)
    };
    let prob = prob.max(f64::MIN_POSITIVE);
    let apa = if alpha.is_finite() { alpha * pa } else { 0.0 };
    let bpb = if beta.is_finite() { beta * pb } else { 0.0 };
    CellMoments {
        log_prob: prob.ln(),
        m1: (pa - pb) / prob,
        m2: (apa - bpb) / prob,
    }
}

/// Mills-ratio evaluation for a cell with `8 <= alpha < beta`.
///
/// Everything is scaled by `phi(alpha)`: with `e = phi(beta)/phi(alpha)` and
/// `h(x) ~ Q(x)/phi(x)` the ratios stay bounded however small the cell
/// probability becomes.
fn tail_cell_moments(alpha: f64, beta: f64) -> CellMoments {
    let e = if beta.is_finite() {
        (-0.5 * (beta - alpha) * (beta + alpha)).exp()
    } else {
        0.0
    };
    let denom = if beta.is_finite() {
        mills(alpha) - e * mills(beta)
    } else {
        mills(alpha)
    };
    let denom = denom.max(f64::MIN_POSITIVE);
    let log_prob = -0.5 * alpha * alpha - LN_SQRT_TAU + denom.ln();
    let bpart = if beta.is_finite() { beta * e } else { 0.0 };
    CellMoments {
        log_prob,
        m1: (1.0 - e) / denom,
        m2: (alpha - bpart) / denom,
    }
}

/// Asymptotic Mills ratio `Q(x)/phi(x)` for large positive x.
fn mills(x: f64) -> f64 {
    let x2 = x * x;
    (1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)
        + 105.0 / (x2 * x2 * x2 * x2))
        / x
}

fn pdf_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        pdf(x)
    } else {
        0.0
    }
}

/// Posterior mean and variance of `x ~ N(mean, var)` observed through
/// `u = x + n`, `n ~ N(0, noise_var)`, given that `u` fell in `[lo, hi)`.
pub fn interval_posterior(mean: f64, var: f64, noise_var: f64, lo: f64, hi: f64) -> (f64, f64) {
    let w = var + noise_var;
    let sw = w.sqrt();
    let alpha = if lo == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        (lo - mean) / sw
    };
    let beta = if hi == f64::INFINITY {
        f64::INFINITY
    } else {
        (hi - mean) / sw
    };
    let cm = cell_moments(alpha, beta);
    let rho = var / w;
    let u_var = w * (1.0 + cm.m2 - cm.m1 * cm.m1).max(0.0);
    let mean_post = mean + rho * sw * cm.m1;
    let var_post = rho * rho * u_var + var * noise_var / w;
    (mean_post, var_post.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn cdf_matches_known_values() {
        assert_abs_diff_eq!(cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cdf(1.0), 0.841_344_746_068_543, epsilon = 1e-12);
        assert_relative_eq!(cdf(-8.0), 6.220_960_574_271_78e-16, max_relative = 1e-9);
    }

    #[test]
    fn unbounded_cell_is_uninformative() {
        let (m, v) = interval_posterior(0.7, 2.0, 1.0, f64::NEG_INFINITY, f64::INFINITY);
        assert_abs_diff_eq!(m, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn halfline_cell_moments_match_direct_formula() {
        // moderate alpha: compare against the naive phi/Phi evaluation
        for &a in &[-2.0, -0.5, 0.0, 1.5, 4.0] {
            let cm = cell_moments(a, f64::INFINITY);
            let q = 1.0 - cdf(a);
            assert_relative_eq!(cm.m1, pdf(a) / q, max_relative = 1e-12);
            assert_relative_eq!(cm.m2, a * pdf(a) / q, max_relative = 1e-12);
            assert_relative_eq!(cm.log_prob, q.ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn tail_branch_is_continuous_at_switch() {
        for &b in &[8.5, 9.0, 12.0, f64::INFINITY] {
            let below = central_cell_moments(7.999, b);
            let above = tail_cell_moments(8.001, b);
            assert_relative_eq!(below.m1, above.m1, max_relative = 1e-3);
            assert_relative_eq!(below.m2, above.m2, max_relative = 1e-3);
        }
        // deep tail must stay finite and ordered
        let cm = cell_moments(30.0, 30.5);
        assert!(cm.m1.is_finite() && cm.m2.is_finite());
        assert!(cm.log_prob < -400.0);
        assert!(cm.m1 > 0.0);
    }

    #[test]
    fn mirrored_cells_negate_m1() {
        let right = cell_moments(9.0, 10.0);
        let left = cell_moments(-10.0, -9.0);
        assert_relative_eq!(left.m1, -right.m1, max_relative = 1e-14);
        assert_relative_eq!(left.m2, right.m2, max_relative = 1e-14);
        assert_relative_eq!(left.log_prob, right.log_prob, max_relative = 1e-14);
    }

    #[test]
    fn posterior_shrinks_variance() {
        for &(m, v, s2, lo, hi) in &[
            (0.0, 1.0, 1.0, 0.0, f64::INFINITY),
            (1.2, 0.3, 2.0, -0.5, 0.5),
            (-2.0, 4.0, 0.1, f64::NEG_INFINITY, -1.0),
            (3.0, 0.5, 0.5, 10.0, 11.0),
        ] {
            let (_, vp) = interval_posterior(m, v, s2, lo, hi);
            assert!(vp <= v + 1e-12, "vp={vp} v={v}");
            assert!(vp >= 0.0);
        }
    }
}
