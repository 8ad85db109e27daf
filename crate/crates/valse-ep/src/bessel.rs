//! Ratios of modified Bessel functions of the first kind.
//!
//! Only ratios `I_n(kappa)/I_0(kappa)` are ever needed (they are the circular
//! moments of a von Mises distribution), so the functions themselves are
//! never formed: direct evaluation of `I_n` overflows near kappa ~ 700.
//!
//! For small and moderate kappa the ratios come from Miller's backward
//! recurrence normalized at order zero. For large kappa the backward start
//! order grows like sqrt(kappa), so beyond a switch point the seed ratio
//! `I_1/I_0` is taken from the large-argument asymptotic expansion and the
//! remaining orders follow by forward recurrence, which is stable there
//! because the contaminating solution grows only by exp(n^2/kappa).

/// Kappa above which the asymptotic-seeded forward recurrence is used.
const FORWARD_SWITCH: f64 = 1.0e4;

/// `I_n(kappa)/I_0(kappa)` for n = 0..len-1.
pub fn ratio_vector(kappa: f64, len: usize) -> Vec<f64> {
    assert!(kappa >= 0.0, "concentration must be nonnegative");
    assert!(len >= 1);
    if kappa < 1e-14 {
        let mut out = vec![0.0; len];
        out[0] = 1.0;
        return out;
    }
    let n_max = len - 1;
    if kappa <= FORWARD_SWITCH.max((n_max * n_max) as f64) {
        backward_ratios(kappa, len)
    } else {
        forward_ratios(kappa, len)
    }
}

/// `A(kappa) = I_1(kappa)/I_0(kappa)`, the circular mean resultant length.
pub fn mean_resultant(kappa: f64) -> f64 {
    if kappa < 1e-14 {
        return 0.5 * kappa; // A(k) = k/2 + O(k^3)
    }
    if kappa <= FORWARD_SWITCH {
        backward_ratios(kappa, 2)[1]
    } else {
        a_large(kappa)
    }
}

/// Invert `A(kappa) = r` by Newton iteration.
///
/// The initial guess is the standard piecewise approximation;ACCURACY is
/// limited only by the evaluation of A itself.
pub fn mean_resultant_inverse(r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    if r >= 1.0 - 5e-14 {
        return 1e13; // saturated resultant: effectively a point mass
    }
    let mut kappa = if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r.powi(3) - 4.0 * r * r + 3.0 * r)
    };
    kappa = kappa.clamp(1e-12, 1e13);
    for _ in 0..50 {
        let a = mean_resultant(kappa);
        // dA/dk = 1 - A/k - A^2
        let da = 1.0 - a / kappa - a * a;
        if da.abs() < 1e-300 {
            break;
        }
        let step = (a - r) / da;
        let next = (kappa - step).clamp(kappa / 8.0, kappa * 8.0);
        if (next - kappa).abs() <= 1e-13 * kappa.max(1.0) {
            kappa = next;
            break;
        }
        kappa = next;
    }
    kappa.clamp(0.0, 1e13)
}

/// Miller's algorithm: run `r_m = I_{m+1}/I_m` backward from a start order
/// high enough that the seeded error has decayed below double precision,
/// then accumulate the products downward from order zero.
fn backward_ratios(kappa: f64, len: usize) -> Vec<f64> {
    let n_max = len - 1;
    // contamination shrinks by exp(-(M^2 - n^2)/kappa): 40 e-foldings suffice
    let start = n_max + (40.0 * kappa).sqrt().ceil() as usize + 20;
    let mut r = 0.0f64; // I_{start+1}/I_{start} seed
    let mut ratios_down = vec![0.0f64; start + 1];
    for m in (0..=start).rev() {
        // r becomes I_{m+1}/I_m
        r = 1.0 / (2.0 * (m + 1) as f64 / kappa + r);
        ratios_down[m] = r;
    }
    let mut out = Vec::with_capacity(len);
    let mut acc = 1.0f64;
    out.push(1.0);
    for n in 1..len {
        acc *= ratios_down[n - 1];
        out.push(acc);
    }
    out
}

/// Forward recurrence `I_{n+1} = I_{n-1} - (2n/kappa) I_n` on ratios,
/// seeded by the asymptotic `I_1/I_0`.
fn forward_ratios(kappa: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    out.push(1.0);
    if len == 1 {
        return out;
    }
    let mut prev = 1.0f64; // I_{n-1}/I_0
    let mut cur = a_large(kappa); // I_n/I_0
    out.push(cur);
    for n in 1..(len - 1) {
        let next = prev - (2.0 * n as f64 / kappa) * cur;
        let next = next.clamp(0.0, cur); // ratios are positive and decreasing
        out.push(next);
        prev = cur;
        cur = next;
    }
    out
}

/// Large-argument series for `I_1(x)/I_0(x)` (error O(x^-4) coefficients).
fn a_large(x: f64) -> f64 {
    let ix = 1.0 / x;
    let num = 1.0 - 0.375 * ix - 0.1171875 * ix * ix - 0.1025390625 * ix * ix * ix;
    let den = 1.0 + 0.125 * ix + 0.0703125 * ix * ix + 0.0732421875 * ix * ix * ix;
    num / den
}
