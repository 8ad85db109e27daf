//! Linear-model module: weight/support inference under a Bernoulli-Gaussian
//! prior, von Mises frequency refinement, and the posterior moments of the
//! reconstructed spectrum, all for per-component (heteroscedastic) noise
//! variances.
//!
//! The support is found by a greedy ascent on the marginal evidence ln Z(s):
//! each step tests flipping every component, applies the best positive gain
//! and updates the weight posterior by a rank-one formula instead of a fresh
//! matrix inversion.

use crate::error::{Error, Result};
use crate::message::{divide, GaussianMessage};
use crate::vonmises::{vm_moments, LobeProjector, VonMises};
use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

/// Floor for the weight-prior variance.
pub const TAU_MIN: f64 = 1e-12;

/// Dense recomputation of the weight covariance after this many rank-one
/// updates, to stop round-off drift.
const REFRESH_EVERY: usize = 100;

/// Bernoulli-Gaussian prior parameters: activation probability and weight
/// variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorParams {
    pub rho: f64,
    pub tau: f64,
}

impl PriorParams {
    /// Clamp into the legal region: rho away from 0 and 1, tau above floor.
    pub fn clamped(rho: f64, tau: f64, n: usize) -> Self {
        let lim = 1.0 / (10.0 * n as f64);
        Self {
            rho: rho.clamp(lim, 1.0 - lim),
            tau: tau.max(TAU_MIN),
        }
    }

    pub fn log_odds(&self) -> f64 {
        (self.rho / (1.0 - self.rho)).ln()
    }
}

/// Per-component von Mises beliefs plus the cached moment matrix whose
/// column i is `a_hat_i = E[a(theta_i)]`.
#[derive(Debug, Clone)]
pub struct FrequencyPosterior {
    vm: Vec<VonMises>,
    a_hat: DMatrix<Complex64>,
}

impl FrequencyPosterior {
    /// All components at the uniform prior (moment vectors `e_0`).
    pub fn uniform(n: usize) -> Self {
        let mut a_hat = DMatrix::zeros(n, n);
        for i in 0..n {
            a_hat[(0, i)] = Complex64::new(1.0, 0.0);
        }
        Self {
            vm: vec![VonMises::UNIFORM; n],
            a_hat,
        }
    }

    pub fn len(&self) -> usize {
        self.vm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vm.is_empty()
    }

    pub fn vm(&self, i: usize) -> VonMises {
        self.vm[i]
    }

    pub fn moments(&self) -> &DMatrix<Complex64> {
        &self.a_hat
    }

    pub fn moment_col(&self, i: usize) -> DVector<Complex64> {
        DVector::from_column_slice(self.a_hat.column(i).as_slice())
    }

    /// Replace component i's belief and recompute its moment vector.
    pub fn set(&mut self, i: usize, vm: VonMises) {
        let n = self.a_hat.nrows();
        let col = vm_moments(vm, n);
        self.vm[i] = vm;
        for (r, v) in col.into_iter().enumerate() {
            self.a_hat[(r, i)] = v;
        }
    }
}

/// `J` and `h` of the weight posterior for pseudo measurements with
/// per-component variances: `J_ij = a_i^H S^-1 a_j` off the diagonal,
/// `J_ii = tr(S^-1)`, `h = A^H S^-1 y`.
pub fn compute_jh(
    a_hat: &DMatrix<Complex64>,
    pseudo_y: &[Complex64],
    pseudo_var: &[f64],
) -> (DMatrix<Complex64>, DVector<Complex64>) {
    let n = a_hat.nrows();
    debug_assert_eq!(pseudo_y.len(), n);
    debug_assert_eq!(pseudo_var.len(), n);
    let mut scaled = a_hat.clone();
    for r in 0..n {
        let inv = Complex64::new(1.0 / pseudo_var[r], 0.0);
        for c in 0..a_hat.ncols() {
            scaled[(r, c)] *= inv;
        }
    }
    let mut j = a_hat.adjoint() * &scaled;
    let trace_inv: f64 = pseudo_var.iter().map(|v| 1.0 / v).sum();
    for i in 0..j.nrows() {
        j[(i, i)] = Complex64::new(trace_inv, 0.0);
    }
    let weighted_y = DVector::from_iterator(
        n,
        pseudo_y.iter().zip(pseudo_var).map(|(y, v)| y / *v),
    );
    let h = a_hat.adjoint() * weighted_y;
    (j, h)
}

/// Support indicator, active set, weight posterior and the (J, h) pair they
/// were computed from.
#[derive(Debug, Clone)]
pub struct SupportState {
    j: DMatrix<Complex64>,
    h: DVector<Complex64>,
    s: Vec<bool>,
    active: Vec<usize>,
    w: DVector<Complex64>,
    c: DMatrix<Complex64>,
    updates_since_refresh: usize,
}

impl SupportState {
    /// Build the state for a given support, computing the weight posterior
    /// by dense inversion of `J_S + I/tau`.
    pub fn new(
        j: DMatrix<Complex64>,
        h: DVector<Complex64>,
        support: &[bool],
        prior: &PriorParams,
    ) -> Result<Self> {
        let n = h.len();
        assert_eq!(support.len(), n);
        let active: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
        let mut state = Self {
            j,
            h,
            s: support.to_vec(),
            active,
            w: DVector::zeros(0),
            c: DMatrix::zeros(0, 0),
            updates_since_refresh: 0,
        };
        state.dense_rebuild(prior)?;
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn support(&self) -> &[bool] {
        &self.s
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn model_order(&self) -> usize {
        self.active.len()
    }

    pub fn weights(&self) -> &DVector<Complex64> {
        &self.w
    }

    pub fn weight_cov(&self) -> &DMatrix<Complex64> {
        &self.c
    }

    pub fn j(&self) -> &DMatrix<Complex64> {
        &self.j
    }

    pub fn h(&self) -> &DVector<Complex64> {
        &self.h
    }

    /// Recompute (w, C) for the current active set by dense inversion.
    pub fn dense_rebuild(&mut self, prior: &PriorParams) -> Result<()> {
        let m = self.active.len();
        self.updates_since_refresh = 0;
        if m == 0 {
            self.w = DVector::zeros(0);
            self.c = DMatrix::zeros(0, 0);
            return Ok(());
        }
        let mut a = DMatrix::zeros(m, m);
        for (pi, &i) in self.active.iter().enumerate() {
            for (pj, &j) in self.active.iter().enumerate() {
                a[(pi, pj)] = self.j[(i, j)];
            }
            a[(pi, pi)] += Complex64::new(1.0 / prior.tau, 0.0);
        }
        let inv = match Cholesky::new(a.clone()) {
            Some(ch) => ch.inverse(),
            None => a
                .lu()
                .try_inverse()
                .ok_or(Error::SingularMatrix { condition: f64::INFINITY })?,
        };
        let h_s = DVector::from_iterator(m, self.active.iter().map(|&i| self.h[i]));
        self.w = &inv * h_s;
        self.c = inv;
        Ok(())
    }

    /// Evidence change, would-be posterior mean and variance of `w_k` for
    /// activating the inactive component k.
    pub fn delta_activate(
        &self,
        k: usize,
        prior: &PriorParams,
    ) -> Result<(f64, Complex64, f64)> {
        debug_assert!(!self.s[k]);
        let m = self.active.len();
        let jk = DVector::from_iterator(m, self.active.iter().map(|&i| self.j[(i, k)]));
        let q = &self.c * &jk;
        let quad: f64 = jk.dotc(&q).re;
        let trace_inv = self.j[(k, k)].re;
        let inv_vk = trace_inv + 1.0 / prior.tau - quad;
        if inv_vk <= 0.0 {
            return Err(Error::SingularMatrix { condition: f64::INFINITY });
        }
        let vk = 1.0 / inv_vk;
        let uk = vk * (self.h[k] - jk.dotc(&self.w));
        let delta = (vk / prior.tau).ln() + uk.norm_sqr() / vk + prior.log_odds();
        Ok((delta, uk, vk))
    }

    /// Evidence change for deactivating the active component k.
    pub fn delta_deactivate(&self, k: usize, prior: &PriorParams) -> f64 {
        let p = self.position(k).expect("component not active");
        let ckk = self.c[(p, p)].re;
        let wk = self.w[p];
        -(ckk / prior.tau).ln() - wk.norm_sqr() / ckk - prior.log_odds()
    }

    fn position(&self, k: usize) -> Option<usize> {
        self.active.binary_search(&k).ok()
    }

    /// Rank-one activation of component k given its (u_k, v_k).
    pub fn activate(&mut self, k: usize, uk: Complex64, vk: f64) {
        debug_assert!(!self.s[k]);
        let m = self.active.len();
        let p = self.active.binary_search(&k).unwrap_err();
        let jk = DVector::from_iterator(m, self.active.iter().map(|&i| self.j[(i, k)]));
        let q = &self.c * &jk;

        let mut c_new = DMatrix::zeros(m + 1, m + 1);
        let mut w_new = DVector::zeros(m + 1);
        for a in 0..=m {
            if a == p {
                continue;
            }
            let ao = if a < p { a } else { a - 1 };
            w_new[a] = self.w[ao] - uk * q[ao];
            for b in 0..=m {
                if b == p {
                    continue;
                }
                let bo = if b < p { b } else { b - 1 };
                c_new[(a, b)] = self.c[(ao, bo)] + vk * q[ao] * q[bo].conj();
            }
            c_new[(a, p)] = -vk * q[ao];
            c_new[(p, a)] = -vk * q[ao].conj();
        }
        c_new[(p, p)] = Complex64::new(vk, 0.0);
        w_new[p] = uk;

        self.c = c_new;
        self.w = w_new;
        self.active.insert(p, k);
        self.s[k] = true;
        self.updates_since_refresh += 1;
    }

    /// Rank-one deactivation of the active component k.
    pub fn deactivate(&mut self, k: usize) {
        let p = self.position(k).expect("component not active");
        let m = self.active.len();
        let ckk = self.c[(p, p)].re;
        let wk = self.w[p];
        let mut c_new = DMatrix::zeros(m - 1, m - 1);
        let mut w_new = DVector::zeros(m - 1);
        for a in 0..m - 1 {
            let ao = if a < p { a } else { a + 1 };
            let ca = self.c[(ao, p)];
            w_new[a] = self.w[ao] - wk / ckk * ca;
            for b in 0..m - 1 {
                let bo = if b < p { b } else { b + 1 };
                c_new[(a, b)] = self.c[(ao, bo)] - ca * self.c[(bo, p)].conj() / ckk;
            }
        }
        self.c = c_new;
        self.w = w_new;
        self.active.remove(p);
        self.s[k] = false;
        self.updates_since_refresh += 1;
    }

    /// One greedy step: evaluate every flip, apply the best one if its
    /// evidence gain is positive. Returns the flipped index and gain.
    pub fn greedy_step(&mut self, prior: &PriorParams) -> Result<Option<(usize, f64)>> {
        match self.scan_flips(prior, false) {
            Ok(best) => self.apply_candidate(best, prior),
            Err(_) => {
                // a nonpositive v_k means the rank-one chain lost positive
                // definiteness: rebuild once, then skip candidates that are
                // still numerically infeasible
                self.dense_rebuild(prior)?;
                let best = self.scan_flips(prior, true)?;
                self.apply_candidate(best, prior)
            }
        }
    }

    fn apply_candidate(
        &mut self,
        best: Option<Candidate>,
        prior: &PriorParams,
    ) -> Result<Option<(usize, f64)>> {
        let Some(cand) = best else {
            return Ok(None);
        };
        match cand.action {
            Action::Activate { uk, vk } => self.activate(cand.k, uk, vk),
            Action::Deactivate => self.deactivate(cand.k),
        }
        if self.updates_since_refresh >= REFRESH_EVERY {
            self.dense_rebuild(prior)?;
        }
        Ok(Some((cand.k, cand.delta)))
    }

    fn scan_flips(&self, prior: &PriorParams, skip_failures: bool) -> Result<Option<Candidate>> {
        let mut best: Option<Candidate> = None;
        for k in 0..self.n() {
            let cand = if self.s[k] {
                Candidate {
                    k,
                    delta: self.delta_deactivate(k, prior),
                    action: Action::Deactivate,
                }
            } else {
                match self.delta_activate(k, prior) {
                    Ok((delta, uk, vk)) => Candidate {
                        k,
                        delta,
                        action: Action::Activate { uk, vk },
                    },
                    Err(_) if skip_failures => continue,
                    Err(e) => return Err(e),
                }
            };
            if cand.delta > 0.0 && best.as_ref().is_none_or(|b| cand.delta > b.delta) {
                best = Some(cand);
            }
        }
        Ok(best)
    }
}

struct Candidate {
    k: usize,
    delta: f64,
    action: Action,
}

enum Action {
    Activate { uk: Complex64, vk: f64 },
    Deactivate,
}

/// Greedy ascent on ln Z(s) until no flip improves it or the flip budget is
/// exhausted; returns the number of flips applied.
pub fn greedy_support_search(
    state: &mut SupportState,
    prior: &PriorParams,
    max_flips: usize,
) -> Result<usize> {
    let mut flips = 0;
    while flips < max_flips {
        match state.greedy_step(prior)? {
            Some(_) => flips += 1,
            None => break,
        }
    }
    Ok(flips)
}

/// EM update of the prior parameters from the current support and weight
/// posterior; an empty support keeps the previous values.
pub fn estimate_prior_params(state: &SupportState, previous: &PriorParams) -> PriorParams {
    let m = state.model_order();
    let n = state.n();
    if m == 0 {
        return PriorParams::clamped(previous.rho, previous.tau, n);
    }
    let rho = m as f64 / n as f64;
    let wq: f64 = state.weights().iter().map(|w| w.norm_sqr()).sum();
    let trc: f64 = (0..m).map(|p| state.weight_cov()[(p, p)].re).sum();
    PriorParams::clamped(rho, (wq + trc) / m as f64, n)
}

/// Sequential (index-ordered) von Mises refresh of every active component.
///
/// For component i the exact posterior is `exp(Re(eta_i^H a(theta)))` with
/// `eta_i = 2 S^-1 [(y - sum_{l != i} a_l w_l) w_i^* - sum_{l != i} a_l C_li]`;
/// each updated moment vector feeds the next component's residual.
pub fn update_frequencies(
    state: &SupportState,
    freq_post: &mut FrequencyPosterior,
    pseudo_y: &[Complex64],
    pseudo_var: &[f64],
    projector: &mut LobeProjector,
) {
    let n = state.n();
    let active = state.active().to_vec();
    if active.is_empty() {
        return;
    }
    // residual containing every active component
    let mut residual = DVector::from_column_slice(pseudo_y);
    for (p, &i) in active.iter().enumerate() {
        residual -= freq_post.moment_col(i) * state.weights()[p];
    }
    let mut eta = vec![Complex64::ZERO; n];
    for (p, &i) in active.iter().enumerate() {
        let a_i = freq_post.moment_col(i);
        let w_i = state.weights()[p];
        // cross-covariance part: sum_{l != i} a_l C_{l,i}
        let mut cross = DVector::zeros(n);
        for (q, &l) in active.iter().enumerate() {
            if q != p {
                cross += freq_post.moment_col(l) * state.weight_cov()[(q, p)];
            }
        }
        for r in 0..n {
            let excl = residual[r] + a_i[r] * w_i;
            eta[r] = 2.0 / pseudo_var[r] * (excl * w_i.conj() - cross[r]);
        }
        let vm = projector.project_eta(&eta);
        freq_post.set(i, vm);
        let a_new = freq_post.moment_col(i);
        for r in 0..n {
            residual[r] += (a_i[r] - a_new[r]) * w_i;
        }
    }
}

/// Posterior mean and variance of the reconstructed spectrum
/// `z = A_S w_S` under the factored posterior.
pub fn posterior_lse(
    freq_post: &FrequencyPosterior,
    active: &[usize],
    w: &DVector<Complex64>,
    c: &DMatrix<Complex64>,
) -> (DVector<Complex64>, DVector<f64>) {
    let n = freq_post.len();
    let m = active.len();
    if m == 0 {
        return (DVector::zeros(n), DVector::zeros(n));
    }
    let mut a_s = DMatrix::zeros(n, m);
    for (p, &i) in active.iter().enumerate() {
        a_s.set_column(p, &freq_post.moment_col(i));
    }
    let z = &a_s * w;
    let t = &a_s * c; // N x m
    let w_energy: f64 = w.iter().map(|v| v.norm_sqr()).sum();
    let trc: f64 = (0..m).map(|p| c[(p, p)].re).sum();
    let mut v = DVector::zeros(n);
    for r in 0..n {
        let mut quad = 0.0;
        let mut atom_w = 0.0;
        let mut atom_c = 0.0;
        for p in 0..m {
            quad += (t[(r, p)] * a_s[(r, p)].conj()).re;
            let mag2 = a_s[(r, p)].norm_sqr();
            atom_w += mag2 * w[p].norm_sqr();
            atom_c += mag2 * c[(p, p)].re;
        }
        v[r] = (quad + (w_energy - atom_w) + (trc - atom_c)).max(0.0);
    }
    (z, v)
}

/// Extrinsic message of the linear module toward the MMSE module.
pub fn extrinsic(
    z_post: &DVector<Complex64>,
    v_post: &DVector<f64>,
    pseudo_y: &[Complex64],
    pseudo_var: &[f64],
) -> GaussianMessage {
    let post = GaussianMessage::new(
        z_post.iter().copied().collect(),
        v_post.iter().copied().collect(),
    )
    .expect("posterior moments are finite");
    let incoming = GaussianMessage::new(pseudo_y.to_vec(), pseudo_var.to_vec())
        .expect("pseudo measurements are finite");
    divide(&post, &incoming)
}
