//! Quadratic-transform machinery for the secrecy-rate objective:
//! closed-form auxiliary updates and the constants (c, v, M) of the
//! non-fractional surrogate.
//!
//! Two evaluations of the surrogate coexist. [`transformed_objective`] is
//! the quadratic-transform value itself, with the signal terms entering
//! through their moduli; at the matched auxiliaries it reproduces the
//! secrecy rate exactly. [`sdr_objective`] is the linearized form
//! c + Re(v'w) + tr(M(W_n W_n' + w w')) that the semidefinite sub-problems
//! maximize; its linear term uses Re rather than the modulus, which is
//! what makes it SDP-representable.

use num_complex::Complex64;

use crate::metrics::DesignState;
use crate::scenario::{
    effective_ed_channel, effective_user_channel, CMatrix, CVector, Scenario,
};

/// Quadratic-transform auxiliaries (alpha_u, gamma_u, alpha_te, gamma_te).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuxiliaryState {
    pub alpha_u: f64,
    pub gamma_u: f64,
    pub alpha_te: f64,
    pub gamma_te: f64,
}

/// Constants of the non-fractional objective: scalar c, linear vector v,
/// and the Hermitian quadratic coefficient M.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformConstants {
    pub c: f64,
    pub v: CVector,
    pub m: CMatrix,
}

/// Signal modulus |c' w| and leakage-plus-noise power ||c' W_n||^2 + sigma2.
fn link_terms(c: &CVector, d: &DesignState, sigma2: f64) -> (f64, f64) {
    let sig = c.dot(&d.w).norm();
    let leak = (c.transpose() * &d.w_n).norm_squared() + sigma2;
    (sig, leak)
}

fn matched_pair(sig: f64, leak: f64) -> (f64, f64) {
    // gamma = SINR, alpha at the stationary point of the quadratic transform
    let gamma = sig * sig / leak;
    let alpha = (1.0 + gamma).sqrt() * sig / (sig * sig + leak);
    (alpha, gamma)
}

/// Stationary-point auxiliaries for the current design: gamma is the exact
/// SINR of each link, alpha the maximizing quadratic-transform variable.
pub fn update_auxiliaries(d: &DesignState, s: &Scenario) -> AuxiliaryState {
    let cu = effective_user_channel(&d.phi, s);
    let cte = effective_ed_channel(&d.phi, s);
    let (sig_u, leak_u) = link_terms(&cu, d, s.sigma2_u);
    let (sig_te, leak_te) = link_terms(&cte, d, s.sigma2_te);
    let (alpha_u, gamma_u) = matched_pair(sig_u, leak_u);
    let (alpha_te, gamma_te) = matched_pair(sig_te, leak_te);
    AuxiliaryState {
        alpha_u,
        gamma_u,
        alpha_te,
        gamma_te,
    }
}

/// c, v, M of the transformed objective for given auxiliaries, effective
/// channels, and link noise powers. The constant collects
/// log(1+g_u) - g_u - log(1+g_te) + g_te + a_te^2 s_te^2 - a_u^2 s_u^2.
pub fn transform_constants(
    aux: &AuxiliaryState,
    c_u: &CVector,
    c_te: &CVector,
    sigma2_u: f64,
    sigma2_te: f64,
) -> TransformConstants {
    let (au, gu) = (aux.alpha_u, aux.gamma_u);
    let (at, gt) = (aux.alpha_te, aux.gamma_te);
    let c = gu.ln_1p() - gu - gt.ln_1p() + gt + at * at * sigma2_te - au * au * sigma2_u;
    let v = c_u * Complex64::new(2.0 * au * (1.0 + gu).sqrt(), 0.0)
        - c_te * Complex64::new(2.0 * at * (1.0 + gt).sqrt(), 0.0);
    let m = outer_conj(c_te) * Complex64::new(at * at, 0.0)
        - outer_conj(c_u) * Complex64::new(au * au, 0.0);
    TransformConstants { c, v, m }
}

/// conj(x) x^T, the Hermitian outer product appearing in M.
fn outer_conj(x: &CVector) -> CMatrix {
    let xc = x.map(|z| z.conj());
    &xc * x.transpose()
}

/// One quadratic-transform bracket
/// -alpha^2 (A^2 + B) + 2 alpha sqrt(1+gamma) A + log(1+gamma) - gamma.
fn bracket(alpha: f64, gamma: f64, sig: f64, leak: f64) -> f64 {
    -alpha * alpha * (sig * sig + leak) + 2.0 * alpha * (1.0 + gamma).sqrt() * sig
        + gamma.ln_1p()
        - gamma
}

/// Quadratic-transform value of the secrecy objective at (d, aux). Exact
/// at aux = update_auxiliaries(d, s).
pub fn transformed_objective(d: &DesignState, aux: &AuxiliaryState, s: &Scenario) -> f64 {
    let cu = effective_user_channel(&d.phi, s);
    let cte = effective_ed_channel(&d.phi, s);
    let (sig_u, leak_u) = link_terms(&cu, d, s.sigma2_u);
    let (sig_te, leak_te) = link_terms(&cte, d, s.sigma2_te);
    bracket(aux.alpha_u, aux.gamma_u, sig_u, leak_u)
        - bracket(aux.alpha_te, aux.gamma_te, sig_te, leak_te)
}

/// The SDR objective c + Re(v' w) + tr(M (K + w w')) evaluated at an
/// explicit beamformer and AN second moment K = W_n W_n'. This is the
/// function both sub-problems maximize.
pub fn sdr_objective(tc: &TransformConstants, w: &CVector, an_gram: &CMatrix) -> f64 {
    let lin = tc.v.dot(w).re;
    let gram = an_gram + w * w.adjoint();
    let quad = (&tc.m * gram).trace().re;
    tc.c + lin + quad
}
