//! Exact radar SNR, user rate, eavesdropper rate, and secrecy rate for a
//! design state. Ground truth for every reformulation in the pipeline;
//! natural logarithms throughout (rates in nats).

use num_complex::Complex64;

use crate::scenario::{
    effective_ed_channel, effective_user_channel, radar_cascade_channel, CMatrix, CVector,
    PhaseVector, Scenario,
};

/// Current (w, W_n, Phi) triple, the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    /// Information precoder, length N_T.
    pub w: CVector,
    /// Artificial-noise precoder, N_T x N_T.
    pub w_n: CMatrix,
    pub phi: PhaseVector,
}

impl DesignState {
    pub fn zero(n_tx: usize, n_irs: usize) -> Self {
        DesignState {
            w: CVector::zeros(n_tx),
            w_n: CMatrix::zeros(n_tx, n_tx),
            phi: PhaseVector::ones(n_irs),
        }
    }

    /// Total transmit power tr(w w' + W_n W_n').
    pub fn power(&self) -> f64 {
        self.w.norm_squared() + self.w_n.norm_squared()
    }

    /// Second-order statistics of the transmit signal, w w' + W_n W_n'.
    pub fn gram(&self) -> CMatrix {
        &self.w * self.w.adjoint() + &self.w_n * self.w_n.adjoint()
    }
}

/// Signal power |c' w|^2 and interference-plus-noise power
/// ||c' W_n||^2 + sigma2 for a link with effective channel c.
fn link_powers(c: &CVector, d: &DesignState, sigma2: f64) -> (f64, f64) {
    let sig: Complex64 = c.dot(&d.w); // unconjugated: c^T w
    let sig_pow = sig.norm_sqr();
    let row = c.transpose() * &d.w_n;
    let inp = row.norm_squared() + sigma2;
    (sig_pow, inp)
}

/// Radar receive SNR tr(C_T [w w' + W_n W_n'] C_T') / sigma_R^2.
pub fn radar_snr(d: &DesignState, s: &Scenario) -> f64 {
    let ct = radar_cascade_channel(&d.phi, s);
    let cw = &ct * &d.w;
    let cwn = &ct * &d.w_n;
    (cw.norm_squared() + cwn.norm_squared()) / s.sigma2_r
}

pub fn user_sinr(d: &DesignState, s: &Scenario) -> f64 {
    let cu = effective_user_channel(&d.phi, s);
    let (sig, inp) = link_powers(&cu, d, s.sigma2_u);
    sig / inp
}

pub fn ed_sinr(d: &DesignState, s: &Scenario) -> f64 {
    let cte = effective_ed_channel(&d.phi, s);
    let (sig, inp) = link_powers(&cte, d, s.sigma2_te);
    sig / inp
}

/// Achievable user rate log(1 + SINR_u), nats.
pub fn user_rate(d: &DesignState, s: &Scenario) -> f64 {
    user_sinr(d, s).ln_1p()
}

/// Achievable eavesdropper rate log(1 + SINR_te), nats.
pub fn ed_rate(d: &DesignState, s: &Scenario) -> f64 {
    ed_sinr(d, s).ln_1p()
}

/// Secrecy rate R_u - R_te; may be negative.
pub fn secrecy_rate(d: &DesignState, s: &Scenario) -> f64 {
    user_rate(d, s) - ed_rate(d, s)
}
