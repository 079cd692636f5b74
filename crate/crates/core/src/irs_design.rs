//! Sub-problem 2: the IRS phase design for fixed precoders.
//!
//! The transformed secrecy objective is a quadratic form in the phase
//! vector (coefficients Q = L1 + L1bar and a linear part), while the radar
//! SNR is quartic in the phases. The SNR is vectorized through a Kronecker
//! identity and minorized at the previous iterate, leaving two quadratic
//! forms L2, L3. The relaxed program is solved over the real lift
//! z = [Re phi; Im phi]: one symmetric PSD block of size 2N+1 whose corner
//! hosts z, with [R1]_nn = 1 as paired diagonal constraints. In that
//! parametrization R1 = phi phi' and R2 = phi phi^T are both linear in the
//! lifted block, R2 is symmetric by construction, and |[R2]_nn| <= 1 is
//! implied by the diagonal constraints, so no structural coupling rows are
//! needed.

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use irsec_sdp::{solve, verify, SdpProblem, Sense, SolveStatus, SolverConfig, VarView};

use crate::beamformer::SolveStats;
use crate::fractional::{transform_constants, AuxiliaryState};
use crate::metrics::{radar_snr, secrecy_rate, DesignState};
use crate::scenario::{CMatrix, CVector, PhaseVector, Scenario};

fn c64(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c64(0.5)
}

/// Quadratic objective in the phase vector: value(phi) =
/// const_term + Re(phi^T lin) + phi^T Q phi*.
#[derive(Debug, Clone)]
pub struct PhiObjective {
    /// Hermitian-symmetrized L1 + L1bar.
    pub q: CMatrix,
    /// eta - mu - mubar.
    pub lin: CVector,
    /// c1 - c2 - c2bar + c, everything independent of phi.
    pub const_term: f64,
}

impl PhiObjective {
    /// Evaluate at an arbitrary complex phase vector.
    pub fn eval(&self, phi: &CVector) -> f64 {
        let quad = quad_form_conj(&self.q, phi);
        self.const_term + phi.dot(&self.lin).re + quad
    }
}

/// phi^T Q phi* for Hermitian Q (real by construction).
fn quad_form_conj(q: &CMatrix, phi: &CVector) -> f64 {
    let qp = q * phi.map(|z| z.conj());
    phi.dot(&qp).re
}

/// Build the phase-domain objective for the current precoders and
/// auxiliaries. Matches the SDR objective of sub-problem 1 evaluated at
/// the same design, for every unit-modulus phi.
pub fn build_phi_objective(d: &DesignState, aux: &AuxiliaryState, s: &Scenario) -> PhiObjective {
    let dm = s.d_matrix();
    let em = s.e_matrix();
    let an_gram = &d.w_n * d.w_n.adjoint();
    let w_gram = &d.w * d.w.adjoint();

    let su = 2.0 * aux.alpha_u * (1.0 + aux.gamma_u).sqrt();
    let st = 2.0 * aux.alpha_te * (1.0 + aux.gamma_te).sqrt();
    let au2 = aux.alpha_u * aux.alpha_u;
    let at2 = aux.alpha_te * aux.alpha_te;

    // eta = 2(alpha_u sqrt(1+g_u) D - alpha_te sqrt(1+g_te) E) w
    let eta = (&dm * &d.w) * c64(su) - (&em * &d.w) * c64(st);
    let c1 = su * s.g.dot(&d.w).re;

    let g_conj = s.g.map(|z| z.conj());
    let build_pair = |k: &CMatrix| -> (CMatrix, CVector, f64) {
        // (L, mu, c2) for one second-moment matrix K
        let ek = &em * k;
        let dk = &dm * k;
        let l = &ek * em.adjoint() * c64(at2) - &dk * dm.adjoint() * c64(au2);
        let mu = (&dk * &g_conj) * c64(2.0 * au2);
        let c2 = au2 * (s.g.transpose() * k * &g_conj)[(0, 0)].re;
        (l, mu, c2)
    };
    let (l1, mu, c2) = build_pair(&an_gram);
    let (l1b, mub, c2b) = build_pair(&w_gram);

    // the phi-independent constant c of the transform (channels unused)
    let c = transform_constants(
        aux,
        &CVector::zeros(d.w.len()),
        &CVector::zeros(d.w.len()),
        s.sigma2_u,
        s.sigma2_te,
    )
    .c;

    PhiObjective {
        q: hermitian_part(&(l1 + l1b)),
        lin: eta - mu - mub,
        const_term: c1 - c2 - c2b + c,
    }
}

/// The vectorized quartic radar SNR: gamma_R = scale * u' Z u with
/// u = vec(Phi a a^T Phi).
#[derive(Debug, Clone)]
pub struct SnrVectorization {
    /// N^2 x N^2 Hermitian PSD Kronecker matrix.
    pub z: CMatrix,
    /// IRS steering vector toward the target.
    pub a: CVector,
    /// |beta|^2 / sigma_R^2.
    pub scale: f64,
}

impl SnrVectorization {
    /// u(phi) = (phi o a) kron (phi o a), column-major vec of the rank-one
    /// core.
    pub fn u_of(&self, phi: &CVector) -> CVector {
        let x = phi.component_mul(&self.a);
        x.kronecker(&x)
    }

    /// scale * u' Z u, the radar SNR of an arbitrary phase vector.
    pub fn snr(&self, phi: &CVector) -> f64 {
        let u = self.u_of(phi);
        let zu = &self.z * &u;
        self.scale * u.dotc(&zu).re
    }
}

/// Assemble Z = [H_dl (ww' + Wn Wn') H_dl']^T kron (H_ul' H_ul) and the
/// scaling in front of the quartic form.
pub fn vectorized_snr_matrix(d: &DesignState, s: &Scenario) -> SnrVectorization {
    let gram = d.gram();
    let b_mat = (&s.h_dl * gram * s.h_dl.adjoint()).transpose();
    let a_mat = s.h_ul.adjoint() * &s.h_ul;
    SnrVectorization {
        z: b_mat.kronecker(&a_mat),
        a: s.a_irs(),
        scale: s.beta.norm_sqr() / s.sigma2_r,
    }
}

/// Linear minorant of the quartic SNR at the expansion point phi_t:
/// gamma_tilde(phi) = Re(phi' L2 phi* + phi^T L3 phi) - offset, tangent at
/// phi_t and below gamma_R everywhere (Z is PSD).
#[derive(Debug, Clone)]
pub struct SnrSurrogate {
    pub l2: CMatrix,
    pub l3: CMatrix,
    /// scale * u_t' Z u_t.
    pub offset: f64,
    /// gamma_th + offset, the shifted threshold of the relaxed constraint.
    pub gamma_th_shifted: f64,
}

impl SnrSurrogate {
    /// phi' L2 phi* + phi^T L3 phi, the quadratic pair sum (real part).
    pub fn pair_sum(&self, phi: &CVector) -> f64 {
        let pc = phi.map(|z| z.conj());
        let first = (pc.transpose() * &self.l2 * &pc)[(0, 0)];
        let second = (phi.transpose() * &self.l3 * phi)[(0, 0)];
        debug_assert!(
            (first + second).im.abs() <= 1e-8 * (1.0 + (first + second).re.abs()),
            "surrogate pair sum has imaginary residue {}",
            (first + second).im
        );
        (first + second).re
    }

    /// Surrogate SNR value at phi.
    pub fn eval(&self, phi: &CVector) -> f64 {
        self.pair_sum(phi) - self.offset
    }
}

/// Build the MM surrogate of the radar SNR at the expansion point `phi_t`
/// for the current precoders. `gamma_th` is the radar SNR threshold that
/// the surrogate constraint must enforce.
pub fn build_snr_surrogate(
    phi_t: &PhaseVector,
    d: &DesignState,
    s: &Scenario,
    gamma_th: f64,
) -> SnrSurrogate {
    let a = s.a_irs();
    let scale = s.beta.norm_sqr() / s.sigma2_r;
    let gram = d.gram();
    // Kronecker factors, used through matrix products instead of the big Z
    let b_mat = &s.h_dl * gram * s.h_dl.adjoint(); // Z = B^T kron A
    let a_mat = s.h_ul.adjoint() * &s.h_ul;

    let x_t = phi_t.as_vector().component_mul(&a);
    let u_t_mat = &x_t * x_t.transpose(); // U_t, N x N symmetric

    // vec(V) = Z u_t  =>  V = A U_t B ; vec(Y) = Z^T u_t* => Y = A^T U_t* B^T
    let v_mat = &a_mat * &u_t_mat * &b_mat;
    let y_mat = a_mat.transpose() * u_t_mat.map(|z| z.conj()) * b_mat.transpose();

    let a_conj = a.map(|z| z.conj());
    let outer_cc = &a_conj * a_conj.transpose(); // a* a^H
    let outer = &a * a.transpose(); // a a^T
    let l2 = outer_cc.component_mul(&v_mat.transpose()) * c64(scale);
    let l3 = outer.component_mul(&y_mat.transpose()) * c64(scale);

    // u_t' Z u_t = <U_t, V>_F
    let offset = scale * u_t_mat.dotc(&v_mat).re;

    SnrSurrogate {
        l2,
        l3,
        offset,
        gamma_th_shifted: gamma_th + offset,
    }
}

/// Built relaxed phase program over the real lift.
#[derive(Debug)]
pub struct Sp2Program {
    pub sdp: SdpProblem,
    n: usize,
}

#[derive(Debug, Error)]
pub enum Sp2Error {
    #[error("sub-problem 2 is infeasible (certificate residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("sub-problem 2 made no progress after {iterations} iterations")]
    SlowProgress { iterations: usize },
    #[error("no unit-modulus candidate satisfies the radar SNR constraint")]
    RepairFailed,
}

/// Assemble the relaxed program: maximize <O, T> over T >= 0 with
/// [T]_corner = 1, paired diagonal rows, and the surrogate SNR row.
pub fn build_subproblem2(obj: &PhiObjective, sur: &SnrSurrogate) -> Sp2Program {
    let n = obj.lin.len();
    let dim = 2 * n + 1;
    let mut p = SdpProblem::new(vec![dim]);

    // objective: quadratic part [[ReQ, ImQ], [-ImQ, ReQ]], border lin/2
    let q_re = obj.q.map(|z| z.re);
    let q_im = obj.q.map(|z| z.im);
    let mut o = DMatrix::zeros(dim, dim);
    o.view_mut((0, 0), (n, n)).copy_from(&q_re);
    o.view_mut((n, n), (n, n)).copy_from(&q_re);
    o.view_mut((0, n), (n, n)).copy_from(&q_im);
    o.view_mut((n, 0), (n, n)).copy_from(&q_im.transpose());
    for i in 0..n {
        o[(i, 2 * n)] = 0.5 * obj.lin[i].re;
        o[(2 * n, i)] = o[(i, 2 * n)];
        o[(n + i, 2 * n)] = -0.5 * obj.lin[i].im;
        o[(2 * n, n + i)] = o[(n + i, 2 * n)];
    }
    p.set_objective(0, o);

    // paired diagonal rows: T_aa[n,n] + T_bb[n,n] = 1
    for i in 0..n {
        let mut m = DMatrix::zeros(dim, dim);
        m[(i, i)] = 1.0;
        m[(n + i, n + i)] = 1.0;
        p.add_constraint(vec![(0, m)], Sense::Eq, 1.0);
    }
    // homogenization corner
    let mut corner = DMatrix::zeros(dim, dim);
    corner[(2 * n, 2 * n)] = 1.0;
    p.add_constraint(vec![(0, corner)], Sense::Eq, 1.0);

    // surrogate SNR row: Re[tr(L2 R2*) + tr(L3 R2)] >= gamma_th_shifted
    let p23 = sur.l2.map(|z| z.re) + sur.l3.map(|z| z.re);
    let q23 = sur.l2.map(|z| z.im) - sur.l3.map(|z| z.im);
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    let p23s = sym(&p23);
    let q23s = sym(&q23);
    let mut h = DMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (n, n)).copy_from(&p23s);
    h.view_mut((n, n), (n, n)).copy_from(&(-&p23s));
    h.view_mut((0, n), (n, n)).copy_from(&q23s);
    h.view_mut((n, 0), (n, n)).copy_from(&q23s);
    p.add_constraint(vec![(0, h)], Sense::Ge, sur.gamma_th_shifted);

    p.name_view(
        "T",
        VarView {
            block: 0,
            rows: (0, dim),
            cols: (0, dim),
        },
    );
    p.name_view(
        "phi_re",
        VarView {
            block: 0,
            rows: (0, n),
            cols: (2 * n, dim),
        },
    );
    p.name_view(
        "phi_im",
        VarView {
            block: 0,
            rows: (n, 2 * n),
            cols: (2 * n, dim),
        },
    );

    Sp2Program { sdp: p, n }
}

#[derive(Debug, Clone)]
pub struct Sp2Solution {
    /// Relaxed (not yet unit-modulus) phase vector from the lift border.
    pub phi_relaxed: CVector,
    /// Recovered R1 = phi phi' part of the lift, Hermitian N x N.
    pub r1: CMatrix,
    pub objective: f64,
    pub stats: SolveStats,
}

pub fn solve_subproblem2(prog: &Sp2Program, cfg: &SolverConfig) -> Result<Sp2Solution, Sp2Error> {
    let sol = solve(&prog.sdp, cfg).expect("built program is valid");
    let report = verify(&sol, &prog.sdp, 1e-6);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible | SolveStatus::Unbounded => {
            return Err(Sp2Error::Infeasible {
                residual: sol.residuals.infeasibility,
            })
        }
        // accept a best-iterate that independently verifies at the
        // pipeline gate even if the internal tolerance was not met
        SolveStatus::SlowProgress if report.clean(1e-6) => {}
        SolveStatus::SlowProgress => {
            return Err(Sp2Error::SlowProgress {
                iterations: sol.iterations,
            })
        }
    }
    let stats = SolveStats {
        status: sol.status,
        iterations: sol.iterations,
        primal_residual: sol.residuals.primal,
        dual_residual: sol.residuals.dual,
        gap: sol.residuals.gap,
        verify_max_violation: report.max_violation,
    };
    let n = prog.n;
    let t = &sol.blocks[0];
    let corner = t[(2 * n, 2 * n)].max(1e-12);
    let phi_relaxed = CVector::from_iterator(
        n,
        (0..n).map(|i| Complex64::new(t[(i, 2 * n)], t[(n + i, 2 * n)]) / corner),
    );
    // R1 = T_aa + T_bb + i(T_ab' - T_ab)
    let mut r1 = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = t[(i, j)] + t[(n + i, n + j)];
            let im = t[(j, n + i)] - t[(i, n + j)];
            r1[(i, j)] = Complex64::new(re, im);
        }
    }
    Ok(Sp2Solution {
        phi_relaxed,
        r1,
        objective: sol.objective,
        stats,
    })
}

/// Outcome of the projection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhiOutcome {
    /// Projection was feasible and improved (or matched) the objective.
    Accepted,
    /// Projection violated the SNR constraint; an arc-interpolated repair
    /// candidate was accepted instead.
    Repaired,
    /// No candidate beat the previous phases; phi_t retained.
    Retained,
}

fn wrap_angle(x: f64) -> f64 {
    let mut a = x % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Project the relaxed solution onto unit-modulus candidates and guard the
/// result. Candidates are the entrywise projection of the relaxed phi, the
/// projected dominant eigenvector of the recovered R1 (global phase
/// aligned with the linear objective term), and arc interpolations of each
/// toward `phi_t`; a candidate whose projection breaks the radar SNR
/// constraint is walked back toward `phi_t` by bisection on the arc
/// (20 steps). The best feasible candidate wins by true secrecy rate; if
/// nothing beats `phi_t`, the previous phases are retained.
///
/// `d` carries the *new* precoders and the previous phases `d.phi = phi_t`.
pub fn extract_phases(
    sp2: &Sp2Solution,
    obj: &PhiObjective,
    d: &DesignState,
    s: &Scenario,
    gamma_th: f64,
) -> Result<(PhaseVector, PhiOutcome), Sp2Error> {
    let snr_tol = gamma_th * (1.0 - 1e-6);
    let feasible = |phi: &PhaseVector| -> bool {
        let cand = DesignState {
            w: d.w.clone(),
            w_n: d.w_n.clone(),
            phi: phi.clone(),
        };
        radar_snr(&cand, s) >= snr_tol
    };
    let objective = |phi: &PhaseVector| -> f64 {
        let cand = DesignState {
            w: d.w.clone(),
            w_n: d.w_n.clone(),
            phi: phi.clone(),
        };
        secrecy_rate(&cand, s)
    };

    let phi_t = d.phi.clone();
    if !feasible(&phi_t) {
        return Err(Sp2Error::RepairFailed);
    }
    let base_obj = objective(&phi_t);
    let n = phi_t.len();
    let theta_t: Vec<f64> = phi_t.as_vector().iter().map(|z| z.arg()).collect();

    let bases = relaxation_bases(sp2, obj, n);

    let mut best: Option<(PhaseVector, f64, PhiOutcome)> = None;
    let consider = |cand: PhaseVector, outcome: PhiOutcome,
                        best: &mut Option<(PhaseVector, f64, PhiOutcome)>| {
        if feasible(&cand) {
            let val = objective(&cand);
            if best.as_ref().map_or(true, |(_, b, _)| val > *b) {
                *best = Some((cand, val, outcome));
            }
            true
        } else {
            false
        }
    };

    for base in &bases {
        let delta: Vec<f64> = (0..n)
            .map(|i| wrap_angle(base.as_vector()[i].arg() - theta_t[i]))
            .collect();
        let phi_at = |t: f64| -> PhaseVector {
            let angles: Vec<f64> = (0..n).map(|i| theta_t[i] + t * delta[i]).collect();
            PhaseVector::from_angles(&angles)
        };
        let full_ok = consider(base.clone(), PhiOutcome::Accepted, &mut best);
        // guarded line search along the arc toward the candidate
        for t in [0.25, 0.5, 0.75] {
            consider(phi_at(t), PhiOutcome::Accepted, &mut best);
        }
        if !full_ok {
            // SNR repair: bisect for the feasible prefix of the arc
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            for _ in 0..20 {
                let mid = 0.5 * (lo + hi);
                if consider(phi_at(mid), PhiOutcome::Repaired, &mut best) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
    }

    let (phi_best, val_best, outcome) = match best {
        Some((phi, val, outcome)) if val >= base_obj - 1e-6 => (phi, val, outcome),
        _ => (phi_t.clone(), base_obj, PhiOutcome::Retained),
    };
    let (phi_best, val_best) = refine_phases(phi_best, val_best, &feasible, &objective, n);

    if val_best > base_obj + 1e-12 {
        let outcome = if outcome == PhiOutcome::Retained {
            PhiOutcome::Accepted
        } else {
            outcome
        };
        Ok((phi_best, outcome))
    } else if outcome == PhiOutcome::Retained {
        Ok((phi_t, PhiOutcome::Retained))
    } else {
        Ok((phi_best, outcome))
    }
}

/// Unit-modulus base candidates read off the relaxed solution: the
/// projected border vector and the projected dominant eigenvector of R1,
/// its free global phase aligned against the linear term.
fn relaxation_bases(sp2: &Sp2Solution, obj: &PhiObjective, n: usize) -> Vec<PhaseVector> {
    let mut bases: Vec<PhaseVector> = vec![PhaseVector::project(&sp2.phi_relaxed)];
    if sp2.r1.nrows() == n && n > 0 {
        let eig = nalgebra::SymmetricEigen::new(sp2.r1.clone());
        let top = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let psi: CVector = eig.eigenvectors.column(top).into_owned();
        let lin_phase = psi.dot(&obj.lin);
        let rot = if lin_phase.norm() > 0.0 {
            Complex64::from_polar(1.0, -lin_phase.arg())
        } else {
            Complex64::new(1.0, 0.0)
        };
        bases.push(PhaseVector::project(&(psi * rot)));
    }
    bases
}

/// Cyclic per-element phase sweep, keeping only feasible improvements.
/// Grid resolution adapts to the element count so a pass costs roughly
/// the same at any size.
fn refine_phases(
    mut phi: PhaseVector,
    mut val: f64,
    feasible: &dyn Fn(&PhaseVector) -> bool,
    objective: &dyn Fn(&PhaseVector) -> f64,
    n: usize,
) -> (PhaseVector, f64) {
    if n == 0 {
        return (phi, val);
    }
    let grid = (720 / n).clamp(16, 360);
    for _pass in 0..2 {
        let mut improved = false;
        for idx in 0..n {
            let mut angles: Vec<f64> = phi.as_vector().iter().map(|z| z.arg()).collect();
            let current = angles[idx];
            let mut local_best = (val, current);
            for k in 0..grid {
                let cand_angle = 2.0 * std::f64::consts::PI * k as f64 / grid as f64;
                angles[idx] = cand_angle;
                let cand = PhaseVector::from_angles(&angles);
                if feasible(&cand) {
                    let v = objective(&cand);
                    if v > local_best.0 + 1e-12 {
                        local_best = (v, cand_angle);
                    }
                }
            }
            if local_best.0 > val {
                angles[idx] = local_best.1;
                phi = PhaseVector::from_angles(&angles);
                val = local_best.0;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (phi, val)
}

/// Distinct unit-modulus candidates for a one-step-lookahead acceptance:
/// the guarded extraction result plus the raw relaxation bases that pass
/// the SNR check. The previous phases are the caller's baseline and are
/// not included.
pub fn phase_candidates(
    sp2: &Sp2Solution,
    obj: &PhiObjective,
    d: &DesignState,
    s: &Scenario,
    gamma_th: f64,
) -> Vec<PhaseVector> {
    let mut out: Vec<PhaseVector> = Vec::new();
    if let Ok((phi, outcome)) = extract_phases(sp2, obj, d, s, gamma_th) {
        if outcome != PhiOutcome::Retained {
            out.push(phi);
        }
    }
    let snr_tol = gamma_th * (1.0 - 1e-6);
    for base in relaxation_bases(sp2, obj, d.phi.len()) {
        let cand = DesignState {
            w: d.w.clone(),
            w_n: d.w_n.clone(),
            phi: base.clone(),
        };
        if radar_snr(&cand, s) >= snr_tol
            && !out
                .iter()
                .any(|p| (p.as_vector() - base.as_vector()).norm() < 1e-9)
        {
            out.push(base);
        }
    }
    out.truncate(3);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::{sdr_objective, update_auxiliaries};
    use crate::scenario::{
        build_scenario, complex_gaussian_matrix, complex_gaussian_vector,
        effective_ed_channel, effective_user_channel, ScenarioConfig,
    };
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cc(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn small_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.geometry.n_tx = 4;
        cfg.geometry.n_rx = 4;
        cfg.geometry.irs_rows = 2;
        cfg.geometry.irs_cols = 2;
        cfg
    }

    fn random_design(rng: &mut ChaCha8Rng, s: &Scenario, power: f64) -> DesignState {
        let n_tx = s.geometry.n_tx;
        let mut d = DesignState {
            w: complex_gaussian_vector(rng, n_tx),
            w_n: complex_gaussian_matrix(rng, n_tx, n_tx),
            phi: PhaseVector::random(rng, s.n_irs()),
        };
        let split: f64 = rng.gen_range(0.2..0.8);
        d.w *= cc((split * power / d.w.norm_squared()).sqrt(), 0.0);
        d.w_n *= cc(((1.0 - split) * power / d.w_n.norm_squared()).sqrt(), 0.0);
        d
    }

    #[test]
    fn phi_objective_matches_sdr_objective_end_to_end() {
        // const + Re(phi' lin) + phi' Q phi* == sdr objective at the same
        // design, for random unit-modulus phases
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
            let d = random_design(&mut rng, &s, 1.0);
            let aux = update_auxiliaries(&d, &s);
            let obj = build_phi_objective(&d, &aux, &s);
            for _ in 0..5 {
                let phi = PhaseVector::random(&mut rng, s.n_irs());
                let d_phi = DesignState {
                    w: d.w.clone(),
                    w_n: d.w_n.clone(),
                    phi: phi.clone(),
                };
                let cu = effective_user_channel(&phi, &s);
                let cte = effective_ed_channel(&phi, &s);
                let tc = transform_constants(&aux, &cu, &cte, s.sigma2_u, s.sigma2_te);
                let want = sdr_objective(&tc, &d_phi.w, &(&d_phi.w_n * d_phi.w_n.adjoint()));
                let got = obj.eval(phi.as_vector());
                assert!(
                    (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
                    "{got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn phi_objective_zero_an_kills_l1() {
        // with W_n = 0, Q reduces to the w-only pair L1bar
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
        let mut d = random_design(&mut rng, &s, 1.0);
        d.w_n = CMatrix::zeros(16, 16);
        let aux = update_auxiliaries(&d, &s);
        let obj = build_phi_objective(&d, &aux, &s);
        let dm = s.d_matrix();
        let em = s.e_matrix();
        let wg = &d.w * d.w.adjoint();
        let at2 = aux.alpha_te * aux.alpha_te;
        let au2 = aux.alpha_u * aux.alpha_u;
        let l1b = &em * &wg * em.adjoint() * cc(at2, 0.0) - &dm * &wg * dm.adjoint() * cc(au2, 0.0);
        assert!((&obj.q - hermitian_part(&l1b)).norm() <= 1e-12 * (1.0 + l1b.norm()));
    }

    #[test]
    fn phi_objective_zero_aux_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let obj = build_phi_objective(&d, &AuxiliaryState::default(), &s);
        assert_eq!(obj.q.norm(), 0.0);
        assert_eq!(obj.lin.norm(), 0.0);
        assert_eq!(obj.const_term, 0.0);
    }

    #[test]
    fn snr_vectorization_zero_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = build_scenario(&mut rng, &small_config()).unwrap();
        let d = DesignState::zero(4, 4);
        let v = vectorized_snr_matrix(&d, &s);
        assert_eq!(v.z.norm(), 0.0);
    }

    #[test]
    fn kronecker_identity_small() {
        // tr(U' A U B^T) = u' (B kron A) u on random (unstructured) U
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 2;
        let ga = complex_gaussian_matrix(&mut rng, n, n);
        let a = &ga * ga.adjoint();
        let gb = complex_gaussian_matrix(&mut rng, n, n);
        let b = &gb * gb.adjoint();
        let z = b.kronecker(&a);
        for _ in 0..5 {
            let u_mat = complex_gaussian_matrix(&mut rng, n, n);
            let u = CVector::from_column_slice(u_mat.as_slice());
            let lhs = (u_mat.adjoint() * &a * &u_mat * b.transpose()).trace();
            let zu = &z * &u;
            let rhs = u.dotc(&zu);
            assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn vectorized_snr_matches_radar_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let s = build_scenario(&mut rng, &small_config()).unwrap();
            let d = random_design(&mut rng, &s, 1.0);
            let v = vectorized_snr_matrix(&d, &s);
            let direct = radar_snr(&d, &s);
            let via_z = v.snr(d.phi.as_vector());
            assert!(
                (direct - via_z).abs() <= 1e-9 * direct.max(1e-300),
                "{direct} vs {via_z}"
            );
        }
    }

    #[test]
    fn z_matrix_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = build_scenario(&mut rng, &small_config()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let v = vectorized_snr_matrix(&d, &s);
        assert!(irsec_sdp::realify::hermitian_deviation(&v.z) <= 1e-10 * v.z.norm());
        let min_eig = irsec_sdp::realify_matrix(&v.z).symmetric_eigenvalues().min();
        assert!(min_eig >= -1e-10 * v.z.norm(), "min eig {min_eig}");
    }

    #[test]
    fn surrogate_fast_path_matches_z_products() {
        // V and Y computed by matrix products agree with explicit Z u_t
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = build_scenario(&mut rng, &small_config()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let vz = vectorized_snr_matrix(&d, &s);
        let phi_t = d.phi.clone();
        let u_t = vz.u_of(phi_t.as_vector());
        let zu = &vz.z * &u_t;
        // reconstruct V from the fast path pieces inside build_snr_surrogate
        let gram = d.gram();
        let b_mat = &s.h_dl * gram * s.h_dl.adjoint();
        let a_mat = s.h_ul.adjoint() * &s.h_ul;
        let x_t = phi_t.as_vector().component_mul(&vz.a);
        let u_t_mat = &x_t * x_t.transpose();
        let v_mat = &a_mat * &u_t_mat * &b_mat;
        let v_vec = CVector::from_column_slice(v_mat.as_slice());
        assert!((&v_vec - &zu).norm() <= 1e-10 * (1.0 + zu.norm()));
    }

    #[test]
    fn surrogate_tangent_at_expansion_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let s = build_scenario(&mut rng, &small_config()).unwrap();
            let d = random_design(&mut rng, &s, 1.0);
            let sur = build_snr_surrogate(&d.phi, &d, &s, 0.1);
            let snr = radar_snr(&d, &s);
            let tilde = sur.eval(d.phi.as_vector());
            assert!(
                (tilde - snr).abs() <= 1e-8 * (1.0 + snr),
                "tangency {tilde} vs {snr}"
            );
        }
    }

    #[test]
    fn surrogate_zero_design_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = build_scenario(&mut rng, &small_config()).unwrap();
        let mut d = random_design(&mut rng, &s, 1.0);
        d.w = CVector::zeros(4);
        d.w_n = CMatrix::zeros(4, 4);
        let sur = build_snr_surrogate(&d.phi, &d, &s, 0.0);
        let phi = PhaseVector::random(&mut rng, s.n_irs());
        assert!(sur.eval(phi.as_vector()).abs() < 1e-12);
        assert_eq!(sur.gamma_th_shifted, 0.0);
    }

    #[test]
    fn surrogate_minorizes_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let s = build_scenario(&mut rng, &small_config()).unwrap();
            let d = random_design(&mut rng, &s, 1.0);
            let sur = build_snr_surrogate(&d.phi, &d, &s, 0.1);
            for _ in 0..40 {
                let phi = PhaseVector::random(&mut rng, s.n_irs());
                let cand = DesignState {
                    w: d.w.clone(),
                    w_n: d.w_n.clone(),
                    phi: phi.clone(),
                };
                let snr = radar_snr(&cand, &s);
                let tilde = sur.eval(phi.as_vector());
                assert!(
                    tilde <= snr + 1e-8 * (1.0 + snr),
                    "surrogate {tilde} above snr {snr}"
                );
            }
        }
    }

    #[test]
    fn lift_reproduces_objective_and_snr_rows_on_rank_one_points() {
        // <O, T(phi)> equals the quadratic objective and <H, T(phi)> equals
        // the surrogate pair sum, for T built from a true unit-modulus phi
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = build_scenario(&mut rng, &small_config()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let aux = update_auxiliaries(&d, &s);
        let obj = build_phi_objective(&d, &aux, &s);
        let sur = build_snr_surrogate(&d.phi, &d, &s, 0.1);
        let prog = build_subproblem2(&obj, &sur);
        let n = s.n_irs();
        assert_eq!(prog.sdp.block_dims, vec![2 * n + 1]);

        for _ in 0..8 {
            let phi = PhaseVector::random(&mut rng, n);
            let mut z = DVector::zeros(2 * n + 1);
            for i in 0..n {
                z[i] = phi.as_vector()[i].re;
                z[n + i] = phi.as_vector()[i].im;
            }
            z[2 * n] = 1.0;
            let t = &z * z.transpose();

            let o = prog.sdp.objective[0].as_ref().unwrap();
            let got_obj = o.dot(&t);
            let want_obj = obj.eval(phi.as_vector()) - obj.const_term;
            assert!(
                (got_obj - want_obj).abs() <= 1e-9 * (1.0 + want_obj.abs()),
                "objective {got_obj} vs {want_obj}"
            );

            let snr_row = prog.sdp.constraints.last().unwrap();
            let h = snr_row.mats[0].as_ref().unwrap();
            let got_snr = h.dot(&t);
            let want_snr = sur.pair_sum(phi.as_vector());
            assert!(
                (got_snr - want_snr).abs() <= 1e-9 * (1.0 + want_snr.abs()),
                "snr row {got_snr} vs {want_snr}"
            );
        }
    }

    #[test]
    fn scalar_phase_recovers_closed_form() {
        // N = 1, Q real scalar: optimum phi = exp(-j arg(lin))
        let obj = PhiObjective {
            q: CMatrix::from_element(1, 1, cc(0.3, 0.0)),
            lin: CVector::from_element(1, cc(0.8, -0.6)),
            const_term: 0.0,
        };
        let sur = SnrSurrogate {
            l2: CMatrix::zeros(1, 1),
            l3: CMatrix::zeros(1, 1),
            offset: 0.0,
            gamma_th_shifted: 0.0,
        };
        let prog = build_subproblem2(&obj, &sur);
        let sol = solve_subproblem2(&prog, &SolverConfig::default()).unwrap();
        let phi = PhaseVector::project(&sol.phi_relaxed);
        let expect = Complex64::cis(-obj.lin[0].arg());
        assert!(
            (phi.as_vector()[0] - expect).norm() < 1e-4,
            "phi {} vs {}",
            phi.as_vector()[0],
            expect
        );
        // objective value: Q + |lin|
        let want = 0.3 + obj.lin[0].norm();
        assert!((sol.objective - want).abs() < 1e-5);
    }

    #[test]
    fn vacuous_snr_row_reduces_to_objective_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let s = build_scenario(&mut rng, &small_config()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let aux = update_auxiliaries(&d, &s);
        let obj = build_phi_objective(&d, &aux, &s);
        let sur = SnrSurrogate {
            l2: CMatrix::zeros(4, 4),
            l3: CMatrix::zeros(4, 4),
            offset: 0.0,
            gamma_th_shifted: 0.0,
        };
        let prog = build_subproblem2(&obj, &sur);
        let sol = solve_subproblem2(&prog, &SolverConfig::default()).unwrap();
        assert_eq!(sol.stats.status, SolveStatus::Optimal);
        // relaxed value upper-bounds the best sampled unit-modulus value
        let mut best = f64::NEG_INFINITY;
        for _ in 0..200 {
            let phi = PhaseVector::random(&mut rng, s.n_irs());
            best = best.max(obj.eval(phi.as_vector()) - obj.const_term);
        }
        assert!(sol.objective >= best - 1e-6 * (1.0 + best.abs()));
    }

    #[test]
    fn extract_phases_identity_and_projection() {
        let relaxed = CVector::from_vec(vec![cc(2.0, 0.0), cc(0.0, 0.5)]);
        let p = PhaseVector::project(&relaxed);
        assert!((p.as_vector()[0] - cc(1.0, 0.0)).norm() < 1e-15);
        assert!((p.as_vector()[1] - cc(0.0, 1.0)).norm() < 1e-15);
        let unit = CVector::from_vec(vec![cc(0.6, 0.8), cc(-1.0, 0.0)]);
        let q = PhaseVector::project(&unit);
        assert!((q.as_vector()[0] - unit[0]).norm() < 1e-15);
        assert!((q.as_vector()[1] - unit[1]).norm() < 1e-15);
    }

    #[test]
    fn guarded_extraction_never_worsens() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let gamma_th = 1e-3;
        for _ in 0..6 {
            let s = build_scenario(&mut rng, &small_config()).unwrap();
            let d = random_design(&mut rng, &s, 1.0);
            if radar_snr(&d, &s) < gamma_th {
                continue;
            }
            let aux = update_auxiliaries(&d, &s);
            let obj = build_phi_objective(&d, &aux, &s);
            let sur = build_snr_surrogate(&d.phi, &d, &s, gamma_th);
            let prog = build_subproblem2(&obj, &sur);
            let sol = solve_subproblem2(&prog, &SolverConfig::default()).unwrap();
            let before = secrecy_rate(&d, &s);
            let (phi, outcome) = extract_phases(&sol, &obj, &d, &s, gamma_th).unwrap();
            let after_d = DesignState {
                w: d.w.clone(),
                w_n: d.w_n.clone(),
                phi,
            };
            let after = secrecy_rate(&after_d, &s);
            assert!(
                after >= before - 1e-6,
                "outcome {outcome:?}: {before} -> {after}"
            );
            assert!(radar_snr(&after_d, &s) >= gamma_th * (1.0 - 1e-6));
        }
    }
}
