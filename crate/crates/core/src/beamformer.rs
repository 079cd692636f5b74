//! Sub-problem 1: solve the semidefinite relaxation over
//! (w, R_w, R_Wn) for a fixed IRS configuration, then recover the
//! artificial-noise precoder from the matrix square root.
//!
//! The lift uses one Hermitian Schur block [[R_w, w], [w', 1]] (so
//! R_w >= w w' holds implicitly) plus a separate R_Wn block. Any slack
//! R_w - w w' left by the solver is folded into the AN second moment
//! before the square root: that keeps the achieved objective value and
//! makes the returned physical design satisfy the power and radar-SNR
//! constraints exactly as the lifted solution did.

use num_complex::Complex64;
use thiserror::Error;

use irsec_sdp::{
    realify_matrix, solve, verify, HermitianProblem, RealifyError, Recovery, SdpProblem, Sense,
    SolveStatus, SolverConfig, VarView,
};

use crate::scenario::{CMatrix, CVector};

/// Data of the fixed-phase beamforming sub-problem.
#[derive(Debug, Clone)]
pub struct Subproblem1Data {
    /// Linear objective vector from the transform constants.
    pub v: CVector,
    /// Hermitian quadratic coefficient from the transform constants.
    pub m: CMatrix,
    /// Radar cascade channel at the current IRS configuration.
    pub c_t: CMatrix,
    /// Total power budget, watts.
    pub p_r: f64,
    /// Radar SNR threshold, linear.
    pub gamma_th: f64,
    pub sigma2_r: f64,
    /// Optional information-power split: tr(R_w) <= omega P_R and
    /// tr(R_Wn) <= (1 - omega) P_R.
    pub omega: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sp1Layout {
    /// Schur block + AN block.
    Full,
    /// omega = 1: no AN block.
    NoAn,
    /// omega = 0: no information beam, AN block only.
    NoInfo,
}

/// Built sub-problem: complex staging plus the lowered real SDP.
#[derive(Debug)]
pub struct Sp1Program {
    pub sdp: SdpProblem,
    recovery: Recovery,
    layout: Sp1Layout,
    n_tx: usize,
}

#[derive(Debug, Error)]
pub enum Sp1Error {
    #[error("sub-problem 1 is infeasible (certificate residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("sub-problem 1 made no progress after {iterations} iterations")]
    SlowProgress { iterations: usize },
    #[error("sub-problem 1 build failed: {0}")]
    Build(#[from] RealifyError),
    #[error("sub-problem 1 data invalid: {0}")]
    BadData(String),
}

/// Solver diagnostics attached to each sub-problem solve.
#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Independent residual verification of the solve, worst violation.
    pub verify_max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct Sp1Solution {
    /// Information precoder.
    pub w: CVector,
    /// AN second moment with the R_w slack absorbed; feed to [`psd_sqrt`].
    pub r_wn: CMatrix,
    /// Raw lifted R_w block, before slack absorption.
    pub r_w: CMatrix,
    /// Achieved SDR objective (without the constant c).
    pub objective: f64,
    pub stats: SolveStats,
}

fn c64(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Largest radar SNR reachable within the power budget:
/// P_R lambda_max(C_T' C_T) / sigma_R^2.
pub fn max_achievable_snr(c_t: &CMatrix, p_r: f64, sigma2_r: f64) -> f64 {
    let g = c_t.adjoint() * c_t;
    let lam = realify_matrix(&g).symmetric_eigenvalues().max();
    p_r * lam.max(0.0) / sigma2_r
}

/// Assemble the SDR program for the given data.
pub fn build_subproblem1(data: &Subproblem1Data) -> Result<Sp1Program, Sp1Error> {
    let n = data.v.len();
    if data.m.nrows() != n || data.m.ncols() != n {
        return Err(Sp1Error::BadData("M dimension mismatch".into()));
    }
    if data.c_t.ncols() != n {
        return Err(Sp1Error::BadData("C_T column count mismatch".into()));
    }
    if !(data.p_r > 0.0) {
        return Err(Sp1Error::BadData("P_R must be > 0".into()));
    }
    if data.gamma_th < 0.0 {
        return Err(Sp1Error::BadData("gamma_th must be >= 0".into()));
    }
    if let Some(om) = data.omega {
        if !(0.0..=1.0).contains(&om) {
            return Err(Sp1Error::BadData("omega must lie in [0, 1]".into()));
        }
    }

    let layout = match data.omega {
        Some(om) if om >= 1.0 => Sp1Layout::NoAn,
        Some(om) if om <= 0.0 => Sp1Layout::NoInfo,
        _ => Sp1Layout::Full,
    };

    let g_snr = data.c_t.adjoint() * &data.c_t;

    // block 0: Schur lift [[R_w, w],[w', 1]]; block 1: R_Wn
    let schur_dim = n + 1;
    let mut herm = match layout {
        Sp1Layout::Full => HermitianProblem::new(vec![schur_dim, n]),
        Sp1Layout::NoAn => HermitianProblem::new(vec![schur_dim]),
        Sp1Layout::NoInfo => HermitianProblem::new(vec![n]),
    };

    // embed an N_T x N_T coefficient into the R_w corner of the Schur block
    let pad = |m: &CMatrix| -> CMatrix {
        let mut out = CMatrix::zeros(schur_dim, schur_dim);
        out.view_mut((0, 0), (n, n)).copy_from(m);
        out
    };
    let eye = CMatrix::identity(n, n);

    match layout {
        Sp1Layout::NoInfo => {
            // AN-only: maximize tr(M R_Wn) under power and SNR
            herm.set_objective(0, data.m.clone());
            herm.add_constraint(vec![(0, eye.clone())], Sense::Le, data.p_r);
            herm.add_constraint(
                vec![(0, g_snr.clone())],
                Sense::Ge,
                data.gamma_th * data.sigma2_r,
            );
            herm.name_view(
                "R_Wn",
                VarView {
                    block: 0,
                    rows: (0, n),
                    cols: (0, n),
                },
            );
        }
        _ => {
            // objective on the Schur block: M on R_w, conj(v)/2 on the border
            let mut obj0 = pad(&data.m);
            for i in 0..n {
                obj0[(i, n)] = data.v[i].conj() * c64(0.5);
                obj0[(n, i)] = data.v[i] * c64(0.5);
            }
            herm.set_objective(0, obj0);
            if layout == Sp1Layout::Full {
                herm.set_objective(1, data.m.clone());
            }

            // homogenization corner pinned to 1
            let mut corner = CMatrix::zeros(schur_dim, schur_dim);
            corner[(n, n)] = c64(1.0);
            herm.add_constraint(vec![(0, corner)], Sense::Eq, 1.0);

            // total power
            let mut power = vec![(0, pad(&eye))];
            if layout == Sp1Layout::Full {
                power.push((1, eye.clone()));
            }
            herm.add_constraint(power, Sense::Le, data.p_r);

            // radar SNR through the lifted second moment
            let mut snr = vec![(0, pad(&g_snr))];
            if layout == Sp1Layout::Full {
                snr.push((1, g_snr.clone()));
            }
            herm.add_constraint(snr, Sense::Ge, data.gamma_th * data.sigma2_r);

            // optional power split
            if layout == Sp1Layout::Full {
                if let Some(om) = data.omega {
                    herm.add_constraint(vec![(0, pad(&eye))], Sense::Le, om * data.p_r);
                    herm.add_constraint(
                        vec![(1, eye.clone())],
                        Sense::Le,
                        (1.0 - om) * data.p_r,
                    );
                }
            }

            herm.name_view(
                "R_w",
                VarView {
                    block: 0,
                    rows: (0, n),
                    cols: (0, n),
                },
            );
            herm.name_view(
                "w",
                VarView {
                    block: 0,
                    rows: (0, n),
                    cols: (n, n + 1),
                },
            );
            if layout == Sp1Layout::Full {
                herm.name_view(
                    "R_Wn",
                    VarView {
                        block: 1,
                        rows: (0, n),
                        cols: (0, n),
                    },
                );
            }
        }
    }

    let (sdp, recovery) = herm.lower()?;
    Ok(Sp1Program {
        sdp,
        recovery,
        layout,
        n_tx: n,
    })
}

/// Clip a Hermitian matrix onto the PSD cone by zeroing negative
/// eigenvalues.
fn psd_clip(m: &CMatrix) -> CMatrix {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k];
        if lam > 0.0 {
            let v = eig.eigenvectors.column(k);
            let vc = v.map(|z| z.conj());
            out += (v * vc.transpose()) * c64(lam);
        }
    }
    out
}

/// Solve the built program and recover (w, R_Wn) with the R_w slack
/// absorbed into the AN second moment.
pub fn solve_subproblem1(
    prog: &Sp1Program,
    cfg: &SolverConfig,
) -> Result<Sp1Solution, Sp1Error> {
    let sol = solve(&prog.sdp, cfg).expect("built program is valid");
    let report = verify(&sol, &prog.sdp, 1e-6);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible | SolveStatus::Unbounded => {
            return Err(Sp1Error::Infeasible {
                residual: sol.residuals.infeasibility,
            })
        }
        // the interior-point loop judges itself on scaled internal
        // residuals; a best-iterate that independently verifies at the
        // pipeline gate is still a usable solution
        SolveStatus::SlowProgress if report.clean(1e-6) => {}
        SolveStatus::SlowProgress => {
            return Err(Sp1Error::SlowProgress {
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

    let n = prog.n_tx;
    let blocks = prog.recovery.primal_blocks(&sol);
    let (w, r_w, r_wn_raw) = match prog.layout {
        Sp1Layout::NoInfo => (
            CVector::zeros(n),
            CMatrix::zeros(n, n),
            blocks[0].clone(),
        ),
        _ => {
            let s1 = &blocks[0];
            let corner = s1[(n, n)].re.max(1e-12);
            let w = CVector::from_iterator(n, (0..n).map(|i| s1[(i, n)] / corner));
            let r_w = s1.view((0, 0), (n, n)).into_owned();
            let r_wn = if prog.layout == Sp1Layout::Full {
                blocks[1].clone()
            } else {
                CMatrix::zeros(n, n)
            };
            (w, r_w, r_wn)
        }
    };

    // fold the Schur slack R_w - w w' into the AN second moment
    let slack = &r_w - &w * w.adjoint();
    let r_wn = &r_wn_raw + psd_clip(&slack);

    Ok(Sp1Solution {
        w,
        r_wn,
        r_w,
        objective: sol.objective,
        stats,
    })
}

#[derive(Debug, Error)]
#[error("matrix is not positive semidefinite (min eigenvalue {min_eig:.3e}, norm {norm:.3e})")]
pub struct NotPsd {
    pub min_eig: f64,
    pub norm: f64,
}

/// Principal Hermitian square root W of a PSD matrix R, W W' = R.
/// Eigenvalues below -1e-6 * ||R|| are rejected; small negative dust is
/// clipped to zero.
pub fn psd_sqrt(r: &CMatrix) -> Result<CMatrix, NotPsd> {
    let n = r.nrows();
    let norm = r.norm();
    let eig = nalgebra::SymmetricEigen::new(r.clone());
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-6 * norm.max(1e-300) {
        return Err(NotPsd { min_eig, norm });
    }
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(0.0);
        if lam > 0.0 {
            let v = eig.eigenvectors.column(k);
            let vc = v.map(|z| z.conj());
            out += (v * vc.transpose()) * c64(lam.sqrt());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractional::{sdr_objective, transform_constants, update_auxiliaries, TransformConstants};
    use crate::metrics::{radar_snr, secrecy_rate, DesignState};
    use crate::scenario::{
        build_scenario, complex_gaussian_matrix, complex_gaussian_vector, effective_ed_channel,
        effective_user_channel, radar_cascade_channel, PhaseVector, Scenario, ScenarioConfig,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cc(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
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

    fn data_for(d: &DesignState, s: &Scenario, gamma_th: f64, omega: Option<f64>) -> Subproblem1Data {
        let aux = update_auxiliaries(d, s);
        let cu = effective_user_channel(&d.phi, s);
        let cte = effective_ed_channel(&d.phi, s);
        let tc = transform_constants(&aux, &cu, &cte, s.sigma2_u, s.sigma2_te);
        Subproblem1Data {
            v: tc.v,
            m: tc.m,
            c_t: radar_cascade_channel(&d.phi, s),
            p_r: 1.0,
            gamma_th,
            sigma2_r: s.sigma2_r,
            omega,
        }
    }

    #[test]
    fn psd_sqrt_identity() {
        let r = CMatrix::identity(3, 3);
        let w = psd_sqrt(&r).unwrap();
        assert!((&w - &r).norm() < 1e-12);
    }

    #[test]
    fn psd_sqrt_diagonal() {
        let mut r = CMatrix::zeros(2, 2);
        r[(0, 0)] = cc(4.0, 0.0);
        r[(1, 1)] = cc(9.0, 0.0);
        let w = psd_sqrt(&r).unwrap();
        assert!((w[(0, 0)] - cc(2.0, 0.0)).norm() < 1e-12);
        assert!((w[(1, 1)] - cc(3.0, 0.0)).norm() < 1e-12);
        assert!(w[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs_random_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let a = complex_gaussian_matrix(&mut rng, 6, 6);
            let r = &a * a.adjoint();
            let w = psd_sqrt(&r).unwrap();
            let rel = (&w * w.adjoint() - &r).norm() / r.norm();
            assert!(rel < 1e-10, "reconstruction {rel}");
            // principal root is Hermitian PSD
            assert!(irsec_sdp::realify::hermitian_deviation(&w) < 1e-10);
        }
    }

    #[test]
    fn psd_sqrt_rejects_indefinite() {
        let mut r = CMatrix::identity(2, 2);
        r[(1, 1)] = cc(-0.5, 0.0);
        assert!(psd_sqrt(&r).is_err());
    }

    #[test]
    fn zero_threshold_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let data = data_for(&d, &s, 0.0, None);
        let prog = build_subproblem1(&data).unwrap();
        // two complex PSD matrix variables: Schur 17, AN 16 (realified x2)
        assert_eq!(prog.sdp.block_dims, vec![34, 32]);
        let sol = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();
        assert_eq!(sol.stats.status, SolveStatus::Optimal);
        assert!(sol.stats.verify_max_violation < 1e-6);
    }

    #[test]
    fn scalar_closed_form_both_branches() {
        // N_T = 1, M = -a (a > 0), no SNR pressure: maximize
        // |v| t - a t^2 - a r_wn over t^2 <= P. Optimum puts r_wn = 0 and
        // t* = min(|v|/(2a), sqrt(P)).
        for (vmag, a, p) in [(0.4, 1.0, 1.0), (4.0, 0.5, 1.0)] {
            let data = Subproblem1Data {
                v: CVector::from_element(1, cc(0.0, vmag)),
                m: CMatrix::from_element(1, 1, cc(-a, 0.0)),
                c_t: CMatrix::from_element(1, 1, cc(1.0, 0.0)),
                p_r: p,
                gamma_th: 0.0,
                sigma2_r: 1.0,
                omega: None,
            };
            let prog = build_subproblem1(&data).unwrap();
            let sol = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();
            let t_star = (vmag / (2.0 * a)).min(p.sqrt());
            let expect = vmag * t_star - a * t_star * t_star;
            assert!(
                (sol.objective - expect).abs() < 1e-6 * (1.0 + expect.abs()),
                "objective {} vs closed form {}",
                sol.objective,
                expect
            );
            assert!((sol.w.norm() - t_star).abs() < 1e-4);
            assert!(sol.r_wn.norm() < 1e-5);
            // phase aligns with conj(v)
            let lin = (data.v.dot(&sol.w)).re;
            assert!(lin > 0.0);
        }
    }

    #[test]
    fn infeasible_when_threshold_exceeds_max_snr() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let mut data = data_for(&d, &s, 0.0, None);
        let snr_max = max_achievable_snr(&data.c_t, data.p_r, data.sigma2_r);
        data.gamma_th = snr_max * 1.05;
        let prog = build_subproblem1(&data).unwrap();
        match solve_subproblem1(&prog, &SolverConfig::default()) {
            Err(Sp1Error::Infeasible { residual }) => {
                assert!(residual < 1e-6, "certificate residual {residual}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        // and just inside the cap it solves
        data.gamma_th = snr_max * 0.90;
        let prog = build_subproblem1(&data).unwrap();
        let sol = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();
        assert_eq!(sol.stats.status, SolveStatus::Optimal);
    }

    #[test]
    fn negative_definite_m_suppresses_an() {
        // M strictly negative definite, omega = 1: AN block dropped,
        // no incentive for R_w slack either.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 4;
        let a = complex_gaussian_matrix(&mut rng, n, n);
        let m = -(&a * a.adjoint()) - CMatrix::identity(n, n) * cc(0.1, 0.0);
        let v = complex_gaussian_vector(&mut rng, n) * cc(40.0, 0.0);
        let data = Subproblem1Data {
            v: v.clone(),
            m,
            c_t: CMatrix::identity(n, n),
            p_r: 1.0,
            gamma_th: 0.0,
            sigma2_r: 1.0,
            omega: Some(1.0),
        };
        let prog = build_subproblem1(&data).unwrap();
        assert_eq!(prog.sdp.block_dims, vec![2 * (n + 1)]);
        let sol = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();
        assert!(sol.r_wn.norm() < 1e-4, "r_wn norm {}", sol.r_wn.norm());
        // strong linear term pushes the power to the cap
        assert!(
            (sol.w.norm_squared() - 1.0).abs() < 1e-3,
            "power {}",
            sol.w.norm_squared()
        );
    }

    #[test]
    fn deterministic_repeat_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
        let d = random_design(&mut rng, &s, 1.0);
        let data = data_for(&d, &s, 1e-2, Some(0.7));
        let prog = build_subproblem1(&data).unwrap();
        let a = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();
        let b = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.w, b.w);
    }

    #[test]
    fn solution_is_physically_feasible_and_schur_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..5 {
            let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
            let d = random_design(&mut rng, &s, 1.0);
            let gamma_th = 10_f64.powf(-1.1);
            let data = data_for(&d, &s, gamma_th, if trial % 2 == 0 { None } else { Some(0.8) });
            let prog = build_subproblem1(&data).unwrap();
            let sol = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();

            // physical design from the recovered solution
            let w_n = psd_sqrt(&sol.r_wn).unwrap();
            let new_d = DesignState {
                w: sol.w.clone(),
                w_n,
                phi: d.phi.clone(),
            };
            let power = new_d.power();
            assert!(
                power <= data.p_r * (1.0 + 1e-6),
                "trial {trial}: power {power}"
            );
            let snr = radar_snr(&new_d, &s);
            assert!(
                snr >= gamma_th * (1.0 - 1e-6),
                "trial {trial}: snr {snr} vs {gamma_th}"
            );

            // Schur consistency of the raw lift
            let slack = &sol.r_w - &sol.w * sol.w.adjoint();
            let min_eig = realify_matrix(&slack).symmetric_eigenvalues().min();
            assert!(min_eig >= -1e-8, "trial {trial}: slack eig {min_eig}");

            // the achieved SDR objective matches the recovered design
            let aux = update_auxiliaries(&d, &s);
            let cu = effective_user_channel(&d.phi, &s);
            let cte = effective_ed_channel(&d.phi, &s);
            let tc = transform_constants(&aux, &cu, &cte, s.sigma2_u, s.sigma2_te);
            let shifted = TransformConstants {
                c: 0.0,
                v: tc.v.clone(),
                m: tc.m.clone(),
            };
            let sdr_val = sdr_objective(&shifted, &new_d.w, &(&new_d.w_n * new_d.w_n.adjoint()));
            assert!(
                (sdr_val - sol.objective).abs() <= 1e-5 * (1.0 + sol.objective.abs()),
                "trial {trial}: sdr at design {sdr_val} vs solver {}",
                sol.objective
            );
        }
    }

    #[test]
    fn inner_ascent_for_fixed_phase() {
        // aux update + sub-problem-1 solve does not decrease the true
        // secrecy rate when started from a feasible state
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..8 {
            let s = build_scenario(&mut rng, &ScenarioConfig::default()).unwrap();
            let d = random_design(&mut rng, &s, 1.0);
            let gamma_th = 10_f64.powf(-1.1);
            if radar_snr(&d, &s) < gamma_th {
                continue;
            }
            let before = secrecy_rate(&d, &s);
            let data = data_for(&d, &s, gamma_th, None);
            let prog = build_subproblem1(&data).unwrap();
            let sol = solve_subproblem1(&prog, &SolverConfig::default()).unwrap();
            let new_d = DesignState {
                w: sol.w.clone(),
                w_n: psd_sqrt(&sol.r_wn).unwrap(),
                phi: d.phi.clone(),
            };
            let after = secrecy_rate(&new_d, &s);
            assert!(
                after >= before - 1e-6,
                "trial {trial}: {before} -> {after}"
            );
        }
    }
}
