//! The alternating loop: auxiliary update, beamforming sub-problem, IRS
//! phase sub-problem, termination; produces a per-iteration trace.
//!
//! Both sub-problem results pass through acceptance guards on the true
//! secrecy rate (the phase step additionally through the SNR repair in
//! [`crate::irs_design::extract_phases`]), so an accepted trace is
//! monotone up to solver noise and every accepted iterate satisfies the
//! power and radar-SNR constraints.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use irsec_sdp::SolverConfig;

use crate::beamformer::{
    build_subproblem1, psd_sqrt, solve_subproblem1, SolveStats, Sp1Error, Subproblem1Data,
};
use crate::fractional::{transform_constants, update_auxiliaries, AuxiliaryState};
use crate::irs_design::{
    build_phi_objective, build_snr_surrogate, build_subproblem2, phase_candidates,
    solve_subproblem2, Sp2Error,
};
use crate::metrics::{ed_rate, radar_snr, secrecy_rate, user_rate, DesignState};
use crate::scenario::{
    effective_ed_channel, effective_user_channel, radar_cascade_channel, CMatrix, CVector,
    PhaseVector, Scenario,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Relative-change termination tolerance (linear).
    pub epsilon: f64,
    /// Outer iteration cap.
    pub t_max: usize,
    /// Optional information-power split in [0, 1].
    pub omega: Option<f64>,
    /// Seed for the initial phases (and any re-draws).
    pub seed: u64,
    pub solver_tol: f64,
    /// Total power budget, watts.
    pub p_r: f64,
    /// Radar SNR threshold, linear.
    pub gamma_th: f64,
}

impl Default for RunConfig {
    /// Table-style defaults: epsilon -20 dB, 20 iterations, 30 dBm budget,
    /// -11 dB SNR floor.
    fn default() -> Self {
        RunConfig {
            epsilon: 1e-2,
            t_max: 20,
            omega: None,
            seed: 0,
            solver_tol: 1e-7,
            p_r: 1.0,
            gamma_th: 10f64.powf(-1.1),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.epsilon > 0.0) {
            return Err(RunError::BadConfig("epsilon must be > 0".into()));
        }
        if self.t_max < 1 {
            return Err(RunError::BadConfig("t_max must be >= 1".into()));
        }
        if let Some(om) = self.omega {
            if !(0.0..=1.0).contains(&om) {
                return Err(RunError::BadConfig("omega must lie in [0, 1]".into()));
            }
        }
        if !(self.p_r > 0.0) {
            return Err(RunError::BadConfig("p_r must be > 0".into()));
        }
        if self.gamma_th < 0.0 {
            return Err(RunError::BadConfig("gamma_th must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateMetrics {
    pub secrecy_rate: f64,
    pub user_rate: f64,
    pub ed_rate: f64,
    pub radar_snr: f64,
    pub power_used: f64,
}

/// Exact metrics of a design state, delegated to the metrics module.
pub fn evaluate_state(d: &DesignState, s: &Scenario) -> StateMetrics {
    StateMetrics {
        secrecy_rate: secrecy_rate(d, s),
        user_rate: user_rate(d, s),
        ed_rate: ed_rate(d, s),
        radar_snr: radar_snr(d, s),
        power_used: d.power(),
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub t: usize,
    pub secrecy_rate: f64,
    pub user_rate: f64,
    pub ed_rate: f64,
    pub radar_snr: f64,
    pub power_used: f64,
    pub aux: AuxiliaryState,
    pub sp1_stats: SolveStats,
    pub sp2_stats: SolveStats,
    /// Whether the beamforming step was kept (true secrecy did not drop).
    pub beam_accepted: bool,
    /// Whether the phase step was kept (projection or repair succeeded).
    pub phi_accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterCap,
    /// The phase step was retained twice in a row; no further progress
    /// possible in the IRS configuration.
    Stalled,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::IterCap => "iter_cap",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Vec<IterationRecord>,
    pub final_state: DesignState,
    pub termination: Termination,
}

impl RunResult {
    pub fn final_secrecy(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.secrecy_rate)
    }

    /// CSV with columns t, secrecy_rate, user_rate, ed_rate, radar_snr,
    /// power_used, term_reason.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from(
            "t,secrecy_rate,user_rate,ed_rate,radar_snr,power_used,term_reason\n",
        );
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.t,
                r.secrecy_rate,
                r.user_rate,
                r.ed_rate,
                r.radar_snr,
                r.power_used,
                self.termination.as_str()
            ));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    BadConfig(String),
    #[error("no feasible initialization found after {attempts} phase draws")]
    InitializationInfeasible { attempts: usize },
    #[error("beamforming sub-problem failed at iteration {t}: {source}")]
    Sp1 {
        t: usize,
        #[source]
        source: Sp1Error,
    },
    #[error("phase sub-problem failed at iteration {t}: {source}")]
    Sp2 {
        t: usize,
        #[source]
        source: Sp2Error,
    },
    #[error("AN second moment was not PSD at iteration {t}: {source}")]
    AnFactor {
        t: usize,
        #[source]
        source: crate::beamformer::NotPsd,
    },
}

/// Matched-filter initialization: random phases, w aligned with the user
/// channel at omega_share of the budget, isotropic AN filling the rest.
pub fn initial_design<R: Rng>(
    rng: &mut R,
    s: &Scenario,
    omega_share: f64,
    p_r: f64,
) -> DesignState {
    let n_tx = s.geometry.n_tx;
    let phi = PhaseVector::random(rng, s.n_irs());
    let cu = effective_user_channel(&phi, s);
    let cu_norm = cu.norm();
    let w = if cu_norm > 0.0 {
        cu.map(|z| z.conj()) * Complex64::new((omega_share * p_r).sqrt() / cu_norm, 0.0)
    } else {
        CVector::zeros(n_tx)
    };
    let an_power = (1.0 - omega_share) * p_r;
    let w_n = CMatrix::identity(n_tx, n_tx) * Complex64::new((an_power / n_tx as f64).sqrt(), 0.0);
    DesignState { w, w_n, phi }
}

/// Rotate the beamformer's global phase so c_u^T w is real nonnegative.
/// All metrics are invariant; this just fixes the representative.
fn align_beam_phase(d: &mut DesignState, s: &Scenario) {
    let cu = effective_user_channel(&d.phi, s);
    let z = cu.dot(&d.w);
    if z.norm() > 0.0 {
        d.w *= Complex64::from_polar(1.0, -z.arg());
    }
}

/// One full run of the alternating algorithm on a fixed scenario.
pub fn run(s: &Scenario, cfg: &RunConfig) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let solver_cfg = SolverConfig {
        tol: cfg.solver_tol,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega_share = cfg.omega.unwrap_or(0.5);

    // initial phases re-drawn until the radar constraint holds
    const MAX_DRAWS: usize = 50;
    let mut d = None;
    for _ in 0..MAX_DRAWS {
        let cand = initial_design(&mut rng, s, omega_share, cfg.p_r);
        if radar_snr(&cand, s) >= cfg.gamma_th {
            d = Some(cand);
            break;
        }
    }
    let mut d = d.ok_or(RunError::InitializationInfeasible {
        attempts: MAX_DRAWS,
    })?;

    let mut obj_prev = secrecy_rate(&d, s);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut retained_streak = 0usize;
    let mut termination = Termination::IterCap;

    for t in 1..=cfg.t_max {
        let aux = update_auxiliaries(&d, s);

        // beamforming step at fixed phases
        let cu = effective_user_channel(&d.phi, s);
        let cte = effective_ed_channel(&d.phi, s);
        let tc = transform_constants(&aux, &cu, &cte, s.sigma2_u, s.sigma2_te);
        let data = Subproblem1Data {
            v: tc.v,
            m: tc.m,
            c_t: radar_cascade_channel(&d.phi, s),
            p_r: cfg.p_r,
            gamma_th: cfg.gamma_th,
            sigma2_r: s.sigma2_r,
            omega: cfg.omega,
        };
        let prog1 = build_subproblem1(&data).map_err(|source| RunError::Sp1 { t, source })?;
        let sol1 =
            solve_subproblem1(&prog1, &solver_cfg).map_err(|source| RunError::Sp1 { t, source })?;
        let w_n = psd_sqrt(&sol1.r_wn).map_err(|source| RunError::AnFactor { t, source })?;
        let beam_cand = DesignState {
            w: sol1.w.clone(),
            w_n,
            phi: d.phi.clone(),
        };
        let before = secrecy_rate(&d, s);
        let beam_accepted = secrecy_rate(&beam_cand, s) >= before - 1e-9;
        if beam_accepted {
            d = beam_cand;
        }
        align_beam_phase(&mut d, s);
        let mut sp1_stats = sol1.stats;

        // phase step: refresh the auxiliaries at the new precoders so the
        // phase objective is anchored at the current design
        let aux2 = update_auxiliaries(&d, s);
        let phi_obj = build_phi_objective(&d, &aux2, s);
        let sur = build_snr_surrogate(&d.phi, &d, s, cfg.gamma_th);
        let prog2 = build_subproblem2(&phi_obj, &sur);
        let sol2 =
            solve_subproblem2(&prog2, &solver_cfg).map_err(|source| RunError::Sp2 { t, source })?;

        // one-step lookahead acceptance: each phase candidate is judged by
        // the secrecy it reaches after re-solving the beam sub-problem at
        // those phases, so a candidate may dip before the re-solve
        let candidates = phase_candidates(&sol2, &phi_obj, &d, s, cfg.gamma_th);
        let no_candidates = candidates.is_empty();
        let current = secrecy_rate(&d, s);
        let mut lookahead_best: Option<(DesignState, f64, crate::beamformer::SolveStats)> = None;
        for phi_c in candidates {
            let trial = DesignState {
                w: d.w.clone(),
                w_n: d.w_n.clone(),
                phi: phi_c,
            };
            let aux_c = update_auxiliaries(&trial, s);
            let cu_c = effective_user_channel(&trial.phi, s);
            let cte_c = effective_ed_channel(&trial.phi, s);
            let tc_c = transform_constants(&aux_c, &cu_c, &cte_c, s.sigma2_u, s.sigma2_te);
            let data_c = Subproblem1Data {
                v: tc_c.v,
                m: tc_c.m,
                c_t: radar_cascade_channel(&trial.phi, s),
                p_r: cfg.p_r,
                gamma_th: cfg.gamma_th,
                sigma2_r: s.sigma2_r,
                omega: cfg.omega,
            };
            let Ok(prog_c) = build_subproblem1(&data_c) else {
                continue;
            };
            let Ok(sol_c) = solve_subproblem1(&prog_c, &solver_cfg) else {
                continue;
            };
            let Ok(w_n_c) = psd_sqrt(&sol_c.r_wn) else {
                continue;
            };
            let cand = DesignState {
                w: sol_c.w.clone(),
                w_n: w_n_c,
                phi: trial.phi.clone(),
            };
            let val = secrecy_rate(&cand, s);
            sp1_stats.verify_max_violation = sp1_stats
                .verify_max_violation
                .max(sol_c.stats.verify_max_violation);
            if val >= current - 1e-6
                && lookahead_best.as_ref().map_or(true, |(_, b, _)| val > *b)
            {
                lookahead_best = Some((cand, val, sol_c.stats));
            }
        }
        let phi_accepted = if let Some((cand, val, stats)) = lookahead_best {
            if val >= current - 1e-6 {
                d = cand;
                align_beam_phase(&mut d, s);
                let keep = sp1_stats.verify_max_violation;
                sp1_stats = stats;
                sp1_stats.verify_max_violation = sp1_stats.verify_max_violation.max(keep);
                true
            } else {
                false
            }
        } else {
            false
        };

        let m = evaluate_state(&d, s);
        trace.push(IterationRecord {
            t,
            secrecy_rate: m.secrecy_rate,
            user_rate: m.user_rate,
            ed_rate: m.ed_rate,
            radar_snr: m.radar_snr,
            power_used: m.power_used,
            aux,
            sp1_stats,
            sp2_stats: sol2.stats,
            beam_accepted,
            phi_accepted,
        });

        // the stall exit tracks iterations where no feasible phase
        // candidate existed at all; a retained-but-feasible phase step
        // still leaves the beam step free to make progress, which the
        // epsilon criterion will judge
        if no_candidates {
            retained_streak += 1;
            if retained_streak >= 2 {
                termination = Termination::Stalled;
                break;
            }
        } else {
            retained_streak = 0;
        }

        let obj_now = m.secrecy_rate;
        let rel_change = (obj_now - obj_prev).abs() / obj_prev.abs().max(1e-12);
        if rel_change <= cfg.epsilon {
            termination = Termination::Converged;
            break;
        }
        obj_prev = obj_now;
    }

    Ok(RunResult {
        trace,
        final_state: d,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, ScenarioConfig};

    fn tiny_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.geometry.n_tx = 4;
        cfg.geometry.n_rx = 4;
        cfg.geometry.irs_rows = 2;
        cfg.geometry.irs_cols = 2;
        cfg
    }

    #[test]
    fn zero_design_evaluates_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = build_scenario(&mut rng, &tiny_config()).unwrap();
        let m = evaluate_state(&DesignState::zero(4, 4), &s);
        assert_eq!(m.secrecy_rate, 0.0);
        assert_eq!(m.user_rate, 0.0);
        assert_eq!(m.ed_rate, 0.0);
        assert_eq!(m.radar_snr, 0.0);
        assert_eq!(m.power_used, 0.0);
    }

    #[test]
    fn record_fields_match_metrics_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = build_scenario(&mut rng, &tiny_config()).unwrap();
        let cfg = RunConfig {
            t_max: 3,
            epsilon: 1e-9,
            seed: 5,
            ..Default::default()
        };
        let result = run(&s, &cfg).unwrap();
        assert!(!result.trace.is_empty());
        let last = result.trace.last().unwrap();
        let m = evaluate_state(&result.final_state, &s);
        assert!((last.secrecy_rate - m.secrecy_rate).abs() < 1e-12);
        assert!((last.user_rate - m.user_rate).abs() < 1e-12);
        assert!((last.ed_rate - m.ed_rate).abs() < 1e-12);
        assert!((last.radar_snr - m.radar_snr).abs() < 1e-12);
        assert!((last.power_used - m.power_used).abs() < 1e-12);
    }

    #[test]
    fn infinite_epsilon_terminates_after_one_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = build_scenario(&mut rng, &tiny_config()).unwrap();
        let cfg = RunConfig {
            epsilon: f64::INFINITY,
            seed: 1,
            ..Default::default()
        };
        let result = run(&s, &cfg).unwrap();
        assert_eq!(result.trace.len(), 1);
        assert_eq!(result.termination, Termination::Converged);
    }

    #[test]
    fn trace_is_monotone_and_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = build_scenario(&mut rng, &tiny_config()).unwrap();
        let cfg = RunConfig {
            epsilon: 1e-4,
            seed: 2,
            omega: Some(0.8),
            ..Default::default()
        };
        let result = run(&s, &cfg).unwrap();
        let init = initial_design(
            &mut ChaCha8Rng::seed_from_u64(2),
            &s,
            0.8,
            cfg.p_r,
        );
        let mut prev = secrecy_rate(&init, &s);
        for r in &result.trace {
            assert!(
                r.secrecy_rate >= prev - 1e-5,
                "t={}: {prev} -> {}",
                r.t,
                r.secrecy_rate
            );
            assert!(r.power_used <= cfg.p_r * (1.0 + 1e-6));
            assert!(r.radar_snr >= cfg.gamma_th * (1.0 - 1e-6));
            assert!(r.sp1_stats.verify_max_violation < 1e-6);
            assert!(r.sp2_stats.verify_max_violation < 1e-6);
            prev = r.secrecy_rate;
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = build_scenario(&mut rng, &tiny_config()).unwrap();
        let cfg = RunConfig {
            seed: 9,
            t_max: 4,
            ..Default::default()
        };
        let a = run(&s, &cfg).unwrap();
        let b = run(&s, &cfg).unwrap();
        assert_eq!(a.trace.len(), b.trace.len());
        assert_eq!(a.final_secrecy(), b.final_secrecy());
        assert_eq!(a.final_state.w, b.final_state.w);
        assert_eq!(a.trace_csv(), b.trace_csv());
    }

    #[test]
    fn initialization_infeasible_when_threshold_unreachable() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = build_scenario(&mut rng, &tiny_config()).unwrap();
        let cfg = RunConfig {
            gamma_th: 1e12,
            ..Default::default()
        };
        match run(&s, &cfg) {
            Err(RunError::InitializationInfeasible { attempts }) => assert_eq!(attempts, 50),
            other => panic!("expected InitializationInfeasible, got {other:?}"),
        }
    }

    #[test]
    fn trace_csv_schema() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = build_scenario(&mut rng, &tiny_config()).unwrap();
        let cfg = RunConfig {
            t_max: 2,
            seed: 3,
            ..Default::default()
        };
        let result = run(&s, &cfg).unwrap();
        let csv = result.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,secrecy_rate,user_rate,ed_rate,radar_snr,power_used,term_reason"
        );
        for line in lines {
            assert_eq!(line.split(',').count(), 7);
        }
    }
}
