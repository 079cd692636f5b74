//! Experiment harness: convergence bands over channel realizations and the
//! information-power-ratio sweep, with Monte-Carlo orchestration and CSV
//! output.
//!
//! Trials run in parallel; per-trial seeds are derived deterministically
//! from the spec's base seed, and rows are emitted in sorted order, so a
//! (seed_base, spec) pair fully determines the output bytes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use irsec_core::optimizer::{run, RunError, RunResult};
use irsec_core::scenario::build_scenario;

use crate::config::{Config, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    OmegaSweep,
    SingleRun,
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n_trials: usize,
    pub seed_base: u64,
    /// Power-split grid for sweeps; ignored otherwise.
    pub omega_grid: Vec<f64>,
    /// Power split for convergence/single runs (None = no split cap).
    pub omega: Option<f64>,
    pub config: Config,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.n_trials < 1 {
            return Err(ExperimentError::BadSpec("n_trials must be >= 1".into()));
        }
        if self.kind == ExperimentKind::OmegaSweep {
            if self.omega_grid.is_empty() {
                return Err(ExperimentError::BadSpec("empty omega grid".into()));
            }
            if self.omega_grid.iter().any(|w| !(0.0..=1.0).contains(w)) {
                return Err(ExperimentError::BadSpec(
                    "omega grid values must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trial {trial} failed: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: RunError,
    },
    #[error("all {0} trials were infeasible")]
    AllInfeasible(usize),
}

/// Scenario and initialization seeds for one trial, derived so the two
/// random streams never coincide.
fn trial_seeds(seed_base: u64, trial: usize) -> (u64, u64) {
    let s = seed_base.wrapping_add(trial as u64);
    (s, s ^ 0x9e37_79b9_7f4a_7c15)
}

/// Outcome of one trial: a finished run or an infeasible initialization.
enum TrialOutcome {
    Done(Box<RunResult>),
    Infeasible,
}

fn run_trial(
    spec: &ExperimentSpec,
    trial: usize,
    omega: Option<f64>,
) -> Result<TrialOutcome, ExperimentError> {
    let (scen_seed, init_seed) = trial_seeds(spec.seed_base, trial);
    let scen_cfg = spec.config.scenario_config()?;
    let run_cfg = spec.config.run_config(init_seed, omega)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scen_seed);
    let scenario = build_scenario(&mut rng, &scen_cfg)
        .map_err(|e| ExperimentError::BadSpec(e.to_string()))?;
    match run(&scenario, &run_cfg) {
        Ok(result) => Ok(TrialOutcome::Done(Box::new(result))),
        Err(RunError::InitializationInfeasible { .. }) => Ok(TrialOutcome::Infeasible),
        Err(source) => Err(ExperimentError::Trial { trial, source }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub t: usize,
    pub mean_secrecy: f64,
    pub var_secrecy: f64,
    /// Trials still iterating at this t (native trace length >= t).
    pub n_active: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Per-trial final secrecy and termination, trial-ordered.
    pub trials: Vec<TrialSummary>,
    pub n_infeasible: usize,
}

#[derive(Debug, Clone)]
pub struct TrialSummary {
    pub trial: usize,
    pub final_secrecy: f64,
    pub termination: irsec_core::optimizer::Termination,
    pub iterations: usize,
    /// Largest per-step decrease of the secrecy trace (0 if monotone).
    pub worst_decrease: f64,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean_secrecy,var_secrecy,n_active\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.t, r.mean_secrecy, r.var_secrecy, r.n_active
            ));
        }
        out
    }
}

/// Convergence experiment: mean/variance of the secrecy trace per
/// iteration over `n_trials` channel realizations. Converged traces are
/// held at their final value so the band reflects all trials; `n_active`
/// counts the traces natively reaching each iteration.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<ConvergenceTable, ExperimentError> {
    spec.validate()?;
    let outcomes: Vec<(usize, Result<TrialOutcome, ExperimentError>)> = (0..spec.n_trials)
        .into_par_iter()
        .map(|trial| (trial, run_trial(spec, trial, spec.omega)))
        .collect();

    let mut results: Vec<(usize, RunResult)> = Vec::new();
    let mut n_infeasible = 0usize;
    for (trial, outcome) in outcomes {
        match outcome? {
            TrialOutcome::Done(r) => results.push((trial, *r)),
            TrialOutcome::Infeasible => n_infeasible += 1,
        }
    }
    if results.is_empty() {
        return Err(ExperimentError::AllInfeasible(spec.n_trials));
    }
    results.sort_by_key(|(trial, _)| *trial);

    let max_len = results
        .iter()
        .map(|(_, r)| r.trace.len())
        .max()
        .unwrap_or(0);
    let mut rows = Vec::with_capacity(max_len);
    for t in 1..=max_len {
        let mut n_active = 0usize;
        let vals: Vec<f64> = results
            .iter()
            .map(|(_, r)| {
                if r.trace.len() >= t {
                    n_active += 1;
                    r.trace[t - 1].secrecy_rate
                } else {
                    r.final_secrecy()
                }
            })
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        rows.push(ConvergenceRow {
            t,
            mean_secrecy: mean,
            var_secrecy: var,
            n_active,
        });
    }

    let trials = results
        .iter()
        .map(|(trial, r)| {
            let mut worst: f64 = 0.0;
            for pair in r.trace.windows(2) {
                worst = worst.max(pair[0].secrecy_rate - pair[1].secrecy_rate);
            }
            TrialSummary {
                trial: *trial,
                final_secrecy: r.final_secrecy(),
                termination: r.termination,
                iterations: r.trace.len(),
                worst_decrease: worst,
            }
        })
        .collect();

    Ok(ConvergenceTable {
        rows,
        trials,
        n_infeasible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub mean_ru: f64,
    pub mean_rte: f64,
    pub mean_secrecy: f64,
    pub stderr_secrecy: f64,
    pub stderr_ru: f64,
    pub stderr_rte: f64,
    pub n_done: usize,
    pub n_infeasible: usize,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("omega,mean_Ru,mean_Rte,mean_secrecy,stderr_secrecy\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.omega, r.mean_ru, r.mean_rte, r.mean_secrecy, r.stderr_secrecy
            ));
        }
        out
    }
}

/// Power-ratio sweep: per-omega means of the final rates over the same
/// trial seeds, so curves across omega are paired.
pub fn run_omega_sweep(spec: &ExperimentSpec) -> Result<SweepTable, ExperimentError> {
    spec.validate()?;
    let mut grid = spec.omega_grid.clone();
    grid.sort_by(f64::total_cmp);

    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|gi| (0..spec.n_trials).map(move |trial| (gi, trial)))
        .collect();
    let outcomes: Vec<((usize, usize), Result<TrialOutcome, ExperimentError>)> = tasks
        .into_par_iter()
        .map(|(gi, trial)| ((gi, trial), run_trial(spec, trial, Some(grid[gi]))))
        .collect();

    let mut per_omega: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); grid.len()];
    let mut infeasible = vec![0usize; grid.len()];
    for ((gi, _trial), outcome) in outcomes {
        match outcome? {
            TrialOutcome::Done(r) => {
                let last = r.trace.last().expect("trace is nonempty");
                per_omega[gi].push((last.user_rate, last.ed_rate, last.secrecy_rate));
            }
            TrialOutcome::Infeasible => infeasible[gi] += 1,
        }
    }
    if per_omega.iter().all(|v| v.is_empty()) {
        return Err(ExperimentError::AllInfeasible(spec.n_trials * grid.len()));
    }

    let stats = |vals: &[f64]| -> (f64, f64) {
        let n = vals.len() as f64;
        if vals.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let mean = vals.iter().sum::<f64>() / n;
        if vals.len() < 2 {
            return (mean, 0.0);
        }
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };

    let rows = grid
        .iter()
        .enumerate()
        .map(|(gi, &omega)| {
            let ru: Vec<f64> = per_omega[gi].iter().map(|v| v.0).collect();
            let rte: Vec<f64> = per_omega[gi].iter().map(|v| v.1).collect();
            let sr: Vec<f64> = per_omega[gi].iter().map(|v| v.2).collect();
            let (mean_ru, stderr_ru) = stats(&ru);
            let (mean_rte, stderr_rte) = stats(&rte);
            let (mean_secrecy, stderr_secrecy) = stats(&sr);
            SweepRow {
                omega,
                mean_ru,
                mean_rte,
                mean_secrecy,
                stderr_secrecy,
                stderr_ru,
                stderr_rte,
                n_done: per_omega[gi].len(),
                n_infeasible: infeasible[gi],
            }
        })
        .collect();

    Ok(SweepTable { rows })
}

/// One full trial for the `run` subcommand: returns the trace CSV.
pub fn run_single(spec: &ExperimentSpec) -> Result<RunResult, ExperimentError> {
    match run_trial(spec, 0, spec.omega)? {
        TrialOutcome::Done(r) => Ok(*r),
        TrialOutcome::Infeasible => Err(ExperimentError::AllInfeasible(1)),
    }
}

/// Parse a `start:step:end` inclusive grid.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, ExperimentError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || ExperimentError::BadSpec(format!("bad grid '{text}', expected start:step:end"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let step: f64 = parts[1].parse().map_err(|_| bad())?;
    let end: f64 = parts[2].parse().map_err(|_| bad())?;
    if !(step > 0.0) || end < start {
        return Err(bad());
    }
    let mut grid = Vec::new();
    let mut k = 0usize;
    loop {
        let v = start + step * k as f64;
        if v > end + 1e-9 {
            break;
        }
        grid.push((v * 1e9).round() / 1e9);
        k += 1;
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(kind: ExperimentKind) -> ExperimentSpec {
        let mut config = Config::default();
        config.n_tx = 4;
        config.n_rx = 4;
        config.irs_rows = 2;
        config.irs_cols = 2;
        config.t_max = 4;
        ExperimentSpec {
            kind,
            n_trials: 3,
            seed_base: 11,
            omega_grid: vec![0.5, 1.0],
            omega: Some(0.8),
            config,
        }
    }

    #[test]
    fn grid_arithmetic() {
        let g = parse_grid("0.1:0.05:1.0").unwrap();
        assert_eq!(g.len(), 19);
        assert!((g[0] - 0.1).abs() < 1e-12);
        assert!((g[18] - 1.0).abs() < 1e-12);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("0.5").is_err());
    }

    #[test]
    fn convergence_single_trial_zero_variance() {
        let mut spec = tiny_spec(ExperimentKind::Convergence);
        spec.n_trials = 1;
        let table = run_convergence(&spec).unwrap();
        assert!(!table.rows.is_empty());
        assert!(table.rows.iter().all(|r| r.var_secrecy == 0.0));
        assert!(table.rows.iter().all(|r| r.n_active <= 1));
    }

    #[test]
    fn convergence_deterministic_csv() {
        let spec = tiny_spec(ExperimentKind::Convergence);
        let a = run_convergence(&spec).unwrap().to_csv();
        let b = run_convergence(&spec).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("t,mean_secrecy,var_secrecy,n_active\n"));
    }

    #[test]
    fn convergence_mean_curve_monotone() {
        let spec = tiny_spec(ExperimentKind::Convergence);
        let table = run_convergence(&spec).unwrap();
        for w in table.rows.windows(2) {
            assert!(w[1].mean_secrecy >= w[0].mean_secrecy - 1e-5);
        }
        for t in &table.trials {
            assert!(t.worst_decrease <= 1e-5, "trial {} decreased", t.trial);
        }
    }

    #[test]
    fn sweep_rows_match_grid() {
        let spec = tiny_spec(ExperimentKind::OmegaSweep);
        let table = run_omega_sweep(&spec).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].omega, 0.5);
        assert_eq!(table.rows[1].omega, 1.0);
        assert!(table.rows.iter().all(|r| r.n_done > 0));
        let csv = table.to_csv();
        assert!(csv.starts_with("omega,mean_Ru,mean_Rte,mean_secrecy,stderr_secrecy\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn no_an_raises_ed_rate_within_pairs() {
        // omega = 1 (no AN) vs 0.5 on the same seeds
        let spec = tiny_spec(ExperimentKind::OmegaSweep);
        let table = run_omega_sweep(&spec).unwrap();
        let half = &table.rows[0];
        let full = &table.rows[1];
        assert!(
            full.mean_rte > half.mean_rte,
            "ED rate without AN {} vs with AN {}",
            full.mean_rte,
            half.mean_rte
        );
    }

    #[test]
    fn single_run_trace() {
        let spec = tiny_spec(ExperimentKind::SingleRun);
        let result = run_single(&spec).unwrap();
        let csv = result.trace_csv();
        assert!(csv.starts_with("t,secrecy_rate,user_rate,ed_rate,radar_snr,power_used,term_reason\n"));
    }
}
