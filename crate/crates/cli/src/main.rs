//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible run/batch.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use irsec_cli::config::Config;
use irsec_cli::experiments::{
    parse_grid, run_convergence, run_omega_sweep, run_single, ExperimentError, ExperimentKind,
    ExperimentSpec,
};
use irsec_core::scenario::build_scenario;

#[derive(Parser)]
#[command(
    name = "irsec",
    about = "Secrecy-rate maximization for an IRS-assisted dual-function radar-communication system",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Configuration file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline overrides, e.g. --set n_tx=8 (repeatable; applied after the
    /// file).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output CSV path ("-" for stdout).
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Subcommand)]
enum Command {
    /// One full optimization run; writes the iteration trace.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Information power ratio in [0, 1] (omitted = no split cap).
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Convergence band over repeated channel realizations.
    Convergence {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        omega: Option<f64>,
    },
    /// Mean final rates versus the information power ratio.
    OmegaSweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Inclusive grid start:step:end.
        #[arg(long, default_value = "0.1:0.05:1.0")]
        grid: String,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw one scenario and write its reproducibility snapshot.
    DumpScenario {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

fn load_config(common: &CommonOpts) -> Result<Config, String> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            Config::parse(&text).map_err(|e| e.to_string())?
        }
        None => Config::default(),
    };
    for set in &common.sets {
        let (k, v) = set
            .split_once('=')
            .ok_or_else(|| format!("--set expects KEY=VALUE, got '{set}'"))?;
        cfg.set(k.trim(), v.trim(), 0).map_err(|e| e.to_string())?;
    }
    Ok(cfg)
}

fn write_out(target: &str, contents: &str) -> Result<(), String> {
    if target == "-" {
        print!("{contents}");
        Ok(())
    } else {
        std::fs::write(target, contents).map_err(|e| format!("cannot write {target}: {e}"))
    }
}

fn fail(code: u8, msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn experiment_exit(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::AllInfeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            common,
            seed,
            omega,
        } => {
            let config = match load_config(&common) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, &e),
            };
            let spec = ExperimentSpec {
                kind: ExperimentKind::SingleRun,
                n_trials: 1,
                seed_base: seed,
                omega_grid: Vec::new(),
                omega,
                config,
            };
            match run_single(&spec) {
                Ok(result) => {
                    eprintln!(
                        "run: {} iterations, {}, final secrecy rate {:.6} nats",
                        result.trace.len(),
                        result.termination.as_str(),
                        result.final_secrecy()
                    );
                    match write_out(&common.out, &result.trace_csv()) {
                        Ok(()) => ExitCode::SUCCESS,
                        Err(e) => fail(EXIT_CONFIG, &e),
                    }
                }
                Err(e) => fail(experiment_exit(&e), &e.to_string()),
            }
        }
        Command::Convergence {
            common,
            trials,
            seed,
            omega,
        } => {
            let config = match load_config(&common) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, &e),
            };
            let spec = ExperimentSpec {
                kind: ExperimentKind::Convergence,
                n_trials: trials,
                seed_base: seed,
                omega_grid: Vec::new(),
                omega,
                config,
            };
            match run_convergence(&spec) {
                Ok(table) => {
                    let converged = table
                        .trials
                        .iter()
                        .filter(|t| {
                            t.termination == irsec_core::optimizer::Termination::Converged
                        })
                        .count();
                    eprintln!(
                        "convergence: {} trials done ({} converged, {} infeasible)",
                        table.trials.len(),
                        converged,
                        table.n_infeasible
                    );
                    match write_out(&common.out, &table.to_csv()) {
                        Ok(()) => ExitCode::SUCCESS,
                        Err(e) => fail(EXIT_CONFIG, &e),
                    }
                }
                Err(e) => fail(experiment_exit(&e), &e.to_string()),
            }
        }
        Command::OmegaSweep {
            common,
            grid,
            trials,
            seed,
        } => {
            let config = match load_config(&common) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, &e),
            };
            let omega_grid = match parse_grid(&grid) {
                Ok(g) => g,
                Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
            };
            let spec = ExperimentSpec {
                kind: ExperimentKind::OmegaSweep,
                n_trials: trials,
                seed_base: seed,
                omega_grid,
                omega: None,
                config,
            };
            match run_omega_sweep(&spec) {
                Ok(table) => match write_out(&common.out, &table.to_csv()) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => fail(EXIT_CONFIG, &e),
                },
                Err(e) => fail(experiment_exit(&e), &e.to_string()),
            }
        }
        Command::DumpScenario { common, seed } => {
            let config = match load_config(&common) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, &e),
            };
            let scen_cfg = match config.scenario_config() {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match build_scenario(&mut rng, &scen_cfg) {
                Ok(s) => match write_out(&common.out, &s.to_text()) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => fail(EXIT_CONFIG, &e),
                },
                Err(e) => fail(EXIT_CONFIG, &e.to_string()),
            }
        }
    }
}
