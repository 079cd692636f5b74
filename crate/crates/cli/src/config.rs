//! Flat `key = value` configuration with dB-scale knobs.
//!
//! Keys mirror the system-configuration table (`n_tx = 16`,
//! `p_r_dbm = 30`, `gamma_th_db = -11`, `epsilon_db = -20`, ...). All
//! dB-to-linear conversion happens exactly once, in
//! [`Config::scenario_config`] / [`Config::run_config`]; everything
//! downstream works in linear watts.

use irsec_core::optimizer::RunConfig;
use irsec_core::scenario::{ArrayGeometry, ScenarioConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected 'key = value'")]
    Syntax { line: usize },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for '{key}': {value}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Raw configuration, dB-scale where the table is dB-scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub n_tx: usize,
    pub n_rx: usize,
    pub irs_rows: usize,
    pub irs_cols: usize,
    /// Element spacing in wavelengths.
    pub spacing: f64,
    /// Rician K-factor [dB].
    pub rician_k_db: f64,
    /// Target reflection power |beta|^2 [dB].
    pub beta_db: f64,
    /// DFRC-IRS path loss [dB].
    pub beta_h_db: f64,
    /// Noise powers [dBm].
    pub noise_r_dbm: f64,
    pub noise_u_dbm: f64,
    pub noise_te_dbm: f64,
    /// Radar power budget [dBm].
    pub p_r_dbm: f64,
    /// Radar SNR threshold [dB].
    pub gamma_th_db: f64,
    /// Termination tolerance [dB].
    pub epsilon_db: f64,
    pub t_max: usize,
    pub solver_tol: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            n_tx: 16,
            n_rx: 16,
            irs_rows: 5,
            irs_cols: 5,
            spacing: 0.5,
            rician_k_db: 0.0,
            beta_db: -40.0,
            beta_h_db: 0.0,
            noise_r_dbm: 0.0,
            noise_u_dbm: 0.0,
            noise_te_dbm: 0.0,
            p_r_dbm: 30.0,
            gamma_th_db: -11.0,
            epsilon_db: -20.0,
            t_max: 20,
            solver_tol: 1e-7,
        }
    }
}

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

fn dbm(x: f64) -> f64 {
    db(x) * 1e-3
}

impl Config {
    /// Parse a `key = value` file; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: i + 1 })?;
            cfg.set(key.trim(), value.trim(), i + 1)?;
        }
        Ok(cfg)
    }

    /// Apply one `key = value` override.
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = |k: &str, v: &str| ConfigError::BadValue {
            line,
            key: k.to_string(),
            value: v.to_string(),
        };
        macro_rules! num {
            ($field:ident, $ty:ty) => {{
                self.$field = value.parse::<$ty>().map_err(|_| bad(key, value))?;
            }};
        }
        match key {
            "n_tx" => num!(n_tx, usize),
            "n_rx" => num!(n_rx, usize),
            "irs_rows" => num!(irs_rows, usize),
            "irs_cols" => num!(irs_cols, usize),
            "spacing" => num!(spacing, f64),
            "rician_k_db" => num!(rician_k_db, f64),
            "beta_db" => num!(beta_db, f64),
            "beta_h_db" => num!(beta_h_db, f64),
            "noise_r_dbm" => num!(noise_r_dbm, f64),
            "noise_u_dbm" => num!(noise_u_dbm, f64),
            "noise_te_dbm" => num!(noise_te_dbm, f64),
            "p_r_dbm" => num!(p_r_dbm, f64),
            "gamma_th_db" => num!(gamma_th_db, f64),
            "epsilon_db" => num!(epsilon_db, f64),
            "t_max" => num!(t_max, usize),
            "solver_tol" => num!(solver_tol, f64),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Linear-scale scenario knobs (conversion happens here, once).
    pub fn scenario_config(&self) -> Result<ScenarioConfig, ConfigError> {
        let cfg = ScenarioConfig {
            geometry: ArrayGeometry {
                n_tx: self.n_tx,
                n_rx: self.n_rx,
                irs_rows: self.irs_rows,
                irs_cols: self.irs_cols,
                spacing: self.spacing,
            },
            rician_k: db(self.rician_k_db),
            beta_pow: db(self.beta_db),
            beta_h: db(self.beta_h_db),
            sigma2_r: dbm(self.noise_r_dbm),
            sigma2_u: dbm(self.noise_u_dbm),
            sigma2_te: dbm(self.noise_te_dbm),
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Linear-scale run knobs for one trial.
    pub fn run_config(&self, seed: u64, omega: Option<f64>) -> Result<RunConfig, ConfigError> {
        let cfg = RunConfig {
            epsilon: db(self.epsilon_db),
            t_max: self.t_max,
            omega,
            seed,
            solver_tol: self.solver_tol,
            p_r: dbm(self.p_r_dbm),
            gamma_th: db(self.gamma_th_db),
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
