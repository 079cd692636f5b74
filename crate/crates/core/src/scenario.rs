//! Physical model of one trial: array steering, Rician channels, and the
//! three effective channels (user, eavesdropper/target, radar round-trip
//! cascade) as functions of the IRS phase configuration.
//!
//! Everything here is in linear scale (powers in watts) and immutable after
//! construction; sampling is a pure function of the seeded random source.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scenario parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Transmit/receive ULA sizes and the IRS grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    pub n_tx: usize,
    pub n_rx: usize,
    pub irs_rows: usize,
    pub irs_cols: usize,
    /// Inter-element distance in wavelengths.
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn n_irs(&self) -> usize {
        self.irs_rows * self.irs_cols
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_tx < 1 || self.n_rx < 1 || self.irs_rows < 1 || self.irs_cols < 1 {
            return Err(ScenarioError::Geometry("all counts must be >= 1".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(ScenarioError::Geometry("spacing must be > 0".into()));
        }
        Ok(())
    }
}

/// All linear-scale knobs needed to draw a [`Scenario`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioConfig {
    pub geometry: ArrayGeometry,
    /// Rician K-factor (linear).
    pub rician_k: f64,
    /// Target round-trip reflection power |beta|^2 (linear).
    pub beta_pow: f64,
    /// DFRC-IRS path loss beta_H (linear power gain).
    pub beta_h: f64,
    pub sigma2_r: f64,
    pub sigma2_u: f64,
    pub sigma2_te: f64,
}

impl Default for ScenarioConfig {
    /// Table-style defaults: 16x16 arrays, 5x5 IRS, half-wavelength
    /// spacing, 0 dB Rician factor, |beta|^2 = -40 dB, unit IRS path gain,
    /// 0 dBm noise everywhere.
    fn default() -> Self {
        ScenarioConfig {
            geometry: ArrayGeometry {
                n_tx: 16,
                n_rx: 16,
                irs_rows: 5,
                irs_cols: 5,
                spacing: 0.5,
            },
            rician_k: 1.0,
            beta_pow: 1e-4,
            beta_h: 1.0,
            sigma2_r: 1e-3,
            sigma2_u: 1e-3,
            sigma2_te: 1e-3,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.geometry.validate()?;
        if !(self.rician_k >= 0.0) {
            return Err(ScenarioError::Config("rician_k must be >= 0".into()));
        }
        if !(self.beta_pow > 0.0) {
            return Err(ScenarioError::Config("beta_pow must be > 0".into()));
        }
        if !(self.beta_h >= 0.0) {
            return Err(ScenarioError::Config("beta_h must be >= 0".into()));
        }
        for (name, v) in [
            ("sigma2_r", self.sigma2_r),
            ("sigma2_u", self.sigma2_u),
            ("sigma2_te", self.sigma2_te),
        ] {
            if !(v > 0.0) {
                return Err(ScenarioError::Config(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Unit-modulus IRS phase configuration, the diagonal of the reflection
/// matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    phi: CVector,
}

impl PhaseVector {
    pub fn ones(n: usize) -> Self {
        PhaseVector {
            phi: CVector::from_element(n, Complex64::new(1.0, 0.0)),
        }
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        PhaseVector {
            phi: CVector::from_iterator(angles.len(), angles.iter().map(|&a| Complex64::cis(a))),
        }
    }

    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        let angles: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        Self::from_angles(&angles)
    }

    /// Entrywise projection of an arbitrary complex vector onto the unit
    /// circle; zero entries map to 1.
    pub fn project(v: &CVector) -> Self {
        PhaseVector {
            phi: v.map(|z| {
                let m = z.norm();
                if m > 0.0 {
                    z / m
                } else {
                    Complex64::new(1.0, 0.0)
                }
            }),
        }
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.phi
    }

    pub fn max_modulus_deviation(&self) -> f64 {
        self.phi
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// The sampled physical world of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    /// DFRC -> user direct channel, length N_T.
    pub g: CVector,
    /// IRS -> user channel, length N.
    pub f: CVector,
    /// DFRC -> IRS channel, N x N_T.
    pub h_dl: CMatrix,
    /// IRS -> DFRC channel, N_R x N.
    pub h_ul: CMatrix,
    /// Target round-trip reflection coefficient (complex).
    pub beta: Complex64,
    /// DFRC-IRS path loss (linear power gain).
    pub beta_h: f64,
    /// Target azimuth/elevation relative to the IRS, radians.
    pub psi_a: f64,
    pub psi_e: f64,
    pub sigma2_r: f64,
    pub sigma2_u: f64,
    pub sigma2_te: f64,
}

/// ULA steering vector: entry k = exp(j 2 pi d k sin(angle)).
pub fn ula_steering(angle: f64, n: usize, spacing: f64) -> CVector {
    let step = 2.0 * PI * spacing * angle.sin();
    CVector::from_iterator(n, (0..n).map(|k| Complex64::cis(step * k as f64)))
}

/// UPA steering vector for the IRS grid, element (p, q) phase
/// 2 pi d (p sin(psi_e) + q cos(psi_e) sin(psi_a)), vectorized row-major.
pub fn upa_steering(psi_a: f64, psi_e: f64, geometry: &ArrayGeometry) -> CVector {
    let d = geometry.spacing;
    let row_step = 2.0 * PI * d * psi_e.sin();
    let col_step = 2.0 * PI * d * psi_e.cos() * psi_a.sin();
    let mut out = CVector::zeros(geometry.n_irs());
    for p in 0..geometry.irs_rows {
        for q in 0..geometry.irs_cols {
            let phase = row_step * p as f64 + col_step * q as f64;
            out[p * geometry.irs_cols + q] = Complex64::cis(phase);
        }
    }
    out
}

/// One standard complex Gaussian draw, CN(0, 1).
pub fn complex_gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    // Box-Muller; u1 in (0, 1]
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    Complex64::new(r * c, r * s) / 2.0_f64.sqrt()
}

pub fn complex_gaussian_vector<R: Rng>(rng: &mut R, n: usize) -> CVector {
    CVector::from_iterator(n, (0..n).map(|_| complex_gaussian(rng)))
}

pub fn complex_gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // row-major draw order so the sequence is independent of storage layout
    let mut m = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

/// Rician sample sqrt(k/(1+k)) los + sqrt(1/(1+k)) G with G iid CN(0,1).
pub fn sample_rician<R: Rng>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    k_factor: f64,
    los: &CMatrix,
) -> CMatrix {
    assert_eq!(los.nrows(), rows);
    assert_eq!(los.ncols(), cols);
    let los_w = (k_factor / (1.0 + k_factor)).sqrt();
    let nlos_w = (1.0 / (1.0 + k_factor)).sqrt();
    let g = complex_gaussian_matrix(rng, rows, cols);
    los * Complex64::new(los_w, 0.0) + g * Complex64::new(nlos_w, 0.0)
}

/// Draw a full scenario. LOS components of the IRS-side channels are outer
/// products of steering vectors at angles drawn uniformly in (-pi/2, pi/2);
/// the target bearing and the reflection phase are drawn the same way and
/// held fixed for the trial.
pub fn build_scenario<R: Rng>(rng: &mut R, config: &ScenarioConfig) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    let geo = config.geometry;
    let n = geo.n_irs();
    let half = PI / 2.0;
    let angle = |rng: &mut R| rng.gen_range(-half..half);

    let psi_a = angle(rng);
    let psi_e = angle(rng);
    let beta_phase = rng.gen_range(0.0..2.0 * PI);
    let beta = Complex64::from_polar(config.beta_pow.sqrt(), beta_phase);

    // LOS geometry for each sampled link
    let g_los_angle = angle(rng);
    let f_az = angle(rng);
    let f_el = angle(rng);
    let dl_az = angle(rng);
    let dl_el = angle(rng);
    let dl_tx_angle = angle(rng);
    let ul_rx_angle = angle(rng);
    let ul_az = angle(rng);
    let ul_el = angle(rng);

    let k = config.rician_k;
    let g_los = CMatrix::from_column_slice(
        geo.n_tx,
        1,
        ula_steering(g_los_angle, geo.n_tx, geo.spacing).as_slice(),
    );
    let g = sample_rician(rng, geo.n_tx, 1, k, &g_los).column(0).into_owned();

    let f_los = CMatrix::from_column_slice(n, 1, upa_steering(f_az, f_el, &geo).as_slice());
    let f = sample_rician(rng, n, 1, k, &f_los).column(0).into_owned();

    let dl_los = upa_steering(dl_az, dl_el, &geo)
        * ula_steering(dl_tx_angle, geo.n_tx, geo.spacing).transpose();
    let h_dl = sample_rician(rng, n, geo.n_tx, k, &dl_los);

    let ul_los = ula_steering(ul_rx_angle, geo.n_rx, geo.spacing)
        * upa_steering(ul_az, ul_el, &geo).transpose();
    let h_ul = sample_rician(rng, geo.n_rx, n, k, &ul_los);

    Ok(Scenario {
        geometry: geo,
        g,
        f,
        h_dl,
        h_ul,
        beta,
        beta_h: config.beta_h,
        psi_a,
        psi_e,
        sigma2_r: config.sigma2_r,
        sigma2_u: config.sigma2_u,
        sigma2_te: config.sigma2_te,
    })
}

impl Scenario {
    pub fn n_irs(&self) -> usize {
        self.geometry.n_irs()
    }

    /// IRS steering vector toward the target.
    pub fn a_irs(&self) -> CVector {
        upa_steering(self.psi_a, self.psi_e, &self.geometry)
    }

    /// D = sqrt(beta_H) diag(f) H_dl, the user-side factorization matrix.
    pub fn d_matrix(&self) -> CMatrix {
        let mut m = self.h_dl.clone();
        let w = self.beta_h.sqrt();
        for i in 0..m.nrows() {
            let fi = self.f[i] * w;
            for j in 0..m.ncols() {
                m[(i, j)] *= fi;
            }
        }
        m
    }

    /// E = sqrt(beta) diag(a_I) H_dl, the eavesdropper-side factorization.
    pub fn e_matrix(&self) -> CMatrix {
        let a = self.a_irs();
        let sb = self.beta.sqrt();
        let mut m = self.h_dl.clone();
        for i in 0..m.nrows() {
            let ai = a[i] * sb;
            for j in 0..m.ncols() {
                m[(i, j)] *= ai;
            }
        }
        m
    }

    /// Radar cascade for an arbitrary (not necessarily unit-modulus)
    /// diagonal vector; rank one by construction.
    pub fn radar_cascade_of(&self, phi: &CVector) -> CMatrix {
        let a = self.a_irs();
        let pa: CVector = phi.component_mul(&a);
        let left = &self.h_ul * &pa; // N_R
        let right = self.h_dl.transpose() * &pa; // N_T
        (left * right.transpose()) * self.beta
    }
}

/// Effective DFRC -> user channel c_u with c_u' = g' + sqrt(beta_H) f' Phi H_dl.
pub fn effective_user_channel(phi: &PhaseVector, s: &Scenario) -> CVector {
    // g + D' phi with D = sqrt(beta_H) diag(f) H_dl
    let pf: CVector = phi
        .as_vector()
        .component_mul(&s.f)
        .map(|z| z * s.beta_h.sqrt());
    &s.g + s.h_dl.transpose() * pf
}

/// Effective DFRC -> eavesdropper channel c_te with c_te' = sqrt(beta) a' Phi H_dl.
pub fn effective_ed_channel(phi: &PhaseVector, s: &Scenario) -> CVector {
    let a = s.a_irs();
    let pa: CVector = phi.as_vector().component_mul(&a).map(|z| z * s.beta.sqrt());
    s.h_dl.transpose() * pa
}

/// Radar round-trip cascade C_T = beta H_ul Phi a a' Phi H_dl.
pub fn radar_cascade_channel(phi: &PhaseVector, s: &Scenario) -> CMatrix {
    s.radar_cascade_of(phi.as_vector())
}

// --- flat text serialization -------------------------------------------

fn push_complex(out: &mut String, z: &Complex64) {
    out.push_str(&format!("{},{}", z.re, z.im));
}

fn push_cvector(out: &mut String, key: &str, v: &CVector) {
    out.push_str(key);
    out.push_str(" =");
    for z in v.iter() {
        out.push(' ');
        push_complex(out, z);
    }
    out.push('\n');
}

fn push_cmatrix(out: &mut String, key: &str, m: &CMatrix) {
    // row-major
    out.push_str(key);
    out.push_str(" =");
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(' ');
            push_complex(out, &m[(i, j)]);
        }
    }
    out.push('\n');
}

impl Scenario {
    /// Key = value snapshot; complex entries as "re,im", matrices row-major.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("scenario v1\n");
        out.push_str(&format!("n_tx = {}\n", self.geometry.n_tx));
        out.push_str(&format!("n_rx = {}\n", self.geometry.n_rx));
        out.push_str(&format!("irs_rows = {}\n", self.geometry.irs_rows));
        out.push_str(&format!("irs_cols = {}\n", self.geometry.irs_cols));
        out.push_str(&format!("spacing = {}\n", self.geometry.spacing));
        out.push_str(&format!("beta = {},{}\n", self.beta.re, self.beta.im));
        out.push_str(&format!("beta_h = {}\n", self.beta_h));
        out.push_str(&format!("psi_a = {}\n", self.psi_a));
        out.push_str(&format!("psi_e = {}\n", self.psi_e));
        out.push_str(&format!("sigma2_r = {}\n", self.sigma2_r));
        out.push_str(&format!("sigma2_u = {}\n", self.sigma2_u));
        out.push_str(&format!("sigma2_te = {}\n", self.sigma2_te));
        push_cvector(&mut out, "g", &self.g);
        push_cvector(&mut out, "f", &self.f);
        push_cmatrix(&mut out, "h_dl", &self.h_dl);
        push_cmatrix(&mut out, "h_ul", &self.h_ul);
        out
    }

    pub fn from_text(text: &str) -> Result<Scenario, ScenarioError> {
        use std::collections::HashMap;
        let mut map: HashMap<&str, (usize, &str)> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line == "scenario v1" {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ScenarioError::Parse {
                line: i + 1,
                msg: "expected 'key = value'".into(),
            })?;
            map.insert(k.trim(), (i + 1, v.trim()));
        }
        let get = |key: &str| -> Result<(usize, &str), ScenarioError> {
            map.get(key).copied().ok_or(ScenarioError::Parse {
                line: 0,
                msg: format!("missing key {key}"),
            })
        };
        let scalar = |key: &str| -> Result<f64, ScenarioError> {
            let (line, v) = get(key)?;
            v.parse().map_err(|_| ScenarioError::Parse {
                line,
                msg: format!("bad number for {key}"),
            })
        };
        let usize_of = |key: &str| -> Result<usize, ScenarioError> {
            let (line, v) = get(key)?;
            v.parse().map_err(|_| ScenarioError::Parse {
                line,
                msg: format!("bad count for {key}"),
            })
        };
        let complex_of = |line: usize, tok: &str| -> Result<Complex64, ScenarioError> {
            let (re, im) = tok.split_once(',').ok_or(ScenarioError::Parse {
                line,
                msg: "expected re,im".into(),
            })?;
            Ok(Complex64::new(
                re.parse().map_err(|_| ScenarioError::Parse {
                    line,
                    msg: "bad re".into(),
                })?,
                im.parse().map_err(|_| ScenarioError::Parse {
                    line,
                    msg: "bad im".into(),
                })?,
            ))
        };
        let cvec = |key: &str, n: usize| -> Result<CVector, ScenarioError> {
            let (line, v) = get(key)?;
            let toks: Vec<&str> = v.split_whitespace().collect();
            if toks.len() != n {
                return Err(ScenarioError::Parse {
                    line,
                    msg: format!("{key}: expected {n} entries, got {}", toks.len()),
                });
            }
            let mut out = CVector::zeros(n);
            for (i, t) in toks.iter().enumerate() {
                out[i] = complex_of(line, t)?;
            }
            Ok(out)
        };
        let cmat = |key: &str, rows: usize, cols: usize| -> Result<CMatrix, ScenarioError> {
            let (line, v) = get(key)?;
            let toks: Vec<&str> = v.split_whitespace().collect();
            if toks.len() != rows * cols {
                return Err(ScenarioError::Parse {
                    line,
                    msg: format!("{key}: expected {} entries", rows * cols),
                });
            }
            let mut out = CMatrix::zeros(rows, cols);
            for (idx, t) in toks.iter().enumerate() {
                out[(idx / cols, idx % cols)] = complex_of(line, t)?;
            }
            Ok(out)
        };

        let geometry = ArrayGeometry {
            n_tx: usize_of("n_tx")?,
            n_rx: usize_of("n_rx")?,
            irs_rows: usize_of("irs_rows")?,
            irs_cols: usize_of("irs_cols")?,
            spacing: scalar("spacing")?,
        };
        geometry.validate()?;
        let n = geometry.n_irs();
        let (bline, bval) = get("beta")?;
        Ok(Scenario {
            geometry,
            g: cvec("g", geometry.n_tx)?,
            f: cvec("f", n)?,
            h_dl: cmat("h_dl", n, geometry.n_tx)?,
            h_ul: cmat("h_ul", geometry.n_rx, n)?,
            beta: complex_of(bline, bval)?,
            beta_h: scalar("beta_h")?,
            psi_a: scalar("psi_a")?,
            psi_e: scalar("psi_e")?,
            sigma2_r: scalar("sigma2_r")?,
            sigma2_u: scalar("sigma2_u")?,
            sigma2_te: scalar("sigma2_te")?,
        })
    }
}
