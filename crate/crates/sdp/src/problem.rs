//! Standard-form semidefinite program over a product of dense symmetric
//! PSD blocks.
//!
//! The problem is
//!
//! ```text
//!   maximize    sum_k tr(C_k X_k)
//!   subject to  sum_k tr(A_ik X_k)  {=, <=, >=}  b_i,   i = 1..m
//!               X_k >= 0 (positive semidefinite), k = 1..B
//! ```
//!
//! All coefficient matrices are real symmetric. Inequalities are lifted to
//! equalities with 1x1 slack blocks inside the solver; the public problem
//! keeps the senses.

use nalgebra::DMatrix;
use thiserror::Error;

/// Constraint sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl Sense {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        }
    }

    pub fn parse(s: &str) -> Option<Sense> {
        match s {
            "=" => Some(Sense::Eq),
            "<=" => Some(Sense::Le),
            ">=" => Some(Sense::Ge),
            _ => None,
        }
    }
}

/// One linear trace constraint. `mats[k]` is the coefficient matrix on
/// block `k`; `None` means the block does not appear.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub mats: Vec<Option<DMatrix<f64>>>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Named rectangular view into a block, used to locate logical variables
/// (e.g. the borrowed beamformer column inside a Schur block) in dumps and
/// when recovering solutions.
#[derive(Debug, Clone)]
pub struct VarView {
    pub block: usize,
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    /// Objective coefficients per block (maximize). `None` = zero.
    pub objective: Vec<Option<DMatrix<f64>>>,
    pub constraints: Vec<Constraint>,
    pub var_map: Vec<(String, VarView)>,
}

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("block {block}: coefficient matrix is {rows}x{cols}, block dimension is {dim}")]
    DimensionMismatch {
        block: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("block {block}: coefficient matrix not symmetric (max asymmetry {asym:.3e})")]
    NotSymmetric { block: usize, asym: f64 },
    #[error("constraint {index}: {source}")]
    Constraint {
        index: usize,
        #[source]
        source: Box<ProblemError>,
    },
    #[error("objective: {0}")]
    Objective(#[source] Box<ProblemError>),
    #[error("non-finite entry in problem data")]
    NonFinite,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn check_block_set(
    dims: &[usize],
    mats: &[Option<DMatrix<f64>>],
    sym_tol: f64,
) -> Result<(), ProblemError> {
    for (k, m) in mats.iter().enumerate() {
        let Some(m) = m else { continue };
        let dim = dims[k];
        if m.nrows() != dim || m.ncols() != dim {
            return Err(ProblemError::DimensionMismatch {
                block: k,
                rows: m.nrows(),
                cols: m.ncols(),
                dim,
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite);
        }
        let scale = m.norm().max(1.0);
        let asym = (m - m.transpose()).norm();
        if asym > sym_tol * scale {
            return Err(ProblemError::NotSymmetric { block: k, asym });
        }
    }
    Ok(())
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>) -> Self {
        let n_blocks = block_dims.len();
        SdpProblem {
            block_dims,
            objective: vec![None; n_blocks],
            constraints: Vec::new(),
            var_map: Vec::new(),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.block_dims.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn set_objective(&mut self, block: usize, mat: DMatrix<f64>) {
        self.objective[block] = Some(mat);
    }

    pub fn add_constraint(
        &mut self,
        mats: Vec<(usize, DMatrix<f64>)>,
        sense: Sense,
        rhs: f64,
    ) {
        let mut row = vec![None; self.n_blocks()];
        for (k, m) in mats {
            row[k] = Some(m);
        }
        self.constraints.push(Constraint {
            mats: row,
            sense,
            rhs,
        });
    }

    pub fn name_view(&mut self, name: &str, view: VarView) {
        self.var_map.push((name.to_string(), view));
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let tol = 1e-10;
        if self.objective.len() != self.n_blocks() {
            return Err(ProblemError::Objective(Box::new(
                ProblemError::DimensionMismatch {
                    block: self.objective.len(),
                    rows: 0,
                    cols: 0,
                    dim: self.n_blocks(),
                },
            )));
        }
        check_block_set(&self.block_dims, &self.objective, tol)
            .map_err(|e| ProblemError::Objective(Box::new(e)))?;
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(ProblemError::NonFinite);
            }
            check_block_set(&self.block_dims, &c.mats, tol).map_err(|e| {
                ProblemError::Constraint {
                    index: i,
                    source: Box::new(e),
                }
            })?;
        }
        Ok(())
    }

    /// Serialize to the plain-text block format used for regression
    /// fixtures: dimensions first, then row-major matrices.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str("sdp v1\n");
        out.push_str(&format!("blocks {}\n", self.n_blocks()));
        let dims: Vec<String> = self.block_dims.iter().map(|d| d.to_string()).collect();
        out.push_str(&dims.join(" "));
        out.push('\n');
        out.push_str("objective\n");
        dump_block_set(&mut out, &self.objective);
        out.push_str(&format!("constraints {}\n", self.constraints.len()));
        for c in &self.constraints {
            out.push_str(&format!("{} {}\n", c.sense.as_str(), fmt_f64(c.rhs)));
            dump_block_set(&mut out, &c.mats);
        }
        out
    }

    /// Parse the `dump` format back. Inverse of [`SdpProblem::dump`].
    pub fn load(text: &str) -> Result<SdpProblem, ProblemError> {
        let mut lines = text.lines().enumerate();
        let mut next = || -> Result<(usize, &str), ProblemError> {
            for (i, l) in lines.by_ref() {
                let t = l.trim();
                if !t.is_empty() {
                    return Ok((i + 1, t));
                }
            }
            Err(ProblemError::Parse {
                line: 0,
                msg: "unexpected end of input".into(),
            })
        };
        let perr = |line: usize, msg: &str| ProblemError::Parse {
            line,
            msg: msg.into(),
        };

        let (ln, header) = next()?;
        if header != "sdp v1" {
            return Err(perr(ln, "expected header 'sdp v1'"));
        }
        let (ln, bl) = next()?;
        let n_blocks: usize = bl
            .strip_prefix("blocks ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(ln, "expected 'blocks <n>'"))?;
        let (ln, dims_line) = next()?;
        let block_dims: Vec<usize> = dims_line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| perr(ln, "bad block dimension"))?;
        if block_dims.len() != n_blocks {
            return Err(perr(ln, "block dimension count mismatch"));
        }
        let (ln, obj_tag) = next()?;
        if obj_tag != "objective" {
            return Err(perr(ln, "expected 'objective'"));
        }
        let objective = load_block_set(&block_dims, &mut next)?;
        let (ln, cons_tag) = next()?;
        let m: usize = cons_tag
            .strip_prefix("constraints ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| perr(ln, "expected 'constraints <m>'"))?;
        let mut constraints = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, head) = next()?;
            let mut it = head.splitn(2, ' ');
            let sense = it
                .next()
                .and_then(Sense::parse)
                .ok_or_else(|| perr(ln, "bad constraint sense"))?;
            let rhs: f64 = it
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| perr(ln, "bad constraint rhs"))?;
            let mats = load_block_set(&block_dims, &mut next)?;
            constraints.push(Constraint { mats, sense, rhs });
        }
        let p = SdpProblem {
            block_dims,
            objective,
            constraints,
            var_map: Vec::new(),
        };
        p.validate()?;
        Ok(p)
    }
}

fn fmt_f64(v: f64) -> String {
    // shortest round-trip representation
    format!("{v}")
}

fn dump_block_set(out: &mut String, mats: &[Option<DMatrix<f64>>]) {
    for (k, m) in mats.iter().enumerate() {
        match m {
            None => out.push_str(&format!("block {k} zero\n")),
            Some(m) => {
                out.push_str(&format!("block {k} dense\n"));
                for i in 0..m.nrows() {
                    let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
                    out.push_str(&row.join(" "));
                    out.push('\n');
                }
            }
        }
    }
}

fn load_block_set<'a>(
    dims: &[usize],
    next: &mut impl FnMut() -> Result<(usize, &'a str), ProblemError>,
) -> Result<Vec<Option<DMatrix<f64>>>, ProblemError> {
    let mut mats = vec![None; dims.len()];
    for (k, &dim) in dims.iter().enumerate() {
        let (ln, head) = next()?;
        let rest = head.strip_prefix(&format!("block {k} ")).ok_or_else(|| {
            ProblemError::Parse {
                line: ln,
                msg: format!("expected 'block {k} ...'"),
            }
        })?;
        match rest {
            "zero" => {}
            "dense" => {
                let mut m = DMatrix::zeros(dim, dim);
                for i in 0..dim {
                    let (ln, row) = next()?;
                    let vals: Vec<f64> = row
                        .split_whitespace()
                        .map(|t| t.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| ProblemError::Parse {
                            line: ln,
                            msg: "bad matrix entry".into(),
                        })?;
                    if vals.len() != dim {
                        return Err(ProblemError::Parse {
                            line: ln,
                            msg: format!("expected {dim} entries, got {}", vals.len()),
                        });
                    }
                    for (j, v) in vals.into_iter().enumerate() {
                        m[(i, j)] = v;
                    }
                }
                mats[k] = Some(m);
            }
            _ => {
                return Err(ProblemError::Parse {
                    line: ln,
                    msg: "expected 'zero' or 'dense'".into(),
                })
            }
        }
    }
    Ok(mats)
}
