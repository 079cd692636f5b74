//! Complex Hermitian conic programs lowered to real symmetric form.
//!
//! A Hermitian matrix H = P + iQ maps to the real symmetric
//!
//! ```text
//!   realify(H) = [ P  -Q ]
//!                [ Q   P ]
//! ```
//!
//! whose eigenvalues are those of H with doubled multiplicity. For Hermitian
//! A and X, `tr(A X) = 1/2 tr(realify(A) realify(X))`, so coefficient
//! matrices carry a 1/2 factor on the way down and objective/constraint
//! values are preserved exactly. A general real symmetric solution block Y
//! is pulled back by averaging Y with J Y J' (J the canonical symplectic
//! involution), which preserves PSD-ness and every structured inner
//! product.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::problem::{SdpProblem, Sense, VarView};
use crate::solver::SdpSolution;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Error)]
pub enum RealifyError {
    #[error("block {block}: matrix is not Hermitian (max deviation {dev:.3e})")]
    NotHermitian { block: usize, dev: f64 },
    #[error("block {block}: matrix is {rows}x{cols}, block dimension is {dim}")]
    DimensionMismatch {
        block: usize,
        rows: usize,
        cols: usize,
        dim: usize,
    },
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// The standard real embedding of a complex matrix (no 1/2 factor).
pub fn realify_matrix(h: &CMatrix) -> DMatrix<f64> {
    let n = h.nrows();
    let mut out = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let v = h[(i, j)];
            out[(i, j)] = v.re;
            out[(i + n, j + n)] = v.re;
            out[(i, j + n)] = -v.im;
            out[(i + n, j)] = v.im;
        }
    }
    out
}

/// Pull a real symmetric 2n x 2n block back to the Hermitian n x n matrix
/// it represents, projecting onto the structured subspace first.
pub fn hermitian_from_real(y: &DMatrix<f64>) -> CMatrix {
    let n2 = y.nrows();
    debug_assert_eq!(n2 % 2, 0);
    let n = n2 / 2;
    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (y[(i, j)] + y[(i + n, j + n)]);
            let im = 0.5 * (y[(i + n, j)] - y[(i, j + n)]);
            out[(i, j)] = Complex64::new(re, im);
        }
    }
    // Hermitian cleanup of rounding noise
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)].conj());
            out[(i, j)] = v;
            out[(j, i)] = v.conj();
        }
        out[(i, i)] = Complex64::new(out[(i, i)].re, 0.0);
    }
    out
}

/// A conic program over complex Hermitian PSD blocks with real-valued
/// linear trace constraints; the staging type that lowers onto
/// [`SdpProblem`].
#[derive(Debug, Clone, Default)]
pub struct HermitianProblem {
    pub block_dims: Vec<usize>,
    objective: Vec<Option<CMatrix>>,
    constraints: Vec<(Vec<Option<CMatrix>>, Sense, f64)>,
    names: Vec<(String, VarView)>,
}

impl HermitianProblem {
    pub fn new(block_dims: Vec<usize>) -> Self {
        let n = block_dims.len();
        HermitianProblem {
            block_dims,
            objective: vec![None; n],
            constraints: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn set_objective(&mut self, block: usize, mat: CMatrix) {
        self.objective[block] = Some(mat);
    }

    pub fn add_constraint(&mut self, mats: Vec<(usize, CMatrix)>, sense: Sense, rhs: f64) {
        let mut row = vec![None; self.block_dims.len()];
        for (k, m) in mats {
            row[k] = Some(m);
        }
        self.constraints.push((row, sense, rhs));
    }

    /// Name a region of a complex block; forwarded (in complex
    /// coordinates) to the lowered problem's var_map.
    pub fn name_view(&mut self, name: &str, view: VarView) {
        self.names.push((name.to_string(), view));
    }

    /// Lower to a real symmetric SDP. Coefficient matrices are checked
    /// Hermitian and scaled by 1/2 so that objective and rhs values carry
    /// over unchanged.
    pub fn lower(&self) -> Result<(SdpProblem, Recovery), RealifyError> {
        let check = |block: usize, m: &CMatrix| -> Result<(), RealifyError> {
            let dim = self.block_dims[block];
            if m.nrows() != dim || m.ncols() != dim {
                return Err(RealifyError::DimensionMismatch {
                    block,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    dim,
                });
            }
            let dev = hermitian_deviation(m);
            let scale = m.iter().map(|v| v.norm()).fold(1.0_f64, f64::max);
            if dev > 1e-9 * scale {
                return Err(RealifyError::NotHermitian { block, dev });
            }
            Ok(())
        };

        let real_dims: Vec<usize> = self.block_dims.iter().map(|d| 2 * d).collect();
        let mut p = SdpProblem::new(real_dims);
        for (k, mat) in self.objective.iter().enumerate() {
            if let Some(mat) = mat {
                check(k, mat)?;
                p.set_objective(k, realify_matrix(mat) * 0.5);
            }
        }
        for (row, sense, rhs) in &self.constraints {
            let mut mats = Vec::new();
            for (k, mat) in row.iter().enumerate() {
                if let Some(mat) = mat {
                    check(k, mat)?;
                    mats.push((k, realify_matrix(mat) * 0.5));
                }
            }
            p.add_constraint(mats, *sense, *rhs);
        }
        for (name, view) in &self.names {
            p.name_view(name, view.clone());
        }
        Ok((
            p,
            Recovery {
                block_dims: self.block_dims.clone(),
            },
        ))
    }
}

/// Maps real solutions of a lowered problem back to Hermitian blocks.
#[derive(Debug, Clone)]
pub struct Recovery {
    block_dims: Vec<usize>,
}

impl Recovery {
    pub fn primal_blocks(&self, sol: &SdpSolution) -> Vec<CMatrix> {
        self.block_dims
            .iter()
            .zip(sol.blocks.iter())
            .map(|(_, y)| hermitian_from_real(y))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn eigenvalue_doubling() {
        // H = [[2, j], [-j, 2]] has eigenvalues 1 and 3
        let h = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let r = realify_matrix(&h);
        let mut eigs: Vec<f64> = r.symmetric_eigenvalues().iter().copied().collect();
        eigs.sort_by(f64::total_cmp);
        let expect = [1.0, 1.0, 3.0, 3.0];
        for (e, x) in eigs.iter().zip(expect.iter()) {
            assert!((e - x).abs() < 1e-12, "eigs {eigs:?}");
        }
    }

    #[test]
    fn real_input_embeds_block_diagonally() {
        let h = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(-2.0, 0.0)]);
        let r = realify_matrix(&h);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(r[(i, j + 2)], 0.0);
                assert_eq!(r[(i + 2, j)], 0.0);
                assert_eq!(r[(i, j)], r[(i + 2, j + 2)]);
            }
        }
    }

    #[test]
    fn trace_identity_random() {
        // tr(A X) = 1/2 tr(realify(A) realify(X)) for Hermitian A, X
        let mut seed = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..10 {
            let n = 4;
            let mut a = CMatrix::zeros(n, n);
            let mut x = CMatrix::zeros(n, n);
            for i in 0..n {
                a[(i, i)] = c(next(), 0.0);
                x[(i, i)] = c(next(), 0.0);
                for j in (i + 1)..n {
                    let va = c(next(), next());
                    let vx = c(next(), next());
                    a[(i, j)] = va;
                    a[(j, i)] = va.conj();
                    x[(i, j)] = vx;
                    x[(j, i)] = vx.conj();
                }
            }
            let lhs: Complex64 = (&a * &x).trace();
            assert!(lhs.im.abs() < 1e-12);
            let rhs = 0.5 * (realify_matrix(&a) * realify_matrix(&x)).trace();
            assert!((lhs.re - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn hermitian_round_trip() {
        let h = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0), c(0.2, 0.3), c(-0.1, 0.7),
                c(0.2, -0.3), c(2.0, 0.0), c(0.0, -0.4),
                c(-0.1, -0.7), c(0.0, 0.4), c(0.5, 0.0),
            ],
        );
        let back = hermitian_from_real(&realify_matrix(&h));
        assert!((&back - &h).iter().all(|v| v.norm() < 1e-14));
    }
}
