//! Independent residual verification.
//!
//! Recomputes feasibility, conic, and duality residuals of a solution
//! straight from the public problem data, without touching any solver
//! state.

use nalgebra::DMatrix;

use crate::problem::{SdpProblem, Sense};
use crate::solver::{SdpSolution, SolveStatus};

#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub index: usize,
    pub sense: Sense,
    pub value: f64,
    pub rhs: f64,
    /// Violation in the sense direction, 0 when satisfied.
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub constraint_residuals: Vec<ConstraintResidual>,
    /// Most negative primal block eigenvalue, relative to block norm.
    pub primal_cone: f64,
    /// Most negative dual block eigenvalue, relative to block norm.
    pub dual_cone: f64,
    /// || sum_i y_i A_i - C - S ||_F / (1 + ||C||_F), maximize convention.
    pub dual_equation: f64,
    /// Multiplier sign violation (y_i < 0 on `<=` rows etc.).
    pub multiplier_sign: f64,
    pub gap: f64,
    pub max_violation: f64,
    pub flagged: Vec<String>,
}

impl VerifyReport {
    pub fn clean(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

fn min_eig_rel(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let scale = m.norm().max(1e-300);
    let eigs = m.symmetric_eigenvalues();
    eigs.min() / scale
}

/// Recompute all residuals of `sol` against `p`, flagging anything beyond
/// `tol`. Meaningful for solutions with status Optimal; for certificates it
/// reports the raw numbers.
pub fn verify(sol: &SdpSolution, p: &SdpProblem, tol: f64) -> VerifyReport {
    let mut flagged = Vec::new();
    let mut max_violation: f64 = 0.0;

    let norm_b = p
        .constraints
        .iter()
        .map(|c| c.rhs * c.rhs)
        .sum::<f64>()
        .sqrt()
        .max(1.0);

    let mut constraint_residuals = Vec::with_capacity(p.constraints.len());
    for (i, con) in p.constraints.iter().enumerate() {
        let mut value = 0.0;
        for (k, m) in con.mats.iter().enumerate() {
            if let Some(m) = m {
                value += m.dot(&sol.blocks[k]);
            }
        }
        let raw = match con.sense {
            Sense::Eq => (value - con.rhs).abs(),
            Sense::Le => (value - con.rhs).max(0.0),
            Sense::Ge => (con.rhs - value).max(0.0),
        };
        let violation = raw / norm_b;
        if violation > tol {
            flagged.push(format!(
                "constraint {i}: value {value:.6e} {} rhs {:.6e} violated by {violation:.3e}",
                con.sense.as_str(),
                con.rhs
            ));
        }
        max_violation = max_violation.max(violation);
        constraint_residuals.push(ConstraintResidual {
            index: i,
            sense: con.sense,
            value,
            rhs: con.rhs,
            violation,
        });
    }

    let primal_cone = sol
        .blocks
        .iter()
        .map(min_eig_rel)
        .fold(0.0_f64, f64::min);
    if -primal_cone > tol {
        flagged.push(format!("primal block eigenvalue {primal_cone:.3e}"));
    }
    max_violation = max_violation.max(-primal_cone);

    let dual_cone = sol
        .dual_blocks
        .iter()
        .map(min_eig_rel)
        .fold(0.0_f64, f64::min);
    if -dual_cone > tol {
        flagged.push(format!("dual block eigenvalue {dual_cone:.3e}"));
    }
    max_violation = max_violation.max(-dual_cone);

    // dual equation: sum_i y_i A_i - C = S on every public block
    let mut norm_c2 = 0.0;
    for c in p.objective.iter().flatten() {
        norm_c2 += c.dot(c);
    }
    let norm_c = norm_c2.sqrt();
    let mut dual_res2 = 0.0;
    for k in 0..p.block_dims.len() {
        let d = p.block_dims[k];
        let mut acc: DMatrix<f64> = DMatrix::zeros(d, d);
        for (i, con) in p.constraints.iter().enumerate() {
            if let Some(m) = &con.mats[k] {
                let yi = sol.y[i];
                acc.zip_apply(m, |a, b| *a += yi * b);
            }
        }
        if let Some(c) = &p.objective[k] {
            acc -= c;
        }
        acc -= &sol.dual_blocks[k];
        dual_res2 += acc.norm_squared();
    }
    let dual_equation = dual_res2.sqrt() / (1.0 + norm_c);
    if dual_equation > tol && sol.status == SolveStatus::Optimal {
        flagged.push(format!("dual equation residual {dual_equation:.3e}"));
    }
    if sol.status == SolveStatus::Optimal {
        max_violation = max_violation.max(dual_equation);
    }

    let mut multiplier_sign: f64 = 0.0;
    for (i, con) in p.constraints.iter().enumerate() {
        let v = match con.sense {
            Sense::Eq => 0.0,
            Sense::Le => (-sol.y[i]).max(0.0),
            Sense::Ge => sol.y[i].max(0.0),
        };
        multiplier_sign = multiplier_sign.max(v / (1.0 + sol.y.amax()));
    }
    if multiplier_sign > tol && sol.status == SolveStatus::Optimal {
        flagged.push(format!("multiplier sign violation {multiplier_sign:.3e}"));
        max_violation = max_violation.max(multiplier_sign);
    }

    let gap = (sol.objective - sol.dual_objective).abs()
        / (1.0 + sol.objective.abs().max(sol.dual_objective.abs()));
    if gap > tol && sol.status == SolveStatus::Optimal {
        flagged.push(format!("duality gap {gap:.3e}"));
        max_violation = max_violation.max(gap);
    }

    VerifyReport {
        constraint_residuals,
        primal_cone,
        dual_cone,
        dual_equation,
        multiplier_sign,
        gap,
        max_violation,
        flagged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::SdpProblem;
    use crate::solver::{solve, SolverConfig};

    #[test]
    fn clean_report_on_optimal() {
        let mut p = SdpProblem::new(vec![2]);
        p.set_objective(0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        p.add_constraint(vec![(0, DMatrix::identity(2, 2))], Sense::Eq, 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        let report = verify(&sol, &p, 1e-8);
        assert!(report.clean(1e-8), "flagged: {:?}", report.flagged);
    }

    #[test]
    fn perturbed_solution_flagged() {
        let mut p = SdpProblem::new(vec![2]);
        p.set_objective(0, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        p.add_constraint(vec![(0, DMatrix::identity(2, 2))], Sense::Eq, 1.0);
        let mut sol = solve(&p, &SolverConfig::default()).unwrap();
        sol.blocks[0][(0, 0)] += 1e-3;
        let report = verify(&sol, &p, 1e-8);
        assert!(!report.clean(1e-8));
        assert!(!report.flagged.is_empty());
    }
}
