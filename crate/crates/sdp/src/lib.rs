//! Self-contained dense conic solver for small semidefinite programs.
//!
//! Provides a standard-form real symmetric SDP type with a plain-text
//! dump/load format, a primal-dual interior-point solver (Nesterov-Todd
//! scaling, Mehrotra predictor-corrector, homogeneous self-dual
//! embedding), an independent residual verifier, and a realification
//! layer for complex Hermitian programs.

pub mod problem;
pub mod realify;
pub mod solver;
pub mod verify;

pub use problem::{Constraint, ProblemError, SdpProblem, Sense, VarView};
pub use realify::{
    hermitian_from_real, realify_matrix, CMatrix, CVector, HermitianProblem, RealifyError,
    Recovery,
};
pub use solver::{solve, Residuals, SdpSolution, SolveStatus, SolverConfig};
pub use verify::{verify, VerifyReport};
