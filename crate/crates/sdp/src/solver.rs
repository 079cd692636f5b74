//! Primal-dual path-following interior-point solver.
//!
//! Works on the homogeneous self-dual embedding of the standard-form pair
//!
//! ```text
//!   (P) min <C,X>  s.t. A(X) = b, X >= 0
//!   (D) max b'y    s.t. A*(y) + S = C, S >= 0
//! ```
//!
//! with Nesterov-Todd scaling, a Mehrotra predictor-corrector step, and
//! dense Cholesky on the Schur complement of the normal equations.
//! Inequalities in the public (maximize) problem become 1x1 slack blocks,
//! the objective is negated, and constraint rows are norm-scaled before
//! the solve. Infeasibility is detected through the tau/kappa certificates
//! of the embedding.

use nalgebra::{DMatrix, DVector};

use crate::problem::{SdpProblem, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Primal infeasible, with a Farkas certificate residual in
    /// [`Residuals::infeasibility`].
    Infeasible,
    /// Dual infeasible (primal objective unbounded above).
    Unbounded,
    SlowProgress,
}

#[derive(Debug, Clone, Copy)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    /// Certificate residual when status is Infeasible/Unbounded.
    pub infeasibility: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Primal blocks of the public problem (slack blocks stripped).
    pub blocks: Vec<DMatrix<f64>>,
    /// Slack values per constraint (0.0 for equalities).
    pub slacks: Vec<f64>,
    /// Dual multipliers in the public maximize convention: y_i >= 0 for
    /// `<=` rows, y_i <= 0 for `>=` rows.
    pub y: DVector<f64>,
    /// Dual slack blocks matching `blocks`.
    pub dual_blocks: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub dual_objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Per-iteration progress on stderr.
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            max_iter: 100,
            verbose: false,
        }
    }
}

/// Block-diagonal symmetric matrix, stored as dense blocks.
type Blocks = Vec<DMatrix<f64>>;

fn blocks_zeros(dims: &[usize]) -> Blocks {
    dims.iter().map(|&d| DMatrix::zeros(d, d)).collect()
}

fn blocks_identity(dims: &[usize]) -> Blocks {
    dims.iter().map(|&d| DMatrix::identity(d, d)).collect()
}

fn blocks_dot(a: &Blocks, b: &Blocks) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.dot(y))
        .sum()
}

fn blocks_norm(a: &Blocks) -> f64 {
    blocks_dot(a, a).sqrt()
}

fn blocks_axpy(y: &mut Blocks, alpha: f64, x: &Blocks) {
    for (yb, xb) in y.iter_mut().zip(x.iter()) {
        yb.zip_apply(xb, |a, b| *a += alpha * b);
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Sparse triplet view of a constraint matrix, kept when the matrix has few
/// nonzeros so Schur assembly can use outer products of W columns.
enum CoeffRepr {
    Zero,
    Sparse(Vec<(usize, usize, f64)>),
    Dense(DMatrix<f64>),
}

impl CoeffRepr {
    fn from_mat(m: &DMatrix<f64>, dim: usize) -> CoeffRepr {
        let mut trips = Vec::new();
        for j in 0..dim {
            for i in 0..dim {
                let v = m[(i, j)];
                if v != 0.0 {
                    trips.push((i, j, v));
                    if trips.len() > dim.max(8) {
                        return CoeffRepr::Dense(m.clone());
                    }
                }
            }
        }
        if trips.is_empty() {
            CoeffRepr::Zero
        } else {
            CoeffRepr::Sparse(trips)
        }
    }

    fn dot(&self, b: &DMatrix<f64>) -> f64 {
        match self {
            CoeffRepr::Zero => 0.0,
            CoeffRepr::Sparse(t) => t.iter().map(|&(i, j, v)| v * b[(i, j)]).sum(),
            CoeffRepr::Dense(m) => m.dot(b),
        }
    }

    /// W * A * W for symmetric W.
    fn congruence(&self, w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        match self {
            CoeffRepr::Zero => None,
            CoeffRepr::Sparse(t) => {
                let n = w.nrows();
                let mut out = DMatrix::zeros(n, n);
                for &(i, j, v) in t {
                    // v * W e_i e_j' W = v * W[:,i] W[j,:]
                    let wi = w.column(i);
                    let wj = w.column(j); // row j of W by symmetry
                    out.ger(v, &wi, &wj, 1.0);
                }
                Some(out)
            }
            CoeffRepr::Dense(m) => Some(w * m * w),
        }
    }

    fn add_scaled_to(&self, out: &mut DMatrix<f64>, alpha: f64) {
        match self {
            CoeffRepr::Zero => {}
            CoeffRepr::Sparse(t) => {
                for &(i, j, v) in t {
                    out[(i, j)] += alpha * v;
                }
            }
            CoeffRepr::Dense(m) => out.zip_apply(m, |a, b| *a += alpha * b),
        }
    }
}

/// Equality-form internal problem: min <C,X> s.t. <A_i,X> = b_i, X >= 0.
/// Rows with all-zero coefficients are dropped during lowering (their
/// consistency is checked against the constants), so internal row indices
/// map to public ones through `row_of`.
struct Internal {
    dims: Vec<usize>,
    c: Blocks,
    a: Vec<Vec<CoeffRepr>>, // [internal constraint][block]
    b: DVector<f64>,
    /// Per-internal-constraint scale factors applied on the way in.
    row_scale: Vec<f64>,
    /// Objective scale factor.
    c_scale: f64,
    n_public_blocks: usize,
    /// Slack block index per internal constraint.
    slack_block: Vec<Option<usize>>,
    /// Public constraint index per internal row.
    row_of: Vec<usize>,
    /// Slack value per dropped public row (0 for equalities).
    dropped: Vec<(usize, f64)>,
}

enum Lowered {
    Ok(Internal),
    /// A row with zero coefficients contradicts its right-hand side.
    TriviallyInfeasible,
}

fn lower_to_internal(p: &SdpProblem) -> Lowered {
    let n_pub = p.block_dims.len();

    // classify rows: a row whose coefficient matrices are all (numerically)
    // zero is checked against its rhs and dropped
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped: Vec<(usize, f64)> = Vec::new();
    let mut norms: Vec<f64> = Vec::new();
    for (i, con) in p.constraints.iter().enumerate() {
        let mut norm2 = 0.0;
        for mat in con.mats.iter().flatten() {
            norm2 += mat.dot(mat);
        }
        let norm = norm2.sqrt();
        if norm <= 1e-12 {
            let tol = 1e-9 * (1.0 + con.rhs.abs());
            let consistent = match con.sense {
                Sense::Eq => con.rhs.abs() <= tol,
                Sense::Le => con.rhs >= -tol,
                Sense::Ge => con.rhs <= tol,
            };
            if !consistent {
                return Lowered::TriviallyInfeasible;
            }
            let slack = match con.sense {
                Sense::Eq => 0.0,
                Sense::Le => con.rhs.max(0.0),
                Sense::Ge => (-con.rhs).max(0.0),
            };
            dropped.push((i, slack));
        } else {
            kept.push(i);
            norms.push(norm);
        }
    }

    let m = kept.len();
    let mut dims = p.block_dims.clone();
    let mut slack_block = vec![None; m];
    let mut slack_sign = vec![0.0; m];
    for (j, &i) in kept.iter().enumerate() {
        match p.constraints[i].sense {
            Sense::Eq => {}
            Sense::Le => {
                slack_block[j] = Some(dims.len());
                slack_sign[j] = 1.0;
                dims.push(1);
            }
            Sense::Ge => {
                slack_block[j] = Some(dims.len());
                slack_sign[j] = -1.0;
                dims.push(1);
            }
        }
    }

    // internal objective is the negated public objective (min form)
    let mut c_norm2 = 0.0;
    for mat in p.objective.iter().flatten() {
        c_norm2 += mat.dot(mat);
    }
    let c_scale = c_norm2.sqrt().max(1e-12);
    let mut c = blocks_zeros(&dims);
    for (k, mat) in p.objective.iter().enumerate() {
        if let Some(mat) = mat {
            let mut mm = mat.clone();
            symmetrize(&mut mm);
            c[k] = mm * (-1.0 / c_scale);
        }
    }

    let mut a = Vec::with_capacity(m);
    let mut b = DVector::zeros(m);
    let mut row_scale = vec![1.0; m];
    for (j, &i) in kept.iter().enumerate() {
        let con = &p.constraints[i];
        let s = norms[j];
        row_scale[j] = s;
        let mut row: Vec<CoeffRepr> = Vec::with_capacity(dims.len());
        for (k, mat) in con.mats.iter().enumerate() {
            match mat {
                None => row.push(CoeffRepr::Zero),
                Some(mat) => {
                    let mut mm = mat.clone();
                    symmetrize(&mut mm);
                    mm /= s;
                    row.push(CoeffRepr::from_mat(&mm, p.block_dims[k]));
                }
            }
        }
        // slack blocks
        for _ in n_pub..dims.len() {
            row.push(CoeffRepr::Zero);
        }
        if let Some(sb) = slack_block[j] {
            row[sb] = CoeffRepr::Sparse(vec![(0, 0, slack_sign[j] / s)]);
        }
        b[j] = con.rhs / s;
        a.push(row);
    }

    Lowered::Ok(Internal {
        dims,
        c,
        a,
        b,
        row_scale,
        c_scale,
        n_public_blocks: n_pub,
        slack_block,
        row_of: kept,
        dropped,
    })
}

impl Internal {
    fn apply_a(&self, x: &Blocks) -> DVector<f64> {
        let mut out = DVector::zeros(self.a.len());
        for (i, row) in self.a.iter().enumerate() {
            out[i] = row
                .iter()
                .zip(x.iter())
                .map(|(a, xb)| a.dot(xb))
                .sum();
        }
        out
    }

    fn apply_at(&self, y: &DVector<f64>) -> Blocks {
        let mut out = blocks_zeros(&self.dims);
        for (i, row) in self.a.iter().enumerate() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for (k, a) in row.iter().enumerate() {
                a.add_scaled_to(&mut out[k], yi);
            }
        }
        out
    }
}

/// Per-block Nesterov-Todd scaling data.
///
/// With X = L L', M = L' S L = Q diag(lam) Q', the scaling factor is
/// R = L Q diag(lam^{-1/4}); then R^{-1} X R^{-T} = R' S R = diag(sqrt(lam))
/// is the common scaled point, and W = R R' satisfies W S W = X.
struct NtBlock {
    r: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    /// Eigenvalues of the scaled point V (sqrt of eig(L'SL)).
    lam_v: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<NtBlock> {
    let n = x.nrows();
    debug_assert!(x.iter().all(|v| v.is_finite()));
    if n == 1 {
        // scalar cone: W = sqrt(x/s), V = sqrt(x s)
        let (xv, sv) = (x[(0, 0)], s[(0, 0)]);
        if xv <= 0.0 || sv <= 0.0 {
            return None;
        }
        let w = (xv / sv).sqrt();
        return Some(NtBlock {
            r: DMatrix::from_element(1, 1, w.sqrt()),
            r_inv: DMatrix::from_element(1, 1, 1.0 / w.sqrt()),
            w: DMatrix::from_element(1, 1, w),
            lam_v: DVector::from_element(1, (xv * sv).sqrt()),
        });
    }
    let chol = nalgebra::Cholesky::new(x.clone())?;
    let l = chol.l();
    let mut m = l.transpose() * s * &l;
    symmetrize(&mut m);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut lam = eig.eigenvalues;
    for v in lam.iter_mut() {
        if *v <= 0.0 {
            return None;
        }
    }
    let q = eig.eigenvectors;
    // R = L Q lam^{-1/4}
    let mut r = &l * &q;
    for j in 0..n {
        let f = lam[j].powf(-0.25);
        r.column_mut(j).scale_mut(f);
    }
    // R^{-1} = lam^{1/4} Q' L^{-1}
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut r_inv = q.transpose() * l_inv;
    for i in 0..n {
        let f = lam[i].powf(0.25);
        r_inv.row_mut(i).scale_mut(f);
    }
    let mut w = &r * r.transpose();
    symmetrize(&mut w);
    let lam_v = lam.map(|v| v.sqrt());
    Some(NtBlock { r, r_inv, w, lam_v })
}

/// Largest step alpha in (0, cap] with X + alpha*D >= 0, computed from the
/// spectrum of Lam_v^{-1/2} D_hat Lam_v^{-1/2} in scaled coordinates.
fn max_step_scaled(d_hat: &DMatrix<f64>, lam_v: &DVector<f64>, cap: f64) -> f64 {
    let n = d_hat.nrows();
    if n == 1 {
        let g = d_hat[(0, 0)] / lam_v[0];
        return if g >= -1e-14 { cap } else { cap.min(-1.0 / g) };
    }
    let mut g = d_hat.clone();
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] /= (lam_v[i] * lam_v[j]).sqrt();
        }
    }
    symmetrize(&mut g);
    let eigs = g.symmetric_eigenvalues();
    let min = eigs.min();
    if min >= -1e-14 {
        cap
    } else {
        cap.min(-1.0 / min)
    }
}

struct Direction {
    dx: Blocks,
    dy: DVector<f64>,
    ds: Blocks,
    dtau: f64,
    dkappa: f64,
}

struct KktContext<'a> {
    internal: &'a Internal,
    nt: Vec<NtBlock>,
    schur: DMatrix<f64>,
    schur_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// y2 solves M y2 = b + A(WCW); shared by predictor and corrector.
    y2: DVector<f64>,
    x2: Blocks,
    s2: Blocks,
    bty2: f64,
    ctx2: f64,
}

fn build_kkt<'a>(internal: &'a Internal, x: &Blocks, s: &Blocks) -> Option<KktContext<'a>> {
    let m = internal.a.len();
    let mut nt = Vec::with_capacity(internal.dims.len());
    for (xb, sb) in x.iter().zip(s.iter()) {
        nt.push(nt_scaling(xb, sb)?);
    }

    // Schur complement M_ij = <A_i, W A_j W>
    let mut schur: DMatrix<f64> = DMatrix::zeros(m, m);
    for j in 0..m {
        for (k, a_jk) in internal.a[j].iter().enumerate() {
            if let Some(b_jk) = a_jk.congruence(&nt[k].w) {
                for i in j..m {
                    schur[(i, j)] += internal.a[i][k].dot(&b_jk);
                }
            }
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            schur[(i, j)] = schur[(j, i)];
        }
    }

    // factor with escalating diagonal regularization
    let base = schur.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    let chol = loop {
        let mut mm = schur.clone();
        if reg > 0.0 {
            for i in 0..m {
                mm[(i, i)] += reg * base;
            }
        }
        match nalgebra::Cholesky::new(mm) {
            Some(c) => break c,
            None => {
                reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
                if reg > 1e-4 {
                    return None;
                }
            }
        }
    };

    let wcw: Blocks = internal
        .dims
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let mut out = DMatrix::zeros(d, d);
            if internal.c[k].amax() != 0.0 {
                out = &nt[k].w * &internal.c[k] * &nt[k].w;
                symmetrize(&mut out);
            }
            out
        })
        .collect();

    let refine = |chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
                  schur: &DMatrix<f64>,
                  rhs: &DVector<f64>|
     -> DVector<f64> {
        let mut y = chol.solve(rhs);
        // one step of iterative refinement for endgame accuracy
        let r = rhs - schur * &y;
        y += chol.solve(&r);
        y
    };
    let h = &internal.b + internal.apply_a(&wcw);
    let y2 = refine(&chol, &schur, &h);
    let at_y2 = internal.apply_at(&y2);
    // X2 = -WCW + W A*(y2) W ; S2 = C - A*(y2)
    let mut x2 = blocks_zeros(&internal.dims);
    let mut s2 = blocks_zeros(&internal.dims);
    for k in 0..internal.dims.len() {
        let mut t = &nt[k].w * &at_y2[k] * &nt[k].w;
        symmetrize(&mut t);
        x2[k] = t - &wcw[k];
        s2[k] = &internal.c[k] - &at_y2[k];
    }
    let bty2 = internal.b.dot(&y2);
    let ctx2 = blocks_dot(&internal.c, &x2);

    Some(KktContext {
        internal,
        nt,
        schur: schur.clone(),
        schur_chol: chol,
        y2,
        x2,
        s2,
        bty2,
        ctx2,
    })
}

impl KktContext<'_> {
    /// Solve the HSDE Newton system for a given complementarity right-hand
    /// side `r_c` (block form) and tau-kappa residual `r_tk`, with full
    /// linear residuals (r1, r2, r3).
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        r1: &DVector<f64>,
        r2: &Blocks,
        r3: f64,
        r_c: &Blocks,
        r_tk: f64,
        tau: f64,
        kappa: f64,
    ) -> Direction {
        let internal = self.internal;
        let nb = internal.dims.len();
        // g = -r1 - A(Rc) + A(W r2 W)
        let mut rc_minus_wr2w = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut wr2w = &self.nt[k].w * &r2[k] * &self.nt[k].w;
            symmetrize(&mut wr2w);
            rc_minus_wr2w.push(&r_c[k] - wr2w);
        }
        let g = -r1 - internal.apply_a(&rc_minus_wr2w);
        let mut y1 = self.schur_chol.solve(&g);
        let resid = &g - &self.schur * &y1;
        y1 += self.schur_chol.solve(&resid);
        let at_y1 = internal.apply_at(&y1);
        let mut x1 = Vec::with_capacity(nb);
        let mut s1 = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut t = &self.nt[k].w * &at_y1[k] * &self.nt[k].w;
            symmetrize(&mut t);
            x1.push(&rc_minus_wr2w[k] + t);
            s1.push(&r2[k] - &at_y1[k]);
        }
        let bty1 = internal.b.dot(&y1);
        let ctx1 = blocks_dot(&internal.c, &x1);

        let den = self.bty2 - self.ctx2 + kappa / tau;
        let num = r_tk / tau - r3 - bty1 + ctx1;
        let dtau = if den.abs() > 1e-300 { num / den } else { 0.0 };

        let mut dx = x1;
        let mut ds = s1;
        for k in 0..nb {
            dx[k] += &self.x2[k] * dtau;
            ds[k] += &self.s2[k] * dtau;
            symmetrize(&mut dx[k]);
            symmetrize(&mut ds[k]);
        }
        let dy = &y1 + &self.y2 * dtau;
        let dkappa = (r_tk - kappa * dtau) / tau;
        Direction {
            dx,
            dy,
            ds,
            dtau,
            dkappa,
        }
    }

    fn max_step(
        &self,
        x_hat_dirs: &[DMatrix<f64>],
        s_hat_dirs: &[DMatrix<f64>],
        dtau: f64,
        dkappa: f64,
        tau: f64,
        kappa: f64,
    ) -> f64 {
        let mut alpha = 1.0;
        for (k, nt) in self.nt.iter().enumerate() {
            alpha = max_step_scaled(&x_hat_dirs[k], &nt.lam_v, alpha);
            alpha = max_step_scaled(&s_hat_dirs[k], &nt.lam_v, alpha);
        }
        if dtau < 0.0 {
            alpha = alpha.min(-tau / dtau);
        }
        if dkappa < 0.0 {
            alpha = alpha.min(-kappa / dkappa);
        }
        alpha
    }

    fn scale_x(&self, dx: &Blocks) -> Vec<DMatrix<f64>> {
        self.nt
            .iter()
            .zip(dx.iter())
            .map(|(nt, d)| {
                let mut t = &nt.r_inv * d * nt.r_inv.transpose();
                symmetrize(&mut t);
                t
            })
            .collect()
    }

    fn scale_s(&self, ds: &Blocks) -> Vec<DMatrix<f64>> {
        self.nt
            .iter()
            .zip(ds.iter())
            .map(|(nt, d)| {
                let mut t = nt.r.transpose() * d * &nt.r;
                symmetrize(&mut t);
                t
            })
            .collect()
    }
}

/// Solve a public maximize-form problem. Problem data must pass
/// [`SdpProblem::validate`].
pub fn solve(p: &SdpProblem, cfg: &SolverConfig) -> Result<SdpSolution, crate::problem::ProblemError> {
    p.validate()?;
    match lower_to_internal(p) {
        Lowered::Ok(internal) => Ok(solve_internal(p, &internal, cfg)),
        Lowered::TriviallyInfeasible => Ok(SdpSolution {
            status: SolveStatus::Infeasible,
            blocks: p.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            slacks: vec![0.0; p.constraints.len()],
            y: DVector::zeros(p.constraints.len()),
            dual_blocks: p.block_dims.iter().map(|&d| DMatrix::zeros(d, d)).collect(),
            objective: 0.0,
            dual_objective: 0.0,
            residuals: Residuals {
                primal: f64::INFINITY,
                dual: f64::INFINITY,
                gap: f64::INFINITY,
                infeasibility: 0.0,
            },
            iterations: 0,
        }),
    }
}

fn solve_internal(p: &SdpProblem, internal: &Internal, cfg: &SolverConfig) -> SdpSolution {
    let dims = &internal.dims;
    let nu: usize = dims.iter().sum();
    let m = internal.a.len();

    let mut x = blocks_identity(dims);
    let mut s = blocks_identity(dims);
    let mut y: DVector<f64> = DVector::zeros(m);
    let mut tau = 1.0_f64;
    let mut kappa = 1.0_f64;

    let norm_b = internal.b.norm();
    let norm_c = blocks_norm(&internal.c);
    let tol = cfg.tol;
    let tol_infeas = tol.max(1e-9);

    let mut status = SolveStatus::SlowProgress;
    let mut iterations = 0;
    let mut best_res = Residuals {
        primal: f64::INFINITY,
        dual: f64::INFINITY,
        gap: f64::INFINITY,
        infeasibility: f64::INFINITY,
    };
    // best de-homogenized iterate seen so far, by worst residual
    let mut best_point: Option<(Blocks, DVector<f64>, Blocks, f64, f64)> = None;
    let mut best_worst = f64::INFINITY;
    let mut small_steps = 0;
    let mut drift_steps = 0;

    for iter in 0..cfg.max_iter {
        iterations = iter;

        // the embedding is homogeneous: renormalize to tau = 1 to keep the
        // iterate at the natural problem scale
        if tau > 0.0 && (tau > 4.0 || tau < 0.25) {
            let inv = 1.0 / tau;
            for b in x.iter_mut() {
                *b *= inv;
            }
            for b in s.iter_mut() {
                *b *= inv;
            }
            y *= inv;
            kappa *= inv;
            tau = 1.0;
        }

        // residuals of the embedding
        let ax = internal.apply_a(&x);
        let aty = internal.apply_at(&y);
        let r1 = &ax - &internal.b * tau;
        let mut r2 = Vec::with_capacity(dims.len());
        for k in 0..dims.len() {
            r2.push(&internal.c[k] * tau - &aty[k] - &s[k]);
        }
        let ctx = blocks_dot(&internal.c, &x);
        let bty = internal.b.dot(&y);
        let r3 = bty - ctx - kappa;

        // de-homogenized convergence test
        let rel_p = (&ax / tau - &internal.b).norm() / (1.0 + norm_b);
        let mut dual_res = 0.0;
        for k in 0..dims.len() {
            dual_res += (&aty[k] / tau + &s[k] / tau - &internal.c[k]).norm_squared();
        }
        let rel_d = dual_res.sqrt() / (1.0 + norm_c);
        let pobj = ctx / tau;
        let dobj = bty / tau;
        let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs().max(dobj.abs()));
        let worst = rel_p.max(rel_d).max(rel_gap);
        if worst < best_worst {
            best_worst = worst;
            best_res = Residuals {
                primal: rel_p,
                dual: rel_d,
                gap: rel_gap,
                infeasibility: f64::INFINITY,
            };
            best_point = Some((x.clone(), y.clone(), s.clone(), tau, kappa));
        }
        if cfg.verbose {
            eprintln!(
                "iter {iter:3}: rel_p {rel_p:.2e} rel_d {rel_d:.2e} gap {rel_gap:.2e} tau {tau:.3e} kappa {kappa:.3e}"
            );
        }
        if rel_p <= tol && rel_d <= tol && rel_gap <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        // residuals persistently drifting away from the best iterate: no
        // further progress is attainable at this precision
        if worst > 20.0 * best_worst && best_worst < 100.0 * tol {
            drift_steps += 1;
            if drift_steps >= 4 {
                break;
            }
        } else {
            drift_steps = 0;
        }

        // infeasibility certificates
        if bty > 0.0 {
            let mut cert = 0.0;
            for k in 0..dims.len() {
                cert += (&aty[k] + &s[k]).norm_squared();
            }
            let cert = cert.sqrt() / bty;
            if cert <= tol_infeas && tau <= 1e-3 * kappa.max(1e-10) {
                status = SolveStatus::Infeasible;
                best_res.infeasibility = cert;
                break;
            }
        }
        if ctx < 0.0 {
            let cert = ax.norm() / (-ctx);
            if cert <= tol_infeas && tau <= 1e-3 * kappa.max(1e-10) {
                status = SolveStatus::Unbounded;
                best_res.infeasibility = cert;
                break;
            }
        }

        let mu = (blocks_dot(&x, &s) + tau * kappa) / (nu as f64 + 1.0);

        let Some(kkt) = build_kkt(internal, &x, &s) else {
            if cfg.verbose {
                eprintln!("        kkt assembly failed (scaling or factorization)");
            }
            status = SolveStatus::SlowProgress;
            break;
        };

        // predictor: Rc = -X, r_tk = -tau*kappa
        let rc_aff: Blocks = x.iter().map(|b| -b).collect();
        let aff = kkt.direction(&r1, &r2, r3, &rc_aff, -tau * kappa, tau, kappa);
        let dx_hat_aff = kkt.scale_x(&aff.dx);
        let ds_hat_aff = kkt.scale_s(&aff.ds);
        let alpha_aff = kkt.max_step(
            &dx_hat_aff,
            &ds_hat_aff,
            aff.dtau,
            aff.dkappa,
            tau,
            kappa,
        );

        let mut mu_aff = (tau + alpha_aff * aff.dtau) * (kappa + alpha_aff * aff.dkappa);
        for k in 0..dims.len() {
            let xa = &x[k] + &aff.dx[k] * alpha_aff;
            let sa = &s[k] + &aff.ds[k] * alpha_aff;
            mu_aff += xa.dot(&sa);
        }
        mu_aff /= nu as f64 + 1.0;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3).max(1e-12);

        // corrector in scaled coordinates:
        // Rc_hat = Lv^{-1}( sigma*mu*I - V^2 - symm(dXh dSh) )
        let mut rc = Vec::with_capacity(dims.len());
        for k in 0..dims.len() {
            let nt = &kkt.nt[k];
            let n = dims[k];
            let prod = &dx_hat_aff[k] * &ds_hat_aff[k];
            let mut arg = DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let sym = 0.5 * (prod[(i, j)] + prod[(j, i)]);
                    let mut v = -sym;
                    if i == j {
                        v += sigma * mu - nt.lam_v[i] * nt.lam_v[i];
                    }
                    arg[(i, j)] = 2.0 * v / (nt.lam_v[i] + nt.lam_v[j]);
                }
            }
            let mut out = &nt.r * arg * nt.r.transpose();
            symmetrize(&mut out);
            rc.push(out);
        }
        let r_tk = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
        let mut dir = kkt.direction(&r1, &r2, r3, &rc, r_tk, tau, kappa);

        let mut dx_hat = kkt.scale_x(&dir.dx);
        let mut ds_hat = kkt.scale_s(&dir.ds);
        let mut alpha_max = kkt.max_step(&dx_hat, &ds_hat, dir.dtau, dir.dkappa, tau, kappa);
        if alpha_max < 1e-4 {
            // corrector blocked: fall back to a pure centering step
            let mut rc_center = Vec::with_capacity(dims.len());
            for k in 0..dims.len() {
                let nt = &kkt.nt[k];
                let n = dims[k];
                let mut arg = DMatrix::zeros(n, n);
                for i in 0..n {
                    arg[(i, i)] = (mu - nt.lam_v[i] * nt.lam_v[i]) / nt.lam_v[i];
                }
                let mut out = &nt.r * arg * nt.r.transpose();
                symmetrize(&mut out);
                rc_center.push(out);
            }
            let dir_c = kkt.direction(&r1, &r2, r3, &rc_center, mu - tau * kappa, tau, kappa);
            let dxh = kkt.scale_x(&dir_c.dx);
            let dsh = kkt.scale_s(&dir_c.ds);
            let am = kkt.max_step(&dxh, &dsh, dir_c.dtau, dir_c.dkappa, tau, kappa);
            if am > alpha_max {
                dir = dir_c;
                dx_hat = dxh;
                ds_hat = dsh;
                alpha_max = am;
            }
        }
        let _ = (&dx_hat, &ds_hat);
        let mut alpha = (0.99 * alpha_max).min(1.0);
        // scaled-space spectra can be slightly optimistic near the end of
        // the run; back the step off until both cones verifiably hold
        for _ in 0..40 {
            let ok = x
                .iter()
                .zip(dir.dx.iter())
                .chain(s.iter().zip(dir.ds.iter()))
                .all(|(b, db)| {
                    let cand = b + db * alpha;
                    if cand.nrows() == 1 {
                        cand[(0, 0)] > 0.0
                    } else {
                        nalgebra::Cholesky::new(cand).is_some()
                    }
                })
                && tau + alpha * dir.dtau > 0.0
                && kappa + alpha * dir.dkappa > 0.0;
            if ok {
                break;
            }
            alpha *= 0.8;
        }

        if cfg.verbose {
            eprintln!("        sigma {sigma:.2e} alpha {alpha:.3e} mu {mu:.3e}");
        }
        if alpha < 1e-8 {
            small_steps += 1;
            if small_steps >= 3 {
                status = SolveStatus::SlowProgress;
                break;
            }
        } else {
            small_steps = 0;
        }

        blocks_axpy(&mut x, alpha, &dir.dx);
        blocks_axpy(&mut s, alpha, &dir.ds);
        y += &dir.dy * alpha;
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        iterations = iter + 1;
    }

    // report the best iterate seen rather than wherever the loop stopped
    if !matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
        if let Some((bx, by, bs, btau, bkappa)) = best_point {
            x = bx;
            y = by;
            s = bs;
            tau = btau;
            kappa = bkappa;
            let _ = kappa;
            if best_worst <= tol {
                status = SolveStatus::Optimal;
            }
        }
    }
    assemble_solution(p, internal, status, x, y, s, tau, best_res, iterations)
}

#[allow(clippy::too_many_arguments)]
fn assemble_solution(
    p: &SdpProblem,
    internal: &Internal,
    status: SolveStatus,
    x: Blocks,
    y: DVector<f64>,
    s: Blocks,
    tau: f64,
    residuals: Residuals,
    iterations: usize,
) -> SdpSolution {
    let infeasible = matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded);
    // For certificates keep the raw ray; otherwise de-homogenize.
    let scale = if infeasible { 1.0 } else { 1.0 / tau.max(1e-300) };
    let n_pub = internal.n_public_blocks;

    let m_pub = p.constraints.len();
    let blocks: Vec<DMatrix<f64>> = x[..n_pub].iter().map(|b| b * scale).collect();
    let mut slacks = vec![0.0; m_pub];
    for (j, sb) in internal.slack_block.iter().enumerate() {
        if let Some(k) = sb {
            slacks[internal.row_of[j]] = x[*k][(0, 0)] * scale;
        }
    }
    for &(i, s) in &internal.dropped {
        slacks[i] = s;
    }
    // y_pub = -y_int * c_scale / row_scale; dropped rows carry zero duals
    let mut y_pub = DVector::zeros(m_pub);
    for j in 0..internal.a.len() {
        y_pub[internal.row_of[j]] = -y[j] * scale * internal.c_scale / internal.row_scale[j];
    }
    let dual_blocks: Vec<DMatrix<f64>> = s[..n_pub]
        .iter()
        .map(|b| b * (scale * internal.c_scale))
        .collect();

    let mut objective = 0.0;
    for (k, c) in p.objective.iter().enumerate() {
        if let Some(c) = c {
            objective += c.dot(&blocks[k]);
        }
    }
    let mut dual_objective = 0.0;
    for (i, con) in p.constraints.iter().enumerate() {
        dual_objective += con.rhs * y_pub[i];
    }

    SdpSolution {
        status,
        blocks,
        slacks,
        y: y_pub,
        dual_blocks,
        objective,
        dual_objective,
        residuals,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn max_eigenvalue_instance() {
        // maximize tr(diag(1,2) X) s.t. tr(X) = 1, X >= 0  -> 2 at X = diag(0,1)
        let mut p = SdpProblem::new(vec![2]);
        p.set_objective(0, mat2(1.0, 0.0, 0.0, 2.0));
        p.add_constraint(vec![(0, DMatrix::identity(2, 2))], Sense::Eq, 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-6, "obj = {}", sol.objective);
        assert!((sol.blocks[0][(1, 1)] - 1.0).abs() < 1e-5);
        assert!(sol.blocks[0][(0, 0)].abs() < 1e-5);
    }

    #[test]
    fn psd_boundary_instance() {
        // minimize t s.t. [[t,1],[1,t]] >= 0  -> t = 1 at X = [[1,1],[1,1]].
        // Encoded on the matrix variable: x11 = x22 (= t), x12 = 1,
        // objective maximize -x11.
        let mut p = SdpProblem::new(vec![2]);
        p.set_objective(0, mat2(-1.0, 0.0, 0.0, 0.0));
        p.add_constraint(vec![(0, mat2(1.0, 0.0, 0.0, -1.0))], Sense::Eq, 0.0);
        p.add_constraint(vec![(0, mat2(0.0, 0.5, 0.5, 0.0))], Sense::Eq, 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-6, "obj = {}", sol.objective);
        assert!((sol.blocks[0][(0, 0)] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn scalar_bounds_and_slacks() {
        // maximize x s.t. x <= 3, x >= 1 on a 1x1 block
        let mut p = SdpProblem::new(vec![1]);
        p.set_objective(0, DMatrix::from_element(1, 1, 1.0));
        p.add_constraint(vec![(0, DMatrix::from_element(1, 1, 1.0))], Sense::Le, 3.0);
        p.add_constraint(vec![(0, DMatrix::from_element(1, 1, 1.0))], Sense::Ge, 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-6);
        assert!(sol.slacks[0].abs() < 1e-5); // upper bound tight
        assert!((sol.slacks[1] - 2.0).abs() < 1e-5);
        // multiplier on the active <= row is nonnegative and ~1
        assert!((sol.y[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn infeasible_scalar() {
        // x >= 2 and x <= 1 is infeasible
        let mut p = SdpProblem::new(vec![1]);
        p.set_objective(0, DMatrix::from_element(1, 1, 1.0));
        p.add_constraint(vec![(0, DMatrix::from_element(1, 1, 1.0))], Sense::Ge, 2.0);
        p.add_constraint(vec![(0, DMatrix::from_element(1, 1, 1.0))], Sense::Le, 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.residuals.infeasibility < 1e-7);
    }

    #[test]
    fn unbounded_scalar() {
        // maximize x, no constraints binding it from above
        let mut p = SdpProblem::new(vec![1]);
        p.set_objective(0, DMatrix::from_element(1, 1, 1.0));
        p.add_constraint(vec![(0, DMatrix::from_element(1, 1, 1.0))], Sense::Ge, 1.0);
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn deterministic_repeat() {
        let mut p = SdpProblem::new(vec![2]);
        p.set_objective(0, mat2(1.0, 0.25, 0.25, 2.0));
        p.add_constraint(vec![(0, DMatrix::identity(2, 2))], Sense::Eq, 1.0);
        let a = solve(&p, &SolverConfig::default()).unwrap();
        let b = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.blocks[0], b.blocks[0]);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn weak_duality_on_solution() {
        let mut p = SdpProblem::new(vec![3]);
        let c = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.2, -0.1, 0.2, -0.5, 0.3, -0.1, 0.3, 2.0],
        );
        p.set_objective(0, c);
        p.add_constraint(vec![(0, DMatrix::identity(3, 3))], Sense::Le, 2.0);
        // weak duality at 1e-9 needs the residual cross terms below that
        // scale, hence the tight tolerance
        let cfg = SolverConfig {
            tol: 1e-10,
            ..Default::default()
        };
        let sol = solve(&p, &cfg).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(
            sol.objective <= sol.dual_objective + 1e-9 * (1.0 + sol.objective.abs()),
            "pobj {} dobj {}",
            sol.objective,
            sol.dual_objective
        );
    }
}
