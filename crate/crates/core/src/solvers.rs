//! Conjugate gradients, Nyström-preconditioned CG and block PCG for
//! multiple right-hand sides.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::symmetrize;
use crate::operator::{regularize, LinearOperator, RegularizedOperator};
use crate::precond::{NystromPreconditioner, Preconditioner};

pub const DEFAULT_MAX_ITER: usize = 500;

/// Residual threshold. `Relative(η)` stops at `‖r‖₂ <= η‖b‖₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Absolute(f64),
    Relative(f64),
}

impl Tolerance {
    pub fn threshold(self, b_norm: f64) -> f64 {
        match self {
            Self::Absolute(eta) => eta,
            Self::Relative(eta) => eta * b_norm,
        }
    }

    fn value(self) -> f64 {
        match self {
            Self::Absolute(eta) | Self::Relative(eta) => eta,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub tolerance: Tolerance,
    pub max_iter: usize,
    /// Keep every iterate `x_t` in the report (memory O(n·t)).
    pub record_iterates: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tolerance: Tolerance::Absolute(1e-10),
            max_iter: DEFAULT_MAX_ITER,
            record_iterates: false,
        }
    }
}

impl SolveOptions {
    pub fn absolute(eta: f64) -> Self {
        Self {
            tolerance: Tolerance::Absolute(eta),
            ..Self::default()
        }
    }

    pub fn relative(eta: f64) -> Self {
        Self {
            tolerance: Tolerance::Relative(eta),
            ..Self::default()
        }
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn record_iterates(mut self) -> Self {
        self.record_iterates = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let eta = self.tolerance.value();
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(invalid(format!(
                "tolerance must be finite and > 0, got {eta}"
            )));
        }
        Ok(())
    }
}

/// Outcome of a single-RHS (P)CG run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    /// `‖r_t‖₂` for `t = 0..=iterations`.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// One product with `A_μ` per iteration plus the initial residual.
    pub matvec_count: usize,
    pub wall_time: f64,
    pub tolerance: Tolerance,
    /// Absolute residual threshold actually applied.
    pub threshold: f64,
    /// `x_0, …, x_t` when requested.
    pub iterates: Option<Vec<DVector<f64>>>,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        *self.residual_history.last().unwrap()
    }
}

/// Unpreconditioned CG on `A_μ x = b`.
pub fn cg(
    op_mu: &RegularizedOperator<'_>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    pcg(
        op_mu,
        b,
        x0,
        &NystromPreconditioner::identity(op_mu.dim()),
        opts,
    )
}

/// Nyström PCG on `(A + μI)x = b`. `precond` must have been built for the
/// same `μ`; the rank-0 preconditioner is accepted for any shift.
pub fn nystrom_pcg(
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    mu: f64,
    precond: &NystromPreconditioner,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if precond.rank() > 0 && precond.mu() != mu {
        return Err(invalid(format!(
            "preconditioner built for mu = {}, system uses mu = {mu}",
            precond.mu()
        )));
    }
    let op_mu = regularize(op, mu)?;
    pcg(&op_mu, b, x0, precond, opts)
}

/// Left-preconditioned CG on an spd operator. One product with the
/// operator and one preconditioner application per iteration.
pub fn pcg(
    op_mu: &dyn LinearOperator,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    precond: &dyn Preconditioner,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let n = op_mu.dim();
    check_dim(n, b.len())?;
    check_dim(n, x0.len())?;
    check_dim(n, precond.dim())?;
    if !b.iter().chain(x0.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("right-hand side or initial guess"));
    }

    let start = Instant::now();
    let threshold = opts.tolerance.threshold(b.norm());
    let mut x = x0.clone();
    let mut r = b - op_mu.apply(&x);
    let mut history = vec![r.norm()];
    let mut iterates = opts.record_iterates.then(|| vec![x.clone()]);
    let mut converged = history[0] <= threshold;
    let mut iterations = 0;

    if !converged {
        let mut z = precond.apply_inverse(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        while iterations < opts.max_iter {
            iterations += 1;
            let v = op_mu.apply(&p);
            let alpha = rz / p.dot(&v);
            if !alpha.is_finite() {
                return Err(Error::Diverged {
                    iteration: iterations,
                    quantity: "step size",
                    residual_history: history,
                });
            }
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &v, 1.0);
            let rnorm = r.norm();
            history.push(rnorm);
            if let Some(its) = iterates.as_mut() {
                its.push(x.clone());
            }
            if !rnorm.is_finite() {
                return Err(Error::Diverged {
                    iteration: iterations,
                    quantity: "residual",
                    residual_history: history,
                });
            }
            if rnorm <= threshold {
                converged = true;
                break;
            }
            z = precond.apply_inverse(&r);
            let rz_next = r.dot(&z);
            let beta = rz_next / rz;
            p = &z + &p * beta;
            rz = rz_next;
        }
    }

    Ok(SolveReport {
        solution: x,
        iterations,
        residual_history: history,
        converged,
        matvec_count: iterations + 1,
        wall_time: start.elapsed().as_secs_f64(),
        tolerance: opts.tolerance,
        threshold,
        iterates,
    })
}

/// Outcome of a block PCG run.
#[derive(Debug, Clone)]
pub struct BlockSolveReport {
    /// `n × s`, column `j` solves for column `j` of the right-hand side.
    pub solutions: DMatrix<f64>,
    /// Per original column, `‖b_j - A_μ x_j‖₂` for `t = 0..=iterations`.
    pub residual_histories: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Right-hand-side columns found linearly dependent on earlier ones.
    pub deflated: Vec<usize>,
    /// Iterations where a Gram solve fell back to a pseudo-inverse.
    pub pinv_fallbacks: usize,
    pub wall_time: f64,
    pub thresholds: Vec<f64>,
}

/// Relative column-norm cutoff for dropping dependent right-hand sides.
const DEFLATION_TOL: f64 = 1e-12;

/// Deflating modified Gram-Schmidt: `b = q s` with orthonormal `q` (n×r)
/// and coefficients `s` (r×s). Returns the dropped column indices.
fn orthonormalize_rhs(b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let (n, s) = b.shape();
    let scale = b.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut coeffs: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut deflated = Vec::new();
    for j in 0..s {
        let mut w = b.column(j).into_owned();
        let mut c = vec![0.0; basis.len()];
        for _ in 0..2 {
            for (k, q) in basis.iter().enumerate() {
                let proj = q.dot(&w);
                c[k] += proj;
                w.axpy(-proj, q, 1.0);
            }
        }
        let norm = w.norm();
        let mut entries: Vec<(usize, f64)> = c.into_iter().enumerate().collect();
        if scale == 0.0 || norm <= DEFLATION_TOL * scale {
            deflated.push(j);
        } else {
            entries.push((basis.len(), norm));
            basis.push(w / norm);
        }
        coeffs.push(entries);
    }
    let r = basis.len();
    let q = if r == 0 {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    let mut smat = DMatrix::zeros(r, s);
    for (j, entries) in coeffs.into_iter().enumerate() {
        for (k, v) in entries {
            smat[(k, j)] = v;
        }
    }
    (q, smat, deflated)
}

/// Solves `m x = rhs` for a small symmetric `m`; falls back to a
/// truncated pseudo-inverse when `m` is not numerically positive definite.
fn gram_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>, fallbacks: &mut usize) -> DMatrix<f64> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    if let Some(chol) = sym.clone().cholesky() {
        let out = chol.solve(rhs);
        if out.iter().all(|v| v.is_finite()) {
            return out;
        }
    }
    *fallbacks += 1;
    let svd = sym.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = 10.0 * m.nrows() as f64 * f64::EPSILON * smax;
    let pinv = svd
        .pseudo_inverse(cutoff.max(f64::MIN_POSITIVE))
        .expect("U and V were computed");
    pinv * rhs
}

/// Block Nyström PCG for `(A + μI)X = B`.
///
/// The starting block residual is orthonormalized once (dependent columns
/// deflated); the block recurrence itself runs without re-orthogonalization.
pub fn block_nystrom_pcg(
    op: &dyn LinearOperator,
    b: &DMatrix<f64>,
    mu: f64,
    precond: &NystromPreconditioner,
    opts: &SolveOptions,
) -> Result<BlockSolveReport> {
    opts.validate()?;
    if precond.rank() > 0 && precond.mu() != mu {
        return Err(invalid(format!(
            "preconditioner built for mu = {}, system uses mu = {mu}",
            precond.mu()
        )));
    }
    let op_mu = regularize(op, mu)?;
    let n = op.dim();
    check_dim(n, b.nrows())?;
    check_dim(n, precond.dim())?;
    if b.ncols() == 0 {
        return Err(invalid("block solve needs at least one right-hand side"));
    }
    if !b.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("right-hand side block"));
    }

    let start = Instant::now();
    let s = b.ncols();
    let thresholds: Vec<f64> = b
        .column_iter()
        .map(|c| opts.tolerance.threshold(c.norm()))
        .collect();
    let (q, coeff, deflated) = orthonormalize_rhs(b);
    let mut histories: Vec<Vec<f64>> = b.column_iter().map(|c| vec![c.norm()]).collect();
    let all_below = |hist: &[Vec<f64>]| {
        hist.iter()
            .zip(&thresholds)
            .all(|(h, t)| *h.last().unwrap() <= *t)
    };

    let mut y = DMatrix::zeros(n, q.ncols());
    let mut iterations = 0;
    let mut fallbacks = 0;
    let mut converged = all_below(&histories);

    if q.ncols() > 0 && !converged {
        let mut r = q;
        let mut z = precond.apply_inverse_block(&r);
        let mut dirs = z.clone();
        let mut gamma = z.tr_mul(&r);
        while iterations < opts.max_iter {
            iterations += 1;
            let v = op_mu.apply_block(&dirs);
            let alpha = gram_solve(&dirs.tr_mul(&v), &gamma, &mut fallbacks);
            y += &dirs * &alpha;
            r -= &v * &alpha;
            let r_orig = &r * &coeff;
            for (j, col) in r_orig.column_iter().enumerate() {
                histories[j].push(col.norm());
            }
            if histories.iter().any(|h| !h.last().unwrap().is_finite()) {
                return Err(Error::Diverged {
                    iteration: iterations,
                    quantity: "block residual",
                    residual_history: histories.iter().map(|h| *h.last().unwrap()).collect(),
                });
            }
            if all_below(&histories) {
                converged = true;
                break;
            }
            z = precond.apply_inverse_block(&r);
            let gamma_next = z.tr_mul(&r);
            let beta = gram_solve(&gamma, &gamma_next, &mut fallbacks);
            dirs = &z + &dirs * beta;
            gamma = gamma_next;
        }
    }

    let solutions = if coeff.nrows() == 0 {
        DMatrix::zeros(n, s)
    } else {
        &y * &coeff
    };
    Ok(BlockSolveReport {
        solutions,
        residual_histories: histories,
        iterations,
        converged,
        deflated,
        pinv_fallbacks: fallbacks,
        wall_time: start.elapsed().as_secs_f64(),
        thresholds,
    })
}

/// Iterations after which the CG error bound `2((√κ-1)/(√κ+1))^t` drops
/// below `epsilon`: `⌈ln(2/ε) / ln((√κ+1)/(√κ-1))⌉`, and 1 for `κ = 1`.
pub fn iteration_bound(kappa: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(invalid(format!(
            "condition number must be finite and >= 1, got {kappa}"
        )));
    }
    if kappa == 1.0 {
        return Ok(1);
    }
    let root = kappa.sqrt();
    let rate = ((root + 1.0) / (root - 1.0)).ln();
    Ok(((2.0 / epsilon).ln() / rate).ceil().max(1.0) as usize)
}

/// `2((√κ-1)/(√κ+1))^t`, the standard CG bound on the relative
/// `A_μ`-norm error after `t` iterations.
pub fn error_envelope(kappa: f64, t: usize) -> f64 {
    let root = kappa.sqrt();
    2.0 * ((root - 1.0) / (root + 1.0)).powi(t as i32)
}
