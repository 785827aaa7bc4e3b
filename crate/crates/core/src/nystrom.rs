//! Randomized Nyström approximation `Â = U Λ̂ Uᵀ` of a psd operator.
//!
//! All constructions go through the same numerically stable pipeline: form
//! the sketch `Y = AΩ`, shift by `ν = eps(‖Y‖_F)`, Cholesky-factor
//! `Ωᵀ(Y + νΩ)`, take a thin SVD of the triangular solve and subtract the
//! shift back out of the squared singular values. Gaussian and
//! column-sampling test matrices only differ in how `Ω` is drawn.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{
    eps, gaussian_matrix, orthonormalize_against, solve_lower_blocked, symmetrize, thin_q,
    thin_svd_u,
};
use crate::operator::{LinearOperator, SpectrumProfile};

/// Cholesky retries after the initial attempt, each multiplying the shift by 10.
const SHIFT_RETRIES: usize = 3;

/// Factored low-rank approximation `U diag(Λ̂) Uᵀ`.
#[derive(Debug, Clone)]
pub struct NystromApproximation {
    u: DMatrix<f64>,
    lambda_hat: Vec<f64>,
    shift_used: f64,
}

impl NystromApproximation {
    /// Builds an approximation from explicit factors. `u` must have
    /// orthonormal columns and `lambda_hat` must be nonincreasing and
    /// nonnegative.
    pub fn from_factors(u: DMatrix<f64>, lambda_hat: Vec<f64>) -> Result<Self> {
        if u.ncols() != lambda_hat.len() {
            return Err(invalid(format!(
                "factor shapes disagree: U has {} columns, {} eigenvalues",
                u.ncols(),
                lambda_hat.len()
            )));
        }
        if lambda_hat.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(invalid("approximate eigenvalues must be finite and >= 0"));
        }
        if lambda_hat.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("approximate eigenvalues must be nonincreasing"));
        }
        Ok(Self {
            u,
            lambda_hat,
            shift_used: 0.0,
        })
    }

    /// The rank-0 approximation `Â = 0`.
    pub fn empty(n: usize) -> Self {
        Self {
            u: DMatrix::zeros(n, 0),
            lambda_hat: Vec::new(),
            shift_used: 0.0,
        }
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn lambda_hat(&self) -> &[f64] {
        &self.lambda_hat
    }

    pub fn rank(&self) -> usize {
        self.lambda_hat.len()
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// Smallest retained eigenvalue `λ̂_ℓ`, or 0 for the empty approximation.
    pub fn lambda_ell(&self) -> f64 {
        self.lambda_hat.last().copied().unwrap_or(0.0)
    }

    pub fn shift_used(&self) -> f64 {
        self.shift_used
    }

    /// `Â v` in O(nℓ).
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut coeff = self.u.tr_mul(v);
        for (c, l) in coeff.iter_mut().zip(&self.lambda_hat) {
            *c *= l;
        }
        &self.u * coeff
    }

    /// Dense `U Λ̂ Uᵀ`. Oracle use only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut scaled = self.u.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.lambda_hat[j];
        }
        let mut m = scaled * self.u.transpose();
        symmetrize(&mut m);
        m
    }
}

/// How the test matrix of a [`SketchPair`] was drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum SketchKind {
    /// Orthonormalized Gaussian columns.
    Gaussian,
    /// Distinct standard basis vectors; indices in column order.
    Columns(Vec<usize>),
}

/// Test matrix `Ω` and sketch `Y = AΩ`, kept so a sketch can be enlarged
/// without repeating earlier matvecs.
#[derive(Debug, Clone)]
pub struct SketchPair {
    omega: DMatrix<f64>,
    y: DMatrix<f64>,
    kind: SketchKind,
}

impl SketchPair {
    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn kind(&self) -> &SketchKind {
        &self.kind
    }

    pub fn width(&self) -> usize {
        self.omega.ncols()
    }

    pub fn dim(&self) -> usize {
        self.omega.nrows()
    }
}

fn check_rank(op: &dyn LinearOperator, ell: usize) -> Result<()> {
    if ell == 0 || ell > op.dim() {
        return Err(invalid(format!(
            "sketch size must satisfy 1 <= ell <= n = {}, got {ell}",
            op.dim()
        )));
    }
    Ok(())
}

/// Sketches `op` with an explicit test matrix. The columns of `omega` are
/// used as given.
pub fn sketch_with(op: &dyn LinearOperator, omega: DMatrix<f64>) -> Result<SketchPair> {
    if omega.nrows() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: omega.nrows(),
        });
    }
    let y = op.apply_block(&omega);
    Ok(SketchPair {
        omega,
        y,
        kind: SketchKind::Gaussian,
    })
}

/// Draws an `n × ℓ` Gaussian test matrix, orthonormalizes it and sketches.
pub fn gaussian_sketch<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    ell: usize,
    rng: &mut R,
) -> Result<SketchPair> {
    check_rank(op, ell)?;
    let omega = thin_q(gaussian_matrix(op.dim(), ell, rng));
    sketch_with(op, omega)
}

/// Samples `ℓ` distinct columns of `op` uniformly without replacement.
pub fn column_sketch<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    ell: usize,
    rng: &mut R,
) -> Result<SketchPair> {
    check_rank(op, ell)?;
    if !op.has_column_access() {
        return Err(Error::Unsupported("column access"));
    }
    let indices = index::sample(rng, op.dim(), ell).into_vec();
    column_sketch_with_indices(op, &indices)
}

/// Column sketch on a caller-chosen set of distinct 0-based indices.
pub fn column_sketch_with_indices(
    op: &dyn LinearOperator,
    indices: &[usize],
) -> Result<SketchPair> {
    let n = op.dim();
    if !op.has_column_access() {
        return Err(Error::Unsupported("column access"));
    }
    if indices.is_empty() || indices.len() > n {
        return Err(invalid(format!(
            "need 1..={n} column indices, got {}",
            indices.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n || seen[i] {
            return Err(invalid(format!(
                "column index {i} out of range or repeated"
            )));
        }
        seen[i] = true;
    }
    let mut omega = DMatrix::zeros(n, indices.len());
    let mut y = DMatrix::zeros(n, indices.len());
    for (c, &i) in indices.iter().enumerate() {
        omega[(i, c)] = 1.0;
        let col = op.column(i).ok_or(Error::Unsupported("column access"))?;
        y.set_column(c, &col);
    }
    Ok(SketchPair {
        omega,
        y,
        kind: SketchKind::Columns(indices.to_vec()),
    })
}

/// Appends `extra` new test columns and their products. Gaussian columns
/// are orthonormalized against the existing ones; column sketches draw
/// further unused indices. Existing columns are left untouched.
pub fn extend_sketch<R: Rng + ?Sized>(
    pair: &SketchPair,
    op: &dyn LinearOperator,
    extra: usize,
    rng: &mut R,
) -> Result<SketchPair> {
    if extra == 0 {
        return Err(invalid("sketch extension needs at least one column"));
    }
    if pair.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: pair.dim(),
        });
    }
    let n = op.dim();
    if pair.width() + extra > n {
        return Err(invalid(format!(
            "extended sketch size {} exceeds n = {n}",
            pair.width() + extra
        )));
    }
    match &pair.kind {
        SketchKind::Gaussian => {
            let fresh = orthonormalize_against(&pair.omega, gaussian_matrix(n, extra, rng));
            let y_new = op.apply_block(&fresh);
            Ok(SketchPair {
                omega: hcat(&pair.omega, &fresh),
                y: hcat(&pair.y, &y_new),
                kind: SketchKind::Gaussian,
            })
        }
        SketchKind::Columns(existing) => {
            let mut used = vec![false; n];
            for &i in existing {
                used[i] = true;
            }
            let pool: Vec<usize> = (0..n).filter(|&i| !used[i]).collect();
            let picks = index::sample(rng, pool.len(), extra);
            let mut all = existing.clone();
            all.extend(picks.iter().map(|k| pool[k]));
            let added = column_sketch_with_indices(op, &all[existing.len()..])?;
            Ok(SketchPair {
                omega: hcat(&pair.omega, &added.omega),
                y: hcat(&pair.y, &added.y),
                kind: SketchKind::Columns(all),
            })
        }
    }
}

fn hcat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

/// Runs the shifted Cholesky + SVD pipeline on an existing sketch.
pub fn nystrom_from_sketch(pair: &SketchPair) -> Result<NystromApproximation> {
    let omega = &pair.omega;
    let y = &pair.y;
    let n = omega.nrows();
    if omega.ncols() == 0 {
        return Ok(NystromApproximation::empty(n));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("sketch"));
    }

    let base_shift = eps(y.norm());
    let mut shift = base_shift;
    for attempt in 0..=SHIFT_RETRIES {
        if attempt > 0 {
            shift *= 10.0;
        }
        let y_shifted = y + omega * shift;
        let mut core = omega.transpose() * &y_shifted;
        symmetrize(&mut core);
        let Some(chol) = core.cholesky() else {
            continue;
        };
        // B = Y_ν C⁻¹ with C = Lᵀ, i.e. Bᵀ = L⁻¹ Y_νᵀ.
        let Some(bt) = solve_lower_blocked(&chol.l(), y_shifted.transpose()) else {
            continue;
        };
        let b = bt.transpose();
        let (u, sigma) = thin_svd_u(&b);
        let lambda_hat: Vec<f64> = sigma.iter().map(|s| (s * s - shift).max(0.0)).collect();
        debug_assert!(lambda_hat.windows(2).all(|w| w[0] >= w[1]));
        return Ok(NystromApproximation {
            u,
            lambda_hat,
            shift_used: shift,
        });
    }
    Err(Error::CholeskyBreakdown {
        shift,
        attempts: SHIFT_RETRIES,
    })
}

/// Rank-`ℓ` randomized Nyström approximation with a Gaussian test matrix.
/// Costs `ℓ` matvecs plus O(nℓ²) arithmetic.
pub fn randomized_nystrom<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    ell: usize,
    rng: &mut R,
) -> Result<NystromApproximation> {
    nystrom_from_sketch(&gaussian_sketch(op, ell, rng)?)
}

/// Nyström approximation from `ℓ` uniformly sampled columns.
pub fn column_sampling_nystrom<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    ell: usize,
    rng: &mut R,
) -> Result<NystromApproximation> {
    nystrom_from_sketch(&column_sketch(op, ell, rng)?)
}

/// Definitional `(AX)(XᵀAX)^† (AX)ᵀ`, evaluated densely. Oracle use only.
pub fn nystrom_definitional(a: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let ax = a * x;
    let mut core = x.tr_mul(&ax);
    symmetrize(&mut core);
    let svd = core.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = (a.nrows().max(x.ncols()) as f64) * f64::EPSILON * smax;
    let pinv = svd
        .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
        .expect("U and V were computed");
    let mut out = &ax * pinv * ax.transpose();
    symmetrize(&mut out);
    out
}

/// Which form of the expected-error bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorBoundForm {
    /// General bound, valid for `2 <= p <= ℓ - 2`.
    General,
    /// Simplified bound for `ℓ = 2p - 1`, in terms of the p-stable rank.
    StableRank,
}

/// Upper bound on `E‖A - Â‖` for a Gaussian rank-`ℓ` Nyström approximation.
///
/// `General`: `(1 + 2(ℓ-p)/(p-1)) λ_{ℓ-p+1} + 2e²ℓ/(p²-1) Σ_{j>ℓ-p} λ_j`.
/// `StableRank`: `(3 + 4e²/p · sr_p) λ_p` with `sr_p = λ_p⁻¹ Σ_{j≥p} λ_j`.
pub fn expected_error_bound(
    profile: &SpectrumProfile,
    ell: usize,
    p: usize,
    form: ErrorBoundForm,
) -> Result<f64> {
    let lam = profile.eigenvalues();
    let n = lam.len();
    let e2 = std::f64::consts::E.powi(2);
    match form {
        ErrorBoundForm::General => {
            if p < 2 || ell < p + 2 {
                return Err(invalid(format!(
                    "need 2 <= p <= ell - 2, got p = {p}, ell = {ell}"
                )));
            }
            if ell > n {
                return Err(invalid(format!("ell = {ell} exceeds n = {n}")));
            }
            let head = ell - p; // λ_{ℓ-p+1} is lam[head]
            let (ellf, pf) = (ell as f64, p as f64);
            let tail: f64 = lam[head..].iter().sum();
            Ok((1.0 + 2.0 * (ellf - pf) / (pf - 1.0)) * lam[head]
                + 2.0 * e2 * ellf / (pf * pf - 1.0) * tail)
        }
        ErrorBoundForm::StableRank => {
            if p < 2 || ell != 2 * p - 1 {
                return Err(invalid(format!(
                    "need p >= 2 and ell = 2p - 1, got p = {p}, ell = {ell}"
                )));
            }
            if p > n {
                return Err(invalid(format!("p = {p} exceeds n = {n}")));
            }
            let lp = lam[p - 1];
            if lp == 0.0 {
                return Ok(0.0);
            }
            let tail: f64 = lam[p - 1..].iter().sum();
            Ok(3.0 * lp + 4.0 * e2 / p as f64 * tail)
        }
    }
}
