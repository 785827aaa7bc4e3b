//! Nyström preconditioner, the optimal low-rank reference preconditioner,
//! Woodbury inversion and sketch-and-solve.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, invalid, Result};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::nystrom::{randomized_nystrom, NystromApproximation};
use crate::operator::LinearOperator;

/// Anything that can apply `P⁻¹` to a residual.
pub trait Preconditioner: Send + Sync {
    fn dim(&self) -> usize;
    fn apply_inverse(&self, r: &DVector<f64>) -> DVector<f64>;

    fn apply_inverse_block(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = r
            .column_iter()
            .map(|c| self.apply_inverse(&c.into_owned()))
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.dim(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }
}

/// `P = (λ̂_ℓ + μ)⁻¹ U(Λ̂ + μI)Uᵀ + (I - UUᵀ)`.
///
/// The rank-0 case is the identity. `floor` is `λ̂_ℓ` for Nyström
/// preconditioners and `λ_{ℓ+1}` for the optimal one.
#[derive(Debug, Clone)]
pub struct NystromPreconditioner {
    u: DMatrix<f64>,
    lambda_hat: Vec<f64>,
    floor: f64,
    mu: f64,
}

/// Builds the Nyström preconditioner for shift `mu > 0`.
pub fn build_preconditioner(
    approx: &NystromApproximation,
    mu: f64,
) -> Result<NystromPreconditioner> {
    NystromPreconditioner::with_floor(
        approx.u().clone(),
        approx.lambda_hat().to_vec(),
        approx.lambda_ell(),
        mu,
    )
}

impl NystromPreconditioner {
    pub fn identity(n: usize) -> Self {
        Self {
            u: DMatrix::zeros(n, 0),
            lambda_hat: Vec::new(),
            floor: 0.0,
            mu: 1.0,
        }
    }

    pub(crate) fn with_floor(
        u: DMatrix<f64>,
        lambda_hat: Vec<f64>,
        floor: f64,
        mu: f64,
    ) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(invalid(format!("preconditioner needs mu > 0, got {mu}")));
        }
        if u.ncols() != lambda_hat.len() {
            return Err(invalid("U and eigenvalue list disagree in length"));
        }
        Ok(Self {
            u,
            lambda_hat,
            floor,
            mu,
        })
    }

    pub fn rank(&self) -> usize {
        self.lambda_hat.len()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `λ̂_ℓ`, the normalizing eigenvalue.
    pub fn lambda_ell(&self) -> f64 {
        self.floor
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn lambda_hat(&self) -> &[f64] {
        &self.lambda_hat
    }

    /// Eigenvalues of `P` on `range(U)`, in column order of `U`. All other
    /// eigenvalues are 1.
    pub fn range_eigenvalues(&self) -> Vec<f64> {
        let denom = self.floor + self.mu;
        self.lambda_hat
            .iter()
            .map(|l| (l + self.mu) / denom)
            .collect()
    }

    // v + U diag(scale_i - 1) Uᵀ v; exact identity when rank is 0.
    fn spectral_apply(&self, v: &DVector<f64>, scale: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut coeff = self.u.tr_mul(v);
        for (c, &l) in coeff.iter_mut().zip(&self.lambda_hat) {
            *c *= scale(l) - 1.0;
        }
        let mut out = v.clone();
        out.gemv(1.0, &self.u, &coeff, 1.0);
        out
    }

    /// `P v` in O(nℓ).
    pub fn apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), v.len())?;
        let denom = self.floor + self.mu;
        Ok(self.spectral_apply(v, |l| (l + self.mu) / denom))
    }

    /// `P⁻¹ r = (λ̂_ℓ + μ)U(Λ̂ + μI)⁻¹Uᵀr + (r - UUᵀr)` in O(nℓ).
    pub fn try_apply_inverse(&self, r: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), r.len())?;
        Ok(Preconditioner::apply_inverse(self, r))
    }

    fn dense_power(&self, power: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut scaled = self.u.clone();
        let denom = self.floor + self.mu;
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= power((self.lambda_hat[j] + self.mu) / denom) - 1.0;
        }
        let mut m = DMatrix::identity(n, n) + scaled * self.u.transpose();
        symmetrize(&mut m);
        m
    }

    /// Dense `P`. Oracle use only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        self.dense_power(|x| x)
    }

    /// Dense `P⁻¹`. Oracle use only.
    pub fn inverse_to_dense(&self) -> DMatrix<f64> {
        self.dense_power(|x| 1.0 / x)
    }

    /// Dense `P^{-1/2}` from the known eigendecomposition of `P`.
    pub fn inverse_sqrt_to_dense(&self) -> DMatrix<f64> {
        self.dense_power(|x| 1.0 / x.sqrt())
    }
}

impl Preconditioner for NystromPreconditioner {
    fn dim(&self) -> usize {
        self.u.nrows()
    }

    fn apply_inverse(&self, r: &DVector<f64>) -> DVector<f64> {
        let numer = self.floor + self.mu;
        self.spectral_apply(r, |l| numer / (l + self.mu))
    }

    fn apply_inverse_block(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let numer = self.floor + self.mu;
        let mut coeff = self.u.tr_mul(r);
        for (i, &l) in self.lambda_hat.iter().enumerate() {
            let s = numer / (l + self.mu) - 1.0;
            coeff.row_mut(i).scale_mut(s);
        }
        r + &self.u * coeff
    }
}

/// Preconditioner built from the exact top-ℓ eigenpairs of `A`.
#[derive(Debug, Clone)]
pub struct OptimalPreconditioner {
    inner: NystromPreconditioner,
    lambda_next: f64,
    lambda_min: f64,
}

/// Optimal rank-`ℓ` preconditioner of a dense psd matrix, `1 <= ℓ < n`.
pub fn optimal_preconditioner(
    a: &DMatrix<f64>,
    ell: usize,
    mu: f64,
) -> Result<OptimalPreconditioner> {
    let n = a.nrows();
    if ell == 0 || ell >= n {
        return Err(invalid(format!(
            "optimal preconditioner needs 1 <= ell < n = {n}, got {ell}"
        )));
    }
    let (vals, vecs) = sym_eigen_desc(a);
    let top = vecs.columns(0, ell).into_owned();
    let lambda: Vec<f64> = vals[..ell].iter().map(|v| v.max(0.0)).collect();
    let lambda_next = vals[ell].max(0.0);
    let lambda_min = vals[n - 1].max(0.0);
    Ok(OptimalPreconditioner {
        inner: NystromPreconditioner::with_floor(top, lambda, lambda_next, mu)?,
        lambda_next,
        lambda_min,
    })
}

impl OptimalPreconditioner {
    pub fn preconditioner(&self) -> &NystromPreconditioner {
        &self.inner
    }

    pub fn lambda_next(&self) -> f64 {
        self.lambda_next
    }

    /// `(λ_{ℓ+1} + μ) / (λ_n + μ)`, the best condition number any rank-ℓ
    /// preconditioner of this form can reach.
    pub fn predicted_condition_number(&self) -> f64 {
        (self.lambda_next + self.inner.mu) / (self.lambda_min + self.inner.mu)
    }
}

/// `(UΛ̂Uᵀ + μI)⁻¹ b = U(Λ̂ + μI)⁻¹Uᵀb + μ⁻¹(b - UUᵀb)` in O(nℓ).
pub fn woodbury_inverse_apply(
    u: &DMatrix<f64>,
    lambda_hat: &[f64],
    mu: f64,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    if !(mu > 0.0) {
        return Err(invalid(format!(
            "woodbury inversion needs mu > 0, got {mu}"
        )));
    }
    if u.ncols() != lambda_hat.len() {
        return Err(invalid("U and eigenvalue list disagree in length"));
    }
    check_dim(u.nrows(), b.len())?;
    let coeff = u.tr_mul(b);
    let mut scaled = coeff.clone();
    for (c, l) in scaled.iter_mut().zip(lambda_hat) {
        *c /= l + mu;
    }
    let mut out = b.clone();
    out.gemv(-1.0, u, &coeff, 1.0);
    out /= mu;
    out.gemv(1.0, u, &scaled, 1.0);
    Ok(out)
}

/// Solves `(Â + μI)x = b` with a fresh rank-`ℓ` randomized Nyström
/// approximation of `op`. Accuracy is limited by `‖A - Â‖ / μ`.
pub fn sketch_and_solve<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    b: &DVector<f64>,
    mu: f64,
    ell: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(mu > 0.0) {
        return Err(invalid(format!("sketch-and-solve needs mu > 0, got {mu}")));
    }
    check_dim(op.dim(), b.len())?;
    let approx = randomized_nystrom(op, ell, rng)?;
    woodbury_inverse_apply(approx.u(), approx.lambda_hat(), mu, b)
}
