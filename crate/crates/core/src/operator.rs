//! Matvec-only operators for symmetric psd matrices.
//!
//! Every consumer in this crate touches `A` only through [`LinearOperator`].
//! Column access is an optional capability used by column-sampling Nyström;
//! dense and kernel operators provide it, Gram operators do not.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{gaussian_matrix, symmetrize, thin_q};

/// A symmetric positive-semidefinite matrix accessed through products.
///
/// Implementations are immutable after construction and must return
/// bitwise-identical results for identical inputs.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    /// `A v` without argument validation. Use [`matvec`] for the checked
    /// entry point.
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;

    /// `A X`, column by column unless the operator has something better.
    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = x
            .column_iter()
            .map(|c| self.apply(&c.into_owned()))
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.dim(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// Column `j` of `A`, when the operator can produce it without a matvec.
    fn column(&self, _j: usize) -> Option<DVector<f64>> {
        None
    }

    fn has_column_access(&self) -> bool {
        false
    }
}

/// Checked matvec: rejects length mismatches and non-finite input.
pub fn matvec(op: &dyn LinearOperator, v: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(op.dim(), v.len())?;
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("matvec input"));
    }
    Ok(op.apply(v))
}

/// Materializes `A` by applying it to the identity. Oracle use only.
pub fn to_dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    op.apply_block(&DMatrix::identity(op.dim(), op.dim()))
}

/// Dense symmetric matrix.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    /// Wraps a square matrix, rejecting it if it is not symmetric to a
    /// relative tolerance of 1e-12.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid(format!(
                "dense operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !matrix.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("dense operator entries"));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(invalid(format!(
                "matrix is not symmetric (max |a_ij - a_ji| = {asym:e})"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }

    fn column(&self, j: usize) -> Option<DVector<f64>> {
        (j < self.dim()).then(|| self.matrix.column(j).into_owned())
    }

    fn has_column_access(&self) -> bool {
        true
    }
}

/// `A + μI` over a borrowed base operator.
#[derive(Clone, Copy)]
pub struct RegularizedOperator<'a> {
    base: &'a dyn LinearOperator,
    mu: f64,
}

/// Wraps `op` as `A + μI`. Negative or non-finite shifts are rejected.
pub fn regularize(op: &dyn LinearOperator, mu: f64) -> Result<RegularizedOperator<'_>> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(invalid(format!(
            "regularization must be finite and >= 0, got {mu}"
        )));
    }
    Ok(RegularizedOperator { base: op, mu })
}

impl<'a> RegularizedOperator<'a> {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn base(&self) -> &'a dyn LinearOperator {
        self.base
    }
}

impl LinearOperator for RegularizedOperator<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.base.apply(v);
        out.axpy(self.mu, v, 1.0);
        out
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.base.apply_block(x);
        out += x * self.mu;
        out
    }
}

/// `v ↦ (1/n_rows) Gᵀ(G v)` for a ridge design matrix `G`.
#[derive(Debug, Clone)]
pub struct GramRidgeOperator {
    design: DMatrix<f64>,
    inv_rows: f64,
}

pub fn gram_ridge(design: DMatrix<f64>) -> Result<GramRidgeOperator> {
    if design.nrows() == 0 || design.ncols() == 0 {
        return Err(invalid("design matrix must be non-empty"));
    }
    if !design.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("design matrix"));
    }
    let inv_rows = 1.0 / design.nrows() as f64;
    Ok(GramRidgeOperator { design, inv_rows })
}

impl GramRidgeOperator {
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn rows(&self) -> usize {
        self.design.nrows()
    }
}

impl LinearOperator for GramRidgeOperator {
    fn dim(&self) -> usize {
        self.design.ncols()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let gv = &self.design * v;
        self.design.tr_mul(&gv) * self.inv_rows
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let gx = &self.design * x;
        // Explicit transpose so the product goes through the blocked GEMM path.
        self.design.transpose() * gx * self.inv_rows
    }
}

/// Default size above which kernel matrices are not stored densely.
pub const DEFAULT_DENSE_KERNEL_CAP: usize = 20_000;

/// How a user-facing ridge parameter maps to the diagonal shift of a
/// kernel system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerConvention {
    /// Shift by `μ` as given.
    Mu,
    /// Shift by `n·μ`, i.e. solve `(K + nμI)α = b`.
    NMu,
}

impl RegularizerConvention {
    pub fn shift(self, n: usize, mu: f64) -> f64 {
        match self {
            Self::Mu => mu,
            Self::NMu => n as f64 * mu,
        }
    }
}

/// Gaussian kernel matrix `K_ij = exp(-‖x_i - x_j‖² / (2σ²))`.
///
/// Points are the rows of `points`. Stored densely up to `dense_cap`
/// points, otherwise entries are recomputed on every product.
#[derive(Debug, Clone)]
pub struct KernelOperator {
    points: DMatrix<f64>,
    sigma: f64,
    dense: Option<DMatrix<f64>>,
}

pub fn gaussian_kernel(points: DMatrix<f64>, sigma: f64) -> Result<KernelOperator> {
    KernelOperator::with_cap(points, sigma, DEFAULT_DENSE_KERNEL_CAP)
}

impl KernelOperator {
    pub fn with_cap(points: DMatrix<f64>, sigma: f64, dense_cap: usize) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid(format!(
                "kernel bandwidth must be > 0, got {sigma}"
            )));
        }
        if points.nrows() == 0 {
            return Err(invalid("kernel needs at least one point"));
        }
        if !points.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("kernel points"));
        }
        let mut op = Self {
            points,
            sigma,
            dense: None,
        };
        if op.points.nrows() <= dense_cap {
            let n = op.points.nrows();
            let cols: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|j| (0..n).map(|i| op.entry(i, j)).collect())
                .collect();
            op.dense = Some(DMatrix::from_iterator(n, n, cols.into_iter().flatten()));
        }
        Ok(op)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let d2: f64 = self
            .points
            .row(i)
            .iter()
            .zip(self.points.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

impl LinearOperator for KernelOperator {
    fn dim(&self) -> usize {
        self.points.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match &self.dense {
            Some(k) => k * v,
            None => {
                let n = self.dim();
                let out: Vec<f64> = (0..n)
                    .into_par_iter()
                    .map(|i| (0..n).map(|j| self.entry(i, j) * v[j]).sum())
                    .collect();
                DVector::from_vec(out)
            }
        }
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.dense {
            Some(k) => k * x,
            None => {
                let cols: Vec<DVector<f64>> = x
                    .column_iter()
                    .map(|c| self.apply(&c.into_owned()))
                    .collect();
                if cols.is_empty() {
                    DMatrix::zeros(self.dim(), 0)
                } else {
                    DMatrix::from_columns(&cols)
                }
            }
        }
    }

    fn column(&self, j: usize) -> Option<DVector<f64>> {
        if j >= self.dim() {
            return None;
        }
        Some(match &self.dense {
            Some(k) => k.column(j).into_owned(),
            None => DVector::from_fn(self.dim(), |i, _| self.entry(i, j)),
        })
    }

    fn has_column_access(&self) -> bool {
        true
    }
}

/// Nonincreasing list of nonnegative eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumProfile {
    eigenvalues: Vec<f64>,
}

impl SpectrumProfile {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(invalid("spectrum must be non-empty"));
        }
        if eigenvalues.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(invalid("eigenvalues must be finite and nonnegative"));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(invalid("eigenvalues must be sorted nonincreasing"));
        }
        Ok(Self { eigenvalues })
    }

    /// `λ_j = j^{-exponent}` for `j = 1..=n`.
    pub fn power_law(n: usize, exponent: f64) -> Self {
        Self {
            eigenvalues: (1..=n).map(|j| (j as f64).powf(-exponent)).collect(),
        }
    }

    /// `λ_j = ratio^j` for `j = 1..=n`, with `0 < ratio <= 1`.
    pub fn geometric(n: usize, ratio: f64) -> Self {
        Self {
            eigenvalues: (1..=n).map(|j| ratio.powi(j as i32)).collect(),
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            eigenvalues: vec![value; n],
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// 1-based eigenvalue access, `λ_j`.
    pub fn lambda(&self, j: usize) -> f64 {
        self.eigenvalues[j - 1]
    }

    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn smallest(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }
}

/// `A = QΛQᵀ` with a Haar-random orthogonal `Q`, stored densely together
/// with its exact eigenpairs.
#[derive(Debug, Clone)]
pub struct SpectralOperator {
    matrix: DMatrix<f64>,
    eigenvectors: DMatrix<f64>,
    profile: SpectrumProfile,
}

pub fn synthesize_operator<R: Rng + ?Sized>(
    profile: &SpectrumProfile,
    rng: &mut R,
) -> SpectralOperator {
    let n = profile.len();
    let q = thin_q(gaussian_matrix(n, n, rng));
    let mut scaled = q.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= profile.eigenvalues[j];
    }
    let mut matrix = scaled * q.transpose();
    symmetrize(&mut matrix);
    SpectralOperator {
        matrix,
        eigenvectors: q,
        profile: profile.clone(),
    }
}

impl SpectralOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Orthonormal eigenvectors, column `j` paired with `λ_{j+1}`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn profile(&self) -> &SpectrumProfile {
        &self.profile
    }

    pub fn into_dense(self) -> DenseOperator {
        DenseOperator {
            matrix: self.matrix,
        }
    }
}

impl LinearOperator for SpectralOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.matrix * v
    }

    fn apply_block(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.matrix * x
    }

    fn column(&self, j: usize) -> Option<DVector<f64>> {
        (j < self.dim()).then(|| self.matrix.column(j).into_owned())
    }

    fn has_column_access(&self) -> bool {
        true
    }
}
