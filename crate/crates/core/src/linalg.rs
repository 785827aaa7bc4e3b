//! Small dense helpers shared across the crate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Spacing between `|x|` and the next larger double (MATLAB's `eps(x)`).
///
/// `eps(0)` is the smallest positive subnormal.
pub fn eps(x: f64) -> f64 {
    let a = x.abs();
    if !a.is_finite() {
        return f64::NAN;
    }
    f64::from_bits(a.to_bits() + 1) - a
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // Column-major fill so a replayed stream reproduces the same matrix
    // regardless of how it is later partitioned into blocks.
    DMatrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample(StandardNormal)),
    )
}

pub fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample(StandardNormal)))
}

/// Thin Q factor of a tall matrix, with column signs fixed so that the
/// diagonal of R is nonnegative.
pub fn thin_q(m: DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols().min(m.nrows());
    let qr = m.qr();
    let r_diag: Vec<f64> = {
        let r = qr.r();
        (0..k).map(|i| r[(i, i)]).collect()
    };
    let mut q = qr.q();
    for (j, d) in r_diag.into_iter().enumerate() {
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormalizes `block` against the columns of `basis` (assumed
/// orthonormal) and then internally. Two passes of block Gram-Schmidt.
pub fn orthonormalize_against(basis: &DMatrix<f64>, mut block: DMatrix<f64>) -> DMatrix<f64> {
    if basis.ncols() > 0 {
        for _ in 0..2 {
            let coeff = basis.transpose() * &block;
            block -= basis * coeff;
        }
    }
    let q = thin_q(block);
    if basis.ncols() > 0 {
        let coeff = basis.transpose() * &q;
        let q = &q - basis * coeff;
        thin_q(q)
    } else {
        q
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Eigenvalues of a symmetric matrix, sorted nonincreasing.
pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let mut vals = to_faer(&s)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .unwrap_or_else(|_| s.symmetric_eigenvalues().iter().copied().collect());
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Full symmetric eigendecomposition, eigenpairs sorted by nonincreasing
/// eigenvalue.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let (vals, vecs) = match to_faer(&s).self_adjoint_eigen(faer::Side::Lower) {
        Ok(eig) => {
            let d = eig.S().column_vector();
            (
                (0..d.nrows()).map(|i| d[i]).collect::<Vec<_>>(),
                from_faer(eig.U()),
            )
        }
        Err(_) => {
            let eig = s.symmetric_eigen();
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        }
    };
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let sorted = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs = DMatrix::from_fn(m.nrows(), order.len(), |r, c| vecs[(r, order[c])]);
    (sorted, sorted_vecs)
}

/// Left singular vectors and singular values of a thin SVD, sorted by
/// nonincreasing singular value.
pub fn thin_svd_u(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (u, s) = match to_faer(m).thin_svd() {
        Ok(svd) => {
            let d = svd.S().column_vector();
            (
                from_faer(svd.U()),
                (0..d.nrows()).map(|i| d[i]).collect::<Vec<_>>(),
            )
        }
        Err(_) => {
            let svd = m.clone().svd(true, false);
            (
                svd.u.expect("requested U"),
                svd.singular_values.iter().copied().collect(),
            )
        }
    };
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let sorted = order.iter().map(|&i| s[i]).collect();
    (
        DMatrix::from_fn(m.nrows(), order.len(), |r, c| u[(r, order[c])]),
        sorted,
    )
}

/// Spectral norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(m)
        .into_iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Solves `L X = B` for lower-triangular `L`, in row blocks so that most of
/// the work is matrix products. `None` on a zero diagonal entry.
pub fn solve_lower_blocked(l: &DMatrix<f64>, mut rhs: DMatrix<f64>) -> Option<DMatrix<f64>> {
    const BLOCK: usize = 64;
    let n = l.nrows();
    let mut start = 0;
    while start < n {
        let w = BLOCK.min(n - start);
        let mut blk = rhs.rows(start, w).into_owned();
        if start > 0 {
            blk -= l.view((start, 0), (w, start)) * rhs.rows(0, start);
        }
        if !l
            .view((start, start), (w, w))
            .solve_lower_triangular_mut(&mut blk)
        {
            return None;
        }
        rhs.rows_mut(start, w).copy_from(&blk);
        start += w;
    }
    Some(rhs)
}
