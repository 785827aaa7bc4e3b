//! Synthetic data: random Fourier features and point clouds for kernel
//! problems.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

/// Random Fourier features `√(2/m)·cos(XW + 1bᵀ)` for the Gaussian kernel
/// of bandwidth `sigma`, with `W_ij ~ N(0, 1/σ²)` and `b_j ~ U[0, 2π)`.
/// Rows of `x` are samples.
///
/// # Panics
/// If `m_rf == 0` or `sigma` is not a positive finite number.
pub fn random_features<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    m_rf: usize,
    sigma: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    assert!(m_rf >= 1, "need at least one feature");
    assert!(
        sigma > 0.0 && sigma.is_finite(),
        "sigma must be positive, got {sigma}"
    );
    let normal = Normal::new(0.0, 1.0 / sigma).expect("finite scale");
    let w = DMatrix::from_iterator(
        x.ncols(),
        m_rf,
        normal.sample_iter(&mut *rng).take(x.ncols() * m_rf),
    );
    let phase = Uniform::new(0.0, 2.0 * PI);
    let b: Vec<f64> = (0..m_rf).map(|_| phase.sample(rng)).collect();
    let scale = (2.0 / m_rf as f64).sqrt();
    let mut z = x * w;
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.apply(|v| *v = scale * (*v + b[j]).cos());
    }
    z
}

/// `n` points in `d` dimensions with independent standard normal
/// coordinates, one point per row.
pub fn gaussian_points<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut m = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            m[(i, j)] = normal.sample(rng);
        }
    }
    m
}
