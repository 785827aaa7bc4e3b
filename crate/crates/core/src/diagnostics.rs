//! Spectrum analytics and dense oracles: effective dimension, stable
//! rank, the sketch-size rule, deterministic condition-number bounds for
//! the Nyström preconditioner and exhaustive checks of the
//! effective-dimension inequalities.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::sym_eigenvalues_desc;
use crate::operator::SpectrumProfile;
use crate::precond::{NystromPreconditioner, Preconditioner};

/// Largest dimension the dense condition-number oracle accepts.
pub const DENSE_ORACLE_MAX_DIM: usize = 2000;

/// `d_eff(μ) = Σ_j λ_j / (λ_j + μ)`.
pub fn effective_dimension(profile: &SpectrumProfile, mu: f64) -> Result<f64> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(invalid(format!(
            "effective dimension needs mu > 0, got {mu}"
        )));
    }
    Ok(profile.eigenvalues().iter().map(|l| l / (l + mu)).sum())
}

/// `sr_p = λ_p⁻¹ Σ_{j≥p} λ_j` (the sum includes `λ_p`).
pub fn p_stable_rank(profile: &SpectrumProfile, p: usize) -> Result<f64> {
    if p == 0 || p > profile.len() {
        return Err(invalid(format!(
            "need 1 <= p <= n = {}, got {p}",
            profile.len()
        )));
    }
    let lam = profile.eigenvalues();
    let lp = lam[p - 1];
    if lp == 0.0 {
        return Err(invalid(format!("stable rank undefined: lambda_{p} = 0")));
    }
    Ok(lam[p - 1..].iter().sum::<f64>() / lp)
}

/// `2⌈c·d⌉ + 1`, the shape shared by the sketch-size rules.
pub fn odd_sketch_size(deff: f64, multiplier: f64) -> usize {
    2 * (multiplier * deff).ceil() as usize + 1
}

/// `ℓ = 2⌈1.5·d_eff(μ)⌉ + 1`, clamped to `n`.
pub fn recommended_sketch_size(profile: &SpectrumProfile, mu: f64) -> Result<usize> {
    let deff = effective_dimension(profile, mu)?;
    Ok(odd_sketch_size(deff, 1.5).min(profile.len()))
}

/// Two-sided bound on `κ₂(P^{-1/2} A_μ P^{-1/2})` for a Nyström
/// preconditioner, given `λ̂_ℓ`, `μ`, `‖E‖ = ‖A - Â‖` and `λ_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionBounds {
    pub lower: f64,
    pub upper: f64,
    pub lambda_ell: f64,
    pub mu: f64,
    pub err_norm: f64,
    pub lambda_n: f64,
}

impl ConditionBounds {
    pub fn contains(&self, kappa: f64) -> bool {
        self.lower <= kappa && kappa <= self.upper
    }
}

/// `lower = max{(λ̂_ℓ+μ)/(λ_n+μ), 1}`,
/// `upper = (λ̂_ℓ+μ+‖E‖)·min{1/μ, (λ̂_ℓ+λ_n+2μ)/((λ̂_ℓ+μ)(λ_n+μ))}`.
/// The `1/μ` branch is dropped when `μ = 0`.
pub fn condition_bounds(
    lambda_ell: f64,
    mu: f64,
    err_norm: f64,
    lambda_n: f64,
) -> Result<ConditionBounds> {
    for (name, v) in [
        ("lambda_ell", lambda_ell),
        ("mu", mu),
        ("err_norm", err_norm),
        ("lambda_n", lambda_n),
    ] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if mu + lambda_n == 0.0 || (mu == 0.0 && lambda_ell == 0.0) {
        return Err(invalid(
            "condition bounds undefined: mu = 0 with a singular matrix",
        ));
    }
    let top = lambda_ell + mu;
    let bottom = lambda_n + mu;
    let lower = (top / bottom).max(1.0);
    let second = (lambda_ell + lambda_n + 2.0 * mu) / (top * bottom);
    let factor = if mu > 0.0 {
        (1.0 / mu).min(second)
    } else {
        second
    };
    Ok(ConditionBounds {
        lower,
        upper: (top + err_norm) * factor,
        lambda_ell,
        mu,
        err_norm,
        lambda_n,
    })
}

/// `κ₂(P^{-1/2} A_μ P^{-1/2})` by dense eigendecomposition, with `A_μ`
/// given densely (`n <= 2000`).
pub fn exact_condition_number(p: &NystromPreconditioner, a_mu: &DMatrix<f64>) -> Result<f64> {
    let n = a_mu.nrows();
    if n > DENSE_ORACLE_MAX_DIM {
        return Err(invalid(format!(
            "dense oracle limited to n <= {DENSE_ORACLE_MAX_DIM}, got {n}"
        )));
    }
    if !a_mu.is_square() || Preconditioner::dim(p) != n {
        return Err(invalid("preconditioner and matrix dimensions disagree"));
    }
    let s = p.inverse_sqrt_to_dense();
    let m = &s * a_mu * &s;
    let eig = sym_eigenvalues_desc(&m);
    let (max, min) = (eig[0], eig[n - 1]);
    if !(min > 0.0) {
        return Err(invalid(format!(
            "preconditioned matrix is not positive definite (min eigenvalue {min:e})"
        )));
    }
    Ok(max / min)
}

/// `κ₂(A_μ)` for a dense symmetric positive definite matrix.
pub fn dense_condition_number(a_mu: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigenvalues_desc(a_mu);
    let min = *eig.last().unwrap();
    if !(min > 0.0) {
        return Err(invalid("matrix is not positive definite"));
    }
    Ok(eig[0] / min)
}

/// A failing instance of one of the effective-dimension inequalities.
#[derive(Debug, Clone, PartialEq)]
pub enum LemmaViolation {
    /// `j >= (1 + 1/γ)·d_eff(μ)` but `λ_j > γμ`.
    TailEigenvalue { j: usize, lambda_j: f64, limit: f64 },
    /// `k >= d_eff(μ)` but `Σ_{j>k} λ_j > d_eff(μ)·μ`.
    TailSum { k: usize, tail: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaCheck {
    pub deff: f64,
    pub indices_checked: usize,
    pub violation: Option<LemmaViolation>,
}

impl LemmaCheck {
    pub fn holds(&self) -> bool {
        self.violation.is_none()
    }
}

/// Scans every admissible index of `profile` for the two
/// effective-dimension inequalities and returns the first violation.
///
/// Comparisons allow a relative slack of a few ulps so that exact
/// equalities (flat spectra) are not reported as violations.
pub fn key_lemma_check(profile: &SpectrumProfile, mu: f64, gamma: f64) -> Result<LemmaCheck> {
    if !(gamma > 0.0) {
        return Err(invalid(format!("gamma must be > 0, got {gamma}")));
    }
    let deff = effective_dimension(profile, mu)?;
    let lam = profile.eigenvalues();
    let n = lam.len();
    let slack = 1.0 + 8.0 * f64::EPSILON;
    let mut checked = 0;

    let first_j = ((1.0 + 1.0 / gamma) * deff).ceil().max(1.0) as usize;
    for j in first_j..=n {
        checked += 1;
        let limit = gamma * mu;
        if lam[j - 1] > limit * slack {
            return Ok(LemmaCheck {
                deff,
                indices_checked: checked,
                violation: Some(LemmaViolation::TailEigenvalue {
                    j,
                    lambda_j: lam[j - 1],
                    limit,
                }),
            });
        }
    }

    // tails[k] = Σ_{j>k} λ_j for k = 0..=n
    let mut tails = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tails[k] = tails[k + 1] + lam[k];
    }
    let first_k = deff.ceil().max(1.0) as usize;
    let limit = deff * mu;
    for (k, &tail) in tails.iter().enumerate().skip(first_k) {
        checked += 1;
        if tail > limit * slack {
            return Ok(LemmaCheck {
                deff,
                indices_checked: checked,
                violation: Some(LemmaViolation::TailSum { k, tail, limit }),
            });
        }
    }
    Ok(LemmaCheck {
        deff,
        indices_checked: checked,
        violation: None,
    })
}
