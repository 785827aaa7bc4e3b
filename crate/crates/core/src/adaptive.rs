//! A posteriori error estimation and adaptive sketch-size selection.
//!
//! The doubling loop keeps the sketch `(Ω, Y)` across rounds, so each
//! doubling only pays for the new columns.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, invalid, Result};
use crate::linalg::gaussian_vector;
use crate::nystrom::{
    column_sketch, extend_sketch, gaussian_sketch, nystrom_from_sketch, NystromApproximation,
    SketchPair,
};
use crate::operator::LinearOperator;

/// Default power iterations for the error estimate.
pub const DEFAULT_POWER_ITERS: usize = 5;
/// Default `τ` for the error-based rule (stop at `Ê <= 30μ`).
pub const DEFAULT_ERROR_TAU: f64 = 30.0;
/// Default `τ` for the ratio rule (stop at `λ̂_ℓ/μ <= 10`).
pub const DEFAULT_RATIO_TAU: f64 = 10.0;
/// Inflation applied to `Ê` in the reported condition estimate only.
pub const REPORT_SAFETY_FACTOR: f64 = 1.1;

/// Which quantity decides when to stop doubling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingRule {
    /// Stop when the power-method estimate `Ê <= τμ` (and, unless
    /// disabled, `λ̂_ℓ <= τμ/11`).
    Error,
    /// Stop when `λ̂_ℓ / μ <= τ`.
    Ratio,
    /// No adaptivity: build once at `ell_max`.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SketchMethod {
    Gaussian,
    ColumnSampling,
}

#[derive(Debug, Clone)]
pub struct AdaptiveConfig {
    pub ell0: usize,
    pub ell_max: usize,
    /// Power iterations per error estimate.
    pub q: usize,
    pub rule: StoppingRule,
    pub tau: f64,
    pub mu: f64,
    /// Also require `λ̂_ℓ <= τμ/11` under [`StoppingRule::Error`].
    pub require_small_tail: bool,
    pub method: SketchMethod,
}

impl AdaptiveConfig {
    pub fn error_rule(mu: f64, ell0: usize, ell_max: usize) -> Self {
        Self {
            ell0,
            ell_max,
            q: DEFAULT_POWER_ITERS,
            rule: StoppingRule::Error,
            tau: DEFAULT_ERROR_TAU,
            mu,
            require_small_tail: true,
            method: SketchMethod::Gaussian,
        }
    }

    pub fn ratio_rule(mu: f64, ell0: usize, ell_max: usize) -> Self {
        Self {
            rule: StoppingRule::Ratio,
            tau: DEFAULT_RATIO_TAU,
            ..Self::error_rule(mu, ell0, ell_max)
        }
    }

    pub fn fixed(mu: f64, ell: usize) -> Self {
        Self {
            rule: StoppingRule::Fixed,
            ..Self::error_rule(mu, ell, ell)
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_q(mut self, q: usize) -> Self {
        self.q = q;
        self
    }

    pub fn with_method(mut self, method: SketchMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_small_tail_check(mut self, on: bool) -> Self {
        self.require_small_tail = on;
        self
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.ell0 == 0 || self.ell0 > self.ell_max || self.ell_max > n {
            return Err(invalid(format!(
                "need 1 <= ell0 <= ell_max <= n, got ell0 = {}, ell_max = {}, n = {n}",
                self.ell0, self.ell_max
            )));
        }
        if self.q == 0 {
            return Err(invalid("need at least one power iteration"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid(format!(
                "tau must be finite and > 0, got {}",
                self.tau
            )));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(invalid(format!(
                "mu must be finite and > 0, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub approximation: NystromApproximation,
    /// Last power-method estimate of `‖A - Â‖`. When the cap is hit this
    /// refers to the approximation before the final top-up; `None` under
    /// the ratio rule.
    pub error_estimate: Option<f64>,
    pub doublings: usize,
    pub hit_cap: bool,
    /// `(λ̂_ℓ + μ + 1.1·Ê)/μ`, or `(λ̂_ℓ + μ)/μ` without an estimate.
    pub posterior_condition_estimate: f64,
    pub sketch: SketchPair,
}

impl AdaptiveOutcome {
    pub fn rank(&self) -> usize {
        self.approximation.rank()
    }
}

/// Power-method estimate of `‖A - UΛ̂Uᵀ‖` from one Gaussian start vector.
/// Returns the Rayleigh quotient of the last iteration.
pub fn estimate_error_power<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    u: &DMatrix<f64>,
    lambda_hat: &[f64],
    q: usize,
    rng: &mut R,
) -> Result<f64> {
    if q == 0 {
        return Err(invalid("need at least one power iteration"));
    }
    if u.ncols() != lambda_hat.len() {
        return Err(invalid("U and eigenvalue list disagree in length"));
    }
    let n = op.dim();
    check_dim(n, u.nrows())?;
    let g = gaussian_vector(n, rng);
    let mut v0 = &g / g.norm();
    let mut estimate = 0.0;
    for _ in 0..q {
        let mut coeff: DVector<f64> = u.tr_mul(&v0);
        for (c, l) in coeff.iter_mut().zip(lambda_hat) {
            *c *= l;
        }
        let mut v = op.apply(&v0);
        v.gemv(-1.0, u, &coeff, 1.0);
        estimate = v0.dot(&v);
        let norm = v.norm();
        if norm == 0.0 {
            break;
        }
        v0 = v / norm;
    }
    Ok(estimate)
}

/// `(λ̂_ℓ + μ + Ê)/μ`, an upper estimate of the preconditioned condition
/// number.
pub fn posterior_condition_estimate(lambda_ell: f64, mu: f64, err_estimate: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be > 0, got {mu}")));
    }
    if !(lambda_ell >= 0.0) || !(err_estimate >= 0.0) {
        return Err(invalid("lambda_ell and error estimate must be >= 0"));
    }
    Ok((lambda_ell + mu + err_estimate) / mu)
}

fn initial_sketch<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    cfg: &AdaptiveConfig,
    ell: usize,
    rng: &mut R,
) -> Result<SketchPair> {
    match cfg.method {
        SketchMethod::Gaussian => gaussian_sketch(op, ell, rng),
        SketchMethod::ColumnSampling => column_sketch(op, ell, rng),
    }
}

fn reported_condition(approx: &NystromApproximation, mu: f64, err: Option<f64>) -> f64 {
    (approx.lambda_ell() + mu + REPORT_SAFETY_FACTOR * err.unwrap_or(0.0).max(0.0)) / mu
}

// Shared doubling loop. `check` returns (accept, error estimate).
fn doubling_loop<R, F>(
    op: &dyn LinearOperator,
    cfg: &AdaptiveConfig,
    rng: &mut R,
    mut check: F,
) -> Result<AdaptiveOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&NystromApproximation, &mut R) -> Result<(bool, Option<f64>)>,
{
    cfg.validate(op.dim())?;
    let mut sketch = initial_sketch(op, cfg, cfg.ell0, rng)?;
    let mut approx = nystrom_from_sketch(&sketch)?;
    let mut doublings = 0;
    let mut hit_cap = false;
    let mut last_estimate;
    loop {
        let (accept, estimate) = check(&approx, rng)?;
        last_estimate = estimate;
        if accept {
            break;
        }
        let ell = sketch.width();
        if 2 * ell > cfg.ell_max {
            // Top up to exactly ell_max, rebuild and stop without
            // re-estimating the error.
            if ell < cfg.ell_max {
                sketch = extend_sketch(&sketch, op, cfg.ell_max - ell, rng)?;
                approx = nystrom_from_sketch(&sketch)?;
                doublings += 1;
            }
            hit_cap = true;
            break;
        }
        sketch = extend_sketch(&sketch, op, ell, rng)?;
        approx = nystrom_from_sketch(&sketch)?;
        doublings += 1;
    }
    Ok(AdaptiveOutcome {
        posterior_condition_estimate: reported_condition(&approx, cfg.mu, last_estimate),
        approximation: approx,
        error_estimate: last_estimate,
        doublings,
        hit_cap,
        sketch,
    })
}

/// Doubles the sketch size until the power-method estimate satisfies
/// `Ê <= τμ` (and `λ̂_ℓ <= τμ/11` unless disabled), or `ell_max` is reached.
pub fn adaptive_nystrom<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    cfg: &AdaptiveConfig,
    rng: &mut R,
) -> Result<AdaptiveOutcome> {
    if cfg.rule != StoppingRule::Error {
        return Err(invalid("adaptive_nystrom expects the error stopping rule"));
    }
    let tol = cfg.tau * cfg.mu;
    doubling_loop(op, cfg, rng, |approx, rng| {
        let est = estimate_error_power(op, approx.u(), approx.lambda_hat(), cfg.q, rng)?;
        let tail_ok = !cfg.require_small_tail || approx.lambda_ell() <= tol / 11.0;
        Ok((est <= tol && tail_ok, Some(est)))
    })
}

/// Doubles the sketch size until `λ̂_ℓ/μ <= τ` or `ell_max` is reached.
/// No power iterations are spent.
pub fn adaptive_nystrom_ratio<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    cfg: &AdaptiveConfig,
    rng: &mut R,
) -> Result<AdaptiveOutcome> {
    if cfg.rule != StoppingRule::Ratio {
        return Err(invalid(
            "adaptive_nystrom_ratio expects the ratio stopping rule",
        ));
    }
    doubling_loop(op, cfg, rng, |approx, _| {
        Ok((approx.lambda_ell() / cfg.mu <= cfg.tau, None))
    })
}

/// Builds once at `ell_max` and reports an error estimate.
pub fn fixed_rank_nystrom<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    cfg: &AdaptiveConfig,
    rng: &mut R,
) -> Result<AdaptiveOutcome> {
    cfg.validate(op.dim())?;
    let sketch = initial_sketch(op, cfg, cfg.ell_max, rng)?;
    let approx = nystrom_from_sketch(&sketch)?;
    let est = estimate_error_power(op, approx.u(), approx.lambda_hat(), cfg.q, rng)?;
    Ok(AdaptiveOutcome {
        posterior_condition_estimate: reported_condition(&approx, cfg.mu, Some(est)),
        approximation: approx,
        error_estimate: Some(est),
        doublings: 0,
        hit_cap: false,
        sketch,
    })
}

/// Dispatches on `cfg.rule`.
pub fn select_rank<R: Rng + ?Sized>(
    op: &dyn LinearOperator,
    cfg: &AdaptiveConfig,
    rng: &mut R,
) -> Result<AdaptiveOutcome> {
    match cfg.rule {
        StoppingRule::Error => adaptive_nystrom(op, cfg, rng),
        StoppingRule::Ratio => adaptive_nystrom_ratio(op, cfg, rng),
        StoppingRule::Fixed => fixed_rank_nystrom(op, cfg, rng),
    }
}
