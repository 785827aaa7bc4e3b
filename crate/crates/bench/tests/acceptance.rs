//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails or overruns its time budget.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use npcg_bench::features::{gaussian_points, random_features};
use npcg_core::adaptive::{
    adaptive_nystrom, adaptive_nystrom_ratio, estimate_error_power, AdaptiveConfig, SketchMethod,
};
use npcg_core::diagnostics::{condition_bounds, effective_dimension, key_lemma_check};
use npcg_core::linalg::{gaussian_vector, sym_eigenvalues_desc};
use npcg_core::nystrom::{gaussian_sketch, nystrom_from_sketch, randomized_nystrom};
use npcg_core::operator::{
    gaussian_kernel, gram_ridge, regularize, synthesize_operator, LinearOperator,
};
use npcg_core::precond::{build_preconditioner, woodbury_inverse_apply};
use npcg_core::solvers::{block_nystrom_pcg, cg, iteration_bound, nystrom_pcg};
use npcg_core::{NystromApproximation, NystromPreconditioner, SolveOptions, SpectrumProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Floating-point slack for inequalities that are exact in real arithmetic.
const ROUNDING: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn eig_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sym = m.clone();
    sym = (&sym + sym.transpose()) * 0.5;
    let mut e: Vec<f64> = SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    e.sort_by(|a, b| b.total_cmp(a));
    e
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// `(AΩ)(ΩᵀAΩ)†(AΩ)ᵀ` evaluated as `A^{1/2} Π A^{1/2}`, where `Π` projects onto
/// the range of `Z = A^{1/2}Ω`. The two are equal; this form avoids squaring
/// the conditioning of the core matrix.
fn definitional_oracle(
    a: &npcg_core::operator::SpectralOperator,
    omega: &DMatrix<f64>,
) -> DMatrix<f64> {
    let v = a.eigenvectors();
    let root = DVector::from_iterator(
        v.ncols(),
        a.profile().eigenvalues().iter().map(|l| l.sqrt()),
    );
    let sqrt_a = v * DMatrix::from_diagonal(&root) * v.transpose();
    let z = &sqrt_a * omega;
    let svd = z.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let cut = u.nrows() as f64 * f64::EPSILON * smax;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cut)
        .collect();
    let q = u.select_columns(&keep);
    let f = &sqrt_a * q;
    &f * f.transpose()
}

/// Dense `κ₂(P^{-1/2} A_μ P^{-1/2})` with `P^{-1/2} = I + U (diag(√((λ̂_ℓ+μ)/(λ̂+μ))) − I) Uᵀ`
/// formed from the factors. `‖P^{-1/2}‖ <= 1`, so this stays accurate for tiny `μ`.
fn closed_form_kappa(approx: &NystromApproximation, mu: f64, a_mu: &DMatrix<f64>) -> f64 {
    let u = approx.u();
    let top = approx.lambda_ell() + mu;
    let d = DVector::from_iterator(
        u.ncols(),
        approx
            .lambda_hat()
            .iter()
            .map(|l| (top / (l + mu)).sqrt() - 1.0),
    );
    let h =
        DMatrix::identity(u.nrows(), u.nrows()) + u * DMatrix::from_diagonal(&d) * u.transpose();
    let e = sym_eigenvalues_desc(&(&h * a_mu * &h));
    e[0] / e[e.len() - 1]
}

fn shifted(a: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    a + DMatrix::identity(a.nrows(), a.ncols()) * mu
}

/// Decreasing spectrum of one of several shapes, scaled so `λ₁ = 1`.
fn random_spectrum<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = match rng.gen_range(0..4) {
        0 => {
            let p = rng.gen_range(0.5..3.0);
            (1..=n).map(|j| (j as f64).powf(-p)).collect()
        }
        1 => {
            let r: f64 = rng.gen_range(0.5..0.99);
            (1..=n).map(|j| r.powi(j as i32)).collect()
        }
        2 => (0..n).map(|_| rng.gen::<f64>().powi(3)).collect(),
        _ => {
            let k = rng.gen_range(1..=n);
            (0..n)
                .map(|j| if j < k { rng.gen_range(0.1..1.0) } else { 0.0 })
                .collect()
        }
    };
    v.sort_by(|a, b| b.total_cmp(a));
    let top = v[0].max(f64::MIN_POSITIVE);
    v.iter_mut().for_each(|x| *x /= top);
    v
}

fn c1_c2() -> (Outcome, Outcome) {
    let mut r = rng(101);
    let mut worst_def = 0.0f64;
    let mut worst_loewner = 0.0f64;
    let mut worst_eig = 0.0f64;
    for _ in 0..50 {
        let n = r.gen_range(5..=100);
        let profile = SpectrumProfile::new(random_spectrum(n, &mut r)).unwrap();
        let a = synthesize_operator(&profile, &mut r);
        let ell = r.gen_range(1..=n);
        let pair = gaussian_sketch(&a, ell, &mut r).unwrap();
        let approx = nystrom_from_sketch(&pair).unwrap();
        let a_hat = approx.to_dense();
        let lam1 = profile.largest();

        let oracle = definitional_oracle(&a, pair.omega());
        worst_def = worst_def.max((&a_hat - oracle).norm() / lam1);

        let gap = eig_desc(&(a.matrix() - &a_hat));
        worst_loewner = worst_loewner.max(-gap[n - 1] / lam1);
        let hat = eig_desc(&a_hat);
        for (h, l) in hat.iter().zip(profile.eigenvalues()) {
            worst_eig = worst_eig.max((h - l) / lam1);
        }
    }
    (
        outcome(worst_def <= 1e-8, format!("max ‖Â - Â_def‖_F/‖A‖ = {worst_def:.2e} (limit 1e-8)")),
        outcome(
            worst_loewner <= 1e-8 && worst_eig <= 1e-8,
            format!("max -λmin(A-Â)/λ₁ = {worst_loewner:.2e}, max (λ̂_j-λ_j)/λ₁ = {worst_eig:.2e} (limit 1e-8)"),
        ),
    )
}

fn c3() -> Outcome {
    let n = 300;
    let profile = SpectrumProfile::power_law(n, 2.0);
    let mut r = rng(103);
    let a = synthesize_operator(&profile, &mut r);
    let lam = profile.eigenvalues();
    let mut pass = true;
    let mut parts = Vec::new();
    for p in [3usize, 5, 9] {
        let ell = 2 * p - 1;
        let mut sum = 0.0;
        for _ in 0..100 {
            let approx = randomized_nystrom(&a, ell, &mut r).unwrap();
            sum += spectral_norm(&(a.matrix() - approx.to_dense()));
        }
        let mean = sum / 100.0;
        let sr: f64 = lam[p - 1..].iter().sum::<f64>() / lam[p - 1];
        let bound = (3.0 + 4.0 * std::f64::consts::E.powi(2) / p as f64 * sr) * lam[p - 1];
        pass &= mean <= bound;
        parts.push(format!("p={p}: {mean:.3e} <= {bound:.3e}"));
    }
    outcome(pass, parts.join(", "))
}

fn c4() -> Outcome {
    let mut r = rng(104);
    let mut worst_exact = 0.0f64;
    let mut worst_ineq = 0.0f64;
    for _ in 0..40 {
        let n = r.gen_range(5..=100);
        let mut eig: Vec<f64> = match r.gen_range(0..2) {
            0 => (0..n).map(|_| r.gen_range(1e-3..1.0)).collect(),
            _ => {
                let p = r.gen_range(0.5..2.0);
                (1..=n).map(|j| (j as f64).powf(-p)).collect()
            }
        };
        eig.sort_by(|a, b| b.total_cmp(a));
        let profile = SpectrumProfile::new(eig).unwrap();
        let a = synthesize_operator(&profile, &mut r);
        let ell = r.gen_range(1..n);
        let mu = 10f64.powf(r.gen_range(-4.0..0.0));
        let a_mu_inv = shifted(a.matrix(), mu).try_inverse().unwrap();

        // Exact rank-ℓ truncation from the known eigenvectors.
        let v = a.eigenvectors().columns(0, ell).into_owned();
        let top =
            DMatrix::from_diagonal(&DVector::from_column_slice(&profile.eigenvalues()[..ell]));
        let trunc = &v * top * v.transpose();
        let e = a.matrix() - &trunc;
        let disc = spectral_norm(&(shifted(&trunc, mu).try_inverse().unwrap() * &e * &a_mu_inv));
        let l = profile.lambda(ell + 1);
        let want = l / (mu * (l + mu));
        worst_exact = worst_exact.max((disc - want).abs() / want);

        let approx = randomized_nystrom(&a, ell, &mut r).unwrap();
        let e = a.matrix() - approx.to_dense();
        let err = spectral_norm(&e);
        let disc = spectral_norm(
            &(shifted(&approx.to_dense(), mu).try_inverse().unwrap() * &e * &a_mu_inv),
        );
        let bound = err / (mu * (err + mu));
        worst_ineq = worst_ineq.max(disc / bound - 1.0);
    }
    outcome(
        worst_exact <= 1e-10 && worst_ineq <= ROUNDING,
        format!("attainment rel err {worst_exact:.2e} (limit 1e-10); max excess over bound {worst_ineq:.2e}"),
    )
}

fn c5() -> Outcome {
    let mut r = rng(105);
    let mus = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let mut violations = 0;
    let mut checked = 0;
    let mut first = None;
    for k in 0..200 {
        let n = r.gen_range(10..=200);
        let mut spec = random_spectrum(n, &mut r);
        // κ needs A_μ positive definite only; keep λ_n >= 0.
        spec.iter_mut().for_each(|x| *x = x.max(0.0));
        let profile = SpectrumProfile::new(spec).unwrap();
        let a = synthesize_operator(&profile, &mut r);
        let mu = mus[k % mus.len()];
        let ell = r.gen_range(1..n);
        let approx = randomized_nystrom(&a, ell, &mut r).unwrap();
        let kappa = closed_form_kappa(&approx, mu, &shifted(a.matrix(), mu));
        let err = spectral_norm(&(a.matrix() - approx.to_dense()));
        let b = condition_bounds(approx.lambda_ell(), mu, err, profile.smallest()).unwrap();
        checked += 1;
        if kappa < b.lower * (1.0 - ROUNDING) || kappa > b.upper * (1.0 + ROUNDING) {
            violations += 1;
            first.get_or_insert(format!(
                "n={n} ℓ={ell} μ={mu:.0e}: κ={kappa:.12e} not in [{:.12e}, {:.12e}]",
                b.lower, b.upper
            ));
        }
    }
    let detail = match first {
        Some(f) => format!("{violations} violations in {checked} instances (first: {f})"),
        None => format!("{violations} violations in {checked} instances"),
    };
    outcome(violations == 0, detail)
}

struct C6Trial {
    kappa: f64,
    first_below: Option<usize>,
    envelope_ok: bool,
    // (t, δ_t, 2ρ^t) at the first envelope miss.
    miss: Option<(usize, f64, f64)>,
}

fn a_norm(a_mu: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a_mu * v)).max(0.0).sqrt()
}

fn c6_c7() -> (Outcome, Outcome) {
    let n = 1000;
    let eps = 1e-6;
    let mut r = rng(106);
    let spectra = [
        ("j^-1", SpectrumProfile::power_law(n, 1.0)),
        ("j^-2", SpectrumProfile::power_law(n, 2.0)),
        ("0.9^j", SpectrumProfile::geometric(n, 0.9)),
    ];
    let mut c6_pass = true;
    let mut c6_parts = Vec::new();
    let mut trials = Vec::new();
    for (name, profile) in &spectra {
        let a = synthesize_operator(profile, &mut r);
        for mu in [1e-2, 1e-4] {
            let deff = effective_dimension(profile, mu).unwrap();
            let ell = (2 * (1.5 * deff).ceil() as usize + 1).min(n);
            let a_mu = shifted(a.matrix(), mu);
            let mut sum = 0.0;
            for _ in 0..20 {
                let approx = randomized_nystrom(&a, ell, &mut r).unwrap();
                let p = build_preconditioner(&approx, mu).unwrap();
                let kappa = closed_form_kappa(&approx, mu, &a_mu);
                sum += kappa;
                // δ_t cannot be resolved below about n·eps·√cond(A_μ) in double precision.
                let cond = (profile.largest() + mu) / (profile.smallest() + mu);
                let floor = n as f64 * f64::EPSILON * cond.sqrt();
                trials.push(c7_trial(&a, &a_mu, mu, &p, kappa, eps, floor, &mut r));
            }
            let mean = sum / 20.0;
            c6_pass &= mean < 28.0;
            c6_parts.push(format!("{name} μ={mu:.0e} ℓ={ell}: {mean:.2}"));
        }
    }
    let limit = iteration_bound(56.0, eps).unwrap();
    let eligible: Vec<&C6Trial> = trials.iter().filter(|t| t.kappa <= 56.0).collect();
    let within = eligible
        .iter()
        .filter(|t| t.first_below.is_some_and(|k| k <= limit))
        .count();
    let envelope = eligible.iter().filter(|t| t.envelope_ok).count();
    let worst = eligible
        .iter()
        .filter_map(|t| t.first_below)
        .max()
        .unwrap_or(0);
    let misses: Vec<String> = eligible
        .iter()
        .filter_map(|t| {
            t.miss
                .map(|(k, d, e)| format!("κ={:.6} t={k} δ={d:.1e} 2ρ^t={e:.1e}", t.kappa))
        })
        .take(3)
        .collect();
    (
        outcome(c6_pass, format!("mean κ < 28: {}", c6_parts.join("; "))),
        outcome(
            !eligible.is_empty() && within == eligible.len() && envelope == eligible.len(),
            format!(
                "{} eligible trials; {within} reached δ<1e-6 within {limit} iterations (worst {worst}); {envelope} inside 2ρ^t{}",
                eligible.len(),
                if misses.is_empty() { String::new() } else { format!(" (misses: {})", misses.join("; ")) }
            ),
        ),
    )
}

#[allow(clippy::too_many_arguments)]
fn c7_trial(
    a: &dyn LinearOperator,
    a_mu: &DMatrix<f64>,
    mu: f64,
    p: &NystromPreconditioner,
    kappa: f64,
    eps: f64,
    floor: f64,
    r: &mut ChaCha8Rng,
) -> C6Trial {
    if kappa > 56.0 {
        return C6Trial {
            kappa,
            first_below: None,
            envelope_ok: true,
            miss: None,
        };
    }
    let n = a.dim();
    let x_star = gaussian_vector(n, r);
    let b = a_mu * &x_star;
    let opts = SolveOptions::relative(1e-14)
        .max_iter(200)
        .record_iterates();
    let rep = nystrom_pcg(a, &b, &DVector::zeros(n), mu, p, &opts).unwrap();
    let scale = a_norm(a_mu, &x_star);
    let rho = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let mut first_below = None;
    let mut envelope_ok = true;
    let mut miss = None;
    for (t, x) in rep.iterates.as_ref().unwrap().iter().enumerate() {
        let delta = a_norm(a_mu, &(x - &x_star)) / scale;
        let env = 2.0 * rho.powi(t as i32);
        if delta > env * (1.0 + ROUNDING) + floor {
            envelope_ok = false;
            miss.get_or_insert((t, delta, env));
        }
        if delta < eps {
            first_below = Some(t);
            break;
        }
    }
    C6Trial {
        kappa,
        first_below,
        envelope_ok,
        miss,
    }
}

fn c8() -> Outcome {
    let mut r = rng(108);
    let n = 500;
    let mut violations = 0;
    let mut disagreements = 0;
    for _ in 0..1000 {
        let profile = SpectrumProfile::new(random_spectrum(n, &mut r)).unwrap();
        let mu = 10f64.powf(r.gen_range(-8.0..0.0));
        let lam = profile.eigenvalues();
        let deff: f64 = lam.iter().map(|l| l / (l + mu)).sum();
        for gamma in [0.5, 1.0, 2.0] {
            let mut ok = true;
            for j in 1..=n {
                if j as f64 >= (1.0 + 1.0 / gamma) * deff && lam[j - 1] > gamma * mu * (1.0 + 1e-12)
                {
                    ok = false;
                }
            }
            for k in 1..=n {
                let tail: f64 = lam[k..].iter().sum();
                if k as f64 >= deff && tail > deff * mu * (1.0 + 1e-12) {
                    ok = false;
                }
            }
            if !ok {
                violations += 1;
            }
            if key_lemma_check(&profile, mu, gamma).unwrap().holds() != ok {
                disagreements += 1;
            }
        }
    }
    outcome(
        violations == 0 && disagreements == 0,
        format!("{violations} violations over 3000 (spectrum, γ) pairs; library scan disagreed {disagreements} times"),
    )
}

fn c9() -> Outcome {
    let (d, n_features, ell) = (500, 2000, 150);
    let mut r = rng(109);
    let x = gaussian_points(d, 3, &mut r);
    let g = random_features(&x, n_features, 1.0, &mut r);
    let h = &g / (d as f64).sqrt();
    let svd = h.clone().svd(false, true);
    let w = svd.v_t.unwrap().transpose();
    let s2: Vec<f64> = svd.singular_values.iter().map(|s| s * s).collect();
    let op = gram_ridge(g).unwrap();
    let b = h.transpose() * gaussian_vector(d, &mut r);
    let mus = [1e-2, 1e-4, 1e-6];

    let exact = |mu: f64| -> DVector<f64> {
        let coeff = w.tr_mul(&b);
        let scaled = DVector::from_iterator(
            coeff.len(),
            coeff.iter().zip(&s2).map(|(c, s)| c / (s + mu)),
        );
        &w * scaled + (&b - &w * &coeff) / mu
    };

    let mut monotone = true;
    let mut bound_ok = true;
    let mut pcg_ok = true;
    let mut errs = Vec::new();
    for _ in 0..3 {
        let approx = randomized_nystrom(&op, ell, &mut r).unwrap();
        let wu = w.tr_mul(approx.u());
        let leak = (approx.u() - &w * &wu).norm();
        let e_small = DMatrix::from_diagonal(&DVector::from_column_slice(&s2))
            - &wu
                * DMatrix::from_diagonal(&DVector::from_column_slice(approx.lambda_hat()))
                * wu.transpose();
        let err = eig_desc(&e_small)[0];
        bound_ok &= leak <= 1e-8;
        let mut prev = 0.0;
        let mut row = Vec::new();
        for mu in mus {
            let want = exact(mu);
            let got = woodbury_inverse_apply(approx.u(), approx.lambda_hat(), mu, &b).unwrap();
            let rel = (&got - &want).norm() / want.norm();
            monotone &= rel > prev;
            bound_ok &= rel <= err / mu * (1.0 + ROUNDING);
            prev = rel;
            row.push(format!("{rel:.1e}"));

            let p = build_preconditioner(&approx, mu).unwrap();
            let rep = nystrom_pcg(
                &op,
                &b,
                &DVector::zeros(n_features),
                mu,
                &p,
                &SolveOptions::absolute(1e-10),
            )
            .unwrap();
            pcg_ok &= rep.converged && rep.iterations <= 500;
        }
        errs.push(row.join("/"));
    }
    let op_mu = regularize(&op, 1e-6).unwrap();
    let plain = cg(
        &op_mu,
        &b,
        &DVector::zeros(n_features),
        &SolveOptions::absolute(1e-10),
    )
    .unwrap();
    outcome(
        monotone && bound_ok && pcg_ok && !plain.converged,
        format!(
            "sketch-and-solve rel err (μ=1e-2/1e-4/1e-6) {}; bound ok {bound_ok}; PCG ok {pcg_ok}; CG at 1e-6 converged {} (‖r‖={:.1e})",
            errs.join(", "),
            plain.converged,
            plain.final_residual()
        ),
    )
}

fn c10() -> Outcome {
    let n = 500;
    let (mu, tau, delta, ell0, eps) = (1e-3, 44.0, 0.25, 10, 1e-6f64);
    let profile = SpectrumProfile::geometric(n, 0.7);
    let mut r = rng(110);
    let a = synthesize_operator(&profile, &mut r);
    let a_mu = shifted(a.matrix(), mu);
    let d = effective_dimension(&profile, delta * tau * mu / 11.0).unwrap();
    let ell_tilde = 2 * (2.0 * d).ceil() as usize + 1;
    let max_doublings = (ell_tilde as f64 / ell0 as f64).log2().ceil() as usize;
    let max_ell = 4 * (2.0 * d).ceil() as usize + 2;
    let x = 12.0 * tau / 11.0;
    let tau0 = ((1.0 + x).sqrt() - 1.0) / ((1.0 + x).sqrt() + 1.0);
    let max_iters = ((2.0 / eps).ln() / (1.0 / tau0).ln()).ceil() as usize;

    let cfg = AdaptiveConfig::error_rule(mu, ell0, n).with_tau(tau);
    let (mut ok_a, mut ok_b, mut good, mut good_conv) = (0, 0, 0, 0);
    for _ in 0..40 {
        let out = adaptive_nystrom(&a, &cfg, &mut r).unwrap();
        let a_ok = out.doublings <= max_doublings;
        let b_ok = out.rank() <= max_ell;
        ok_a += a_ok as usize;
        ok_b += b_ok as usize;
        if a_ok && b_ok {
            good += 1;
            let p = build_preconditioner(&out.approximation, mu).unwrap();
            let x_star = gaussian_vector(n, &mut r);
            let b = &a_mu * &x_star;
            let opts = SolveOptions::relative(1e-14)
                .max_iter(max_iters)
                .record_iterates();
            let rep = nystrom_pcg(&a, &b, &DVector::zeros(n), mu, &p, &opts).unwrap();
            let scale = a_norm(&a_mu, &x_star);
            let reached = rep
                .iterates
                .unwrap()
                .iter()
                .any(|x| a_norm(&a_mu, &(x - &x_star)) / scale < eps);
            good_conv += reached as usize;
        }
    }
    outcome(
        ok_a >= 30 && ok_b >= 30 && good_conv == good,
        format!(
            "(a) doublings <= {max_doublings} in {ok_a}/40; (b) ℓ <= {max_ell} in {ok_b}/40; (c) δ<1e-6 within {max_iters} iterations in {good_conv}/{good}"
        ),
    )
}

fn c11() -> Outcome {
    let n = 300;
    let (mu, tau, delta) = (1e-4, 10.0, 0.25);
    let profile = SpectrumProfile::power_law(n, 2.0);
    let mut r = rng(111);
    let a = synthesize_operator(&profile, &mut r);
    let a_mu = shifted(a.matrix(), mu);
    let ell =
        (2 * (2.0 * effective_dimension(&profile, tau * mu).unwrap()).ceil() as usize + 1).min(n);
    let mut hits = 0;
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let approx = randomized_nystrom(&a, ell, &mut r).unwrap();
        let gap =
            (closed_form_kappa(&approx, mu, &a_mu) - (approx.lambda_ell() + mu) / mu).max(0.0);
        worst = worst.max(gap);
        hits += (gap <= tau / delta) as usize;
    }
    outcome(
        hits >= 30,
        format!(
            "ℓ={ell}: (κ - (λ̂_ℓ+μ)/μ)₊ <= {} in {hits}/40 (max {worst:.2})",
            tau / delta
        ),
    )
}

fn c12() -> Outcome {
    let n = 400;
    let mu = 1e-2;
    let mut r = rng(112);
    let a = synthesize_operator(&SpectrumProfile::power_law(n, 2.0), &mut r);
    let approx = randomized_nystrom(&a, 40, &mut r).unwrap();
    let p = build_preconditioner(&approx, mu).unwrap();
    let opts = SolveOptions::relative(1e-13);
    let b = DMatrix::from_fn(n, 4, |_, _| r.sample::<f64, _>(rand_distr::StandardNormal));
    let block = block_nystrom_pcg(&a, &b, mu, &p, &opts).unwrap();
    let mut worst4 = 0.0f64;
    for j in 0..4 {
        let single = nystrom_pcg(
            &a,
            &b.column(j).into_owned(),
            &DVector::zeros(n),
            mu,
            &p,
            &opts,
        )
        .unwrap();
        worst4 = worst4
            .max((block.solutions.column(j) - &single.solution).norm() / single.solution.norm());
    }
    let b1 = b.columns(0, 1).into_owned();
    let one = block_nystrom_pcg(&a, &b1, mu, &p, &opts).unwrap();
    let single = nystrom_pcg(
        &a,
        &b1.column(0).into_owned(),
        &DVector::zeros(n),
        mu,
        &p,
        &opts,
    )
    .unwrap();
    let worst1 = (one.solutions.column(0) - &single.solution).norm() / single.solution.norm();
    outcome(
        block.converged && worst4 <= 1e-8 && worst1 <= 1e-10,
        format!("4-RHS max rel diff {worst4:.2e} (limit 1e-8); 1-RHS rel diff {worst1:.2e} (limit 1e-10)"),
    )
}

fn c13() -> Outcome {
    let mut r = rng(113);
    let mut violations = 0;
    for _ in 0..100 {
        let n = r.gen_range(20..=150);
        let profile = SpectrumProfile::new(random_spectrum(n, &mut r)).unwrap();
        let a = synthesize_operator(&profile, &mut r);
        let ell = r.gen_range(1..n);
        let approx = randomized_nystrom(&a, ell, &mut r).unwrap();
        let q = r.gen_range(1..=20);
        let est = estimate_error_power(&a, approx.u(), approx.lambda_hat(), q, &mut r).unwrap();
        let err = eig_desc(&(a.matrix() - approx.to_dense()))[0];
        if est > err + 1e-12 * profile.largest() {
            violations += 1;
        }
    }

    // Exact top-ℓ factors leave E = Σ_{j>ℓ} λ_j v_j v_jᵀ with λ_{ℓ+1} >= 2λ_{ℓ+2}.
    let mut worst_ratio = f64::INFINITY;
    for _ in 0..30 {
        let n = r.gen_range(20..=150);
        let ell = r.gen_range(1..n - 1);
        let mut eig: Vec<f64> = (0..n)
            .map(|j| {
                if j <= ell {
                    1.0 - 0.001 * j as f64
                } else {
                    0.0
                }
            })
            .collect();
        eig[ell] = 0.4;
        for (k, e) in eig.iter_mut().enumerate().skip(ell + 1) {
            *e = 0.2 * r.gen_range(0.0..1.0) / (1.0 + k as f64);
        }
        eig[ell + 1..].sort_by(|a, b| b.total_cmp(a));
        let profile = SpectrumProfile::new(eig).unwrap();
        let a = synthesize_operator(&profile, &mut r);
        let u = a.eigenvectors().columns(0, ell).into_owned();
        let approx =
            NystromApproximation::from_factors(u, profile.eigenvalues()[..ell].to_vec()).unwrap();
        let est = estimate_error_power(&a, approx.u(), approx.lambda_hat(), 20, &mut r).unwrap();
        let e = eig_desc(&(a.matrix() - approx.to_dense()));
        assert!(e[0] >= 2.0 * e[1], "instance lacks the required gap");
        worst_ratio = worst_ratio.min(est / e[0]);
    }
    outcome(
        violations == 0 && worst_ratio >= 0.99,
        format!(
            "Ê > ‖E‖ in {violations}/100; gap instances min Ê/‖E‖ = {worst_ratio:.4} (limit 0.99)"
        ),
    )
}

fn c14() -> Outcome {
    let n = 1500;
    let (sigma, mu) = (1.0, 1e-6);
    let shift = n as f64 * mu;
    let mut r = rng(114);
    let points = gaussian_points(n, 3, &mut r);
    let k = gaussian_kernel(points, sigma).unwrap();
    let b = gaussian_vector(n, &mut r);
    // Uniform column sampling overestimates how far the tail has decayed, so the
    // ratio rule stops at λ̂_ℓ <= μ rather than the default 10μ.
    let tau = 1.0;
    let cfg = AdaptiveConfig::ratio_rule(shift, 10, n)
        .with_tau(tau)
        .with_method(SketchMethod::ColumnSampling);
    let out = adaptive_nystrom_ratio(&k, &cfg, &mut r).unwrap();
    let p = build_preconditioner(&out.approximation, shift).unwrap();
    let opts = SolveOptions::relative(1e-6).max_iter(20_000);
    let pcg = nystrom_pcg(&k, &b, &DVector::zeros(n), shift, &p, &opts).unwrap();
    let plain = cg(
        &regularize(&k, shift).unwrap(),
        &b,
        &DVector::zeros(n),
        &opts,
    )
    .unwrap();
    let k_mu = shifted(&npcg_core::operator::to_dense(&k), shift);
    let true_rel = (&b - &k_mu * &pcg.solution).norm() / b.norm();
    let pass = pcg.converged
        && true_rel <= 1e-6 * (1.0 + 1e-6)
        && pcg.iterations <= 60
        && plain.iterations >= 4 * pcg.iterations;
    outcome(
        pass,
        format!(
            "τ={tau} ℓ={} PCG {} iterations (‖r‖/‖b‖={true_rel:.1e}), CG {} iterations{}",
            out.rank(),
            pcg.iterations,
            plain.iterations,
            if plain.converged {
                ""
            } else {
                " (not converged)"
            }
        ),
    )
}

fn main() {
    // Optional criterion numbers on the command line restrict the run.
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut results: Vec<(u32, &str, Duration, Outcome)> = Vec::new();
    let mut run = |ids: &[(u32, &'static str)], budget: f64, f: &dyn Fn() -> Vec<Outcome>| {
        if !only.is_empty() && !ids.iter().any(|(id, _)| only.contains(id)) {
            return;
        }
        let t = Instant::now();
        let outs = f();
        let elapsed = t.elapsed();
        for ((id, name), mut o) in ids.iter().copied().zip(outs) {
            if elapsed.as_secs_f64() > budget {
                o.pass = false;
                o.detail
                    .push_str(&format!("; over the {budget:.0}s budget"));
            }
            let tag = if o.pass { "PASS" } else { "FAIL" };
            println!(
                "criterion {id:>2} [{tag}] {name} ({:.1}s): {}",
                elapsed.as_secs_f64(),
                o.detail
            );
            results.push((id, name, elapsed, o));
        }
    };
    run(
        &[
            (1, "definitional equivalence"),
            (2, "Loewner and eigenvalue invariants"),
        ],
        10.0,
        &|| {
            let (a, b) = c1_c2();
            vec![a, b]
        },
    );
    run(&[(3, "expected error bound")], 60.0, &|| vec![c3()]);
    run(&[(4, "regularized inverse discrepancy")], 60.0, &|| {
        vec![c4()]
    });
    run(&[(5, "deterministic condition sandwich")], 60.0, &|| {
        vec![c5()]
    });
    run(
        &[
            (6, "condition number at ℓ = 2⌈1.5 d_eff⌉+1"),
            (7, "PCG iteration envelope"),
        ],
        180.0,
        &|| {
            let (a, b) = c6_c7();
            vec![a, b]
        },
    );
    run(&[(8, "effective dimension lemma scan")], 30.0, &|| {
        vec![c8()]
    });
    run(
        &[(9, "sketch-and-solve vs PCG on random features")],
        120.0,
        &|| vec![c9()],
    );
    run(&[(10, "adaptive doubling, error rule")], 120.0, &|| {
        vec![c10()]
    });
    run(&[(11, "ratio rule condition gap")], 60.0, &|| vec![c11()]);
    run(&[(12, "block PCG")], 30.0, &|| vec![c12()]);
    run(
        &[(13, "power-method error estimate")],
        60.0,
        &|| vec![c13()],
    );
    run(
        &[(14, "kernel ridge regression end to end")],
        120.0,
        &|| vec![c14()],
    );

    let failed: Vec<u32> = results.iter().filter(|r| !r.3.pass).map(|r| r.0).collect();
    println!(
        "{} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if results.is_empty() {
        std::process::exit(1);
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
