//! Builds problems from a [`ProblemSpec`] and runs the configured
//! pipeline, one record per trial.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use npcg_core::adaptive::{select_rank, AdaptiveConfig, AdaptiveOutcome, SketchMethod};
use npcg_core::operator::{
    gaussian_kernel, gram_ridge, synthesize_operator, LinearOperator, RegularizerConvention,
};
use npcg_core::precond::{build_preconditioner, woodbury_inverse_apply};
use npcg_core::solvers::{block_nystrom_pcg, cg, nystrom_pcg};
use npcg_core::{
    operator::regularize, Error, NystromPreconditioner, SolveOptions, SpectrumProfile,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::features::{gaussian_points, random_features};
use crate::io::{load_matrix, load_symmetric};
use crate::record::{BenchRecord, BenchSummary, PhaseTimes, Status};
use crate::spec::{
    DesignSpec, PointsSpec, ProblemSpec, RankPolicy, RhsSpec, Sampling, SolverKind, Source,
    SpectrumSpec,
};
use crate::BenchError;

/// Caps the number of trials run in parallel.
pub const THREADS_ENV: &str = "NPCG_THREADS";

/// A concrete system `(A + shift·I)X = B`.
pub struct Problem {
    pub op: Box<dyn LinearOperator>,
    pub shift: f64,
    pub d: Option<usize>,
    pub rhs: DMatrix<f64>,
    pub planted: Option<DMatrix<f64>>,
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

/// RNG for problem generation; shared by every trial.
pub fn problem_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for the randomized algorithms of one trial, seeded with
/// `seed + trial` on a stream disjoint from problem generation.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, trial));
    rng.set_stream(1);
    rng
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

pub fn build_problem(spec: &ProblemSpec) -> Result<Problem, BenchError> {
    spec.validate()?;
    let mut rng = problem_rng(spec.seed);
    let mu = spec.source.mu();
    let (op, shift, d): (Box<dyn LinearOperator>, f64, Option<usize>) = match &spec.source {
        Source::File { path, format, .. } => (Box::new(load_symmetric(path, *format)?), mu, None),
        Source::Spectrum { spectrum, .. } => {
            let profile = match spectrum {
                SpectrumSpec::PowerLaw { n, exponent } => SpectrumProfile::power_law(*n, *exponent),
                SpectrumSpec::Geometric { n, ratio } => SpectrumProfile::geometric(*n, *ratio),
                SpectrumSpec::Values { values } => SpectrumProfile::new(values.clone())?,
            };
            (Box::new(synthesize_operator(&profile, &mut rng)), mu, None)
        }
        Source::Ridge { design, .. } => {
            let g = match design {
                DesignSpec::File { path, format } => load_matrix(path, *format)?,
                DesignSpec::RandomFeatures {
                    samples,
                    input_dim,
                    features,
                    sigma,
                } => {
                    let x = gaussian_points(*samples, *input_dim, &mut rng);
                    random_features(&x, *features, *sigma, &mut rng)
                }
            };
            let d = g.nrows();
            (Box::new(gram_ridge(g)?), mu, Some(d))
        }
        Source::Krr {
            points,
            sigma,
            convention,
            ..
        } => {
            let x = match points {
                PointsSpec::File { path, format } => load_matrix(path, *format)?,
                PointsSpec::Gaussian { n, dim } => gaussian_points(*n, *dim, &mut rng),
            };
            let n = x.nrows();
            let d = x.ncols();
            let shift = RegularizerConvention::from(*convention).shift(n, mu);
            (Box::new(gaussian_kernel(x, *sigma)?), shift, Some(d))
        }
    };
    let n = op.dim();
    let s = spec.solver.rhs_count();
    let normal = |rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(n, s, |_, _| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
        })
    };
    let (rhs, planted) = match spec.rhs {
        RhsSpec::Gaussian => (normal(&mut rng), None),
        RhsSpec::Planted => {
            let x = normal(&mut rng);
            let op_mu = regularize(op.as_ref(), shift)?;
            (op_mu.apply_block(&x), Some(x))
        }
    };
    Ok(Problem {
        op,
        shift,
        d,
        rhs,
        planted,
    })
}

/// Per-trial result plus the computed solution, which records omit.
pub struct TrialOutcome {
    pub record: BenchRecord,
    pub solution: Option<DMatrix<f64>>,
}

pub fn adaptive_config(spec: &ProblemSpec, n: usize, shift: f64) -> AdaptiveConfig {
    let cfg = match spec.rank {
        RankPolicy::Fixed { ell } => AdaptiveConfig::fixed(shift, ell),
        RankPolicy::AdaptiveError { ell0, ell_max, tau } => {
            let cfg = AdaptiveConfig::error_rule(shift, ell0, ell_max.unwrap_or(n).min(n));
            tau.map_or(cfg.clone(), |t| cfg.with_tau(t))
        }
        RankPolicy::AdaptiveRatio { ell0, ell_max, tau } => {
            let cfg = AdaptiveConfig::ratio_rule(shift, ell0, ell_max.unwrap_or(n).min(n));
            tau.map_or(cfg.clone(), |t| cfg.with_tau(t))
        }
    };
    cfg.with_method(match spec.sampling {
        Sampling::Gaussian => SketchMethod::Gaussian,
        Sampling::Columns => SketchMethod::ColumnSampling,
    })
}

struct Partial {
    record: BenchRecord,
    start: Instant,
}

impl Partial {
    fn finish(mut self, status: Status, error: Option<String>) -> BenchRecord {
        let t = &mut self.record.times;
        t.total = self
            .start
            .elapsed()
            .as_secs_f64()
            .max(t.sketch + t.precondition + t.solve);
        self.record.status = status;
        self.record.error = error;
        self.record
    }
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *slot = t.elapsed().as_secs_f64();
    out
}

/// Runs trial `trial` of `spec` on an already built problem. Solver
/// failures end up in `record.error` with status `failed`.
pub fn run_trial(spec: &ProblemSpec, problem: &Problem, trial: usize) -> TrialOutcome {
    let n = problem.dim();
    let mut partial = Partial {
        record: BenchRecord {
            problem_id: spec.id.clone(),
            spec_hash: spec.hash(),
            trial,
            seed: trial_seed(spec.seed, trial),
            solver: spec.solver.name().to_owned(),
            n,
            d: problem.d,
            mu: problem.shift,
            ell_final: 0,
            doublings: 0,
            iterations: 0,
            status: Status::Failed,
            residual: None,
            relative_residual: None,
            relative_error: None,
            error_estimate: None,
            posterior_kappa: None,
            times: PhaseTimes::default(),
            error: None,
        },
        start: Instant::now(),
    };
    match execute(spec, problem, trial, &mut partial.record) {
        Ok((status, solution)) => TrialOutcome {
            record: partial.finish(status, None),
            solution: Some(solution),
        },
        Err(e) => {
            if let Error::Diverged {
                residual_history, ..
            } = &e
            {
                partial.record.residual =
                    residual_history.last().copied().filter(|r| r.is_finite());
            }
            TrialOutcome {
                record: partial.finish(Status::Failed, Some(e.to_string())),
                solution: None,
            }
        }
    }
}

fn execute(
    spec: &ProblemSpec,
    problem: &Problem,
    trial: usize,
    rec: &mut BenchRecord,
) -> Result<(Status, DMatrix<f64>), Error> {
    let mut rng = trial_rng(spec.seed, trial);
    let op = problem.op.as_ref();
    let n = problem.dim();
    let shift = problem.shift;
    let opts = if spec.relative {
        SolveOptions::relative(spec.eta)
    } else {
        SolveOptions::absolute(spec.eta)
    }
    .max_iter(spec.max_iter);

    let outcome: Option<AdaptiveOutcome> = match spec.solver {
        SolverKind::Cg => None,
        _ => {
            let cfg = adaptive_config(spec, n, shift);
            Some(timed(&mut rec.times.sketch, || {
                select_rank(op, &cfg, &mut rng)
            })?)
        }
    };
    if let Some(o) = &outcome {
        rec.ell_final = o.rank();
        rec.doublings = o.doublings;
        rec.error_estimate = o.error_estimate;
        rec.posterior_kappa = Some(o.posterior_condition_estimate);
    }

    let b = &problem.rhs;
    let (solution, iterations, residuals, converged) = match spec.solver {
        SolverKind::Cg => {
            let op_mu = regularize(op, shift)?;
            let col = b.column(0).into_owned();
            let rep = timed(&mut rec.times.solve, || {
                cg(&op_mu, &col, &DVector::zeros(n), &opts)
            })?;
            (
                DMatrix::from_columns(std::slice::from_ref(&rep.solution)),
                rep.iterations,
                vec![rep.final_residual()],
                rep.converged,
            )
        }
        SolverKind::NystromPcg => {
            let approx = &outcome.as_ref().expect("sketched").approximation;
            let p = timed(&mut rec.times.precondition, || {
                build_preconditioner(approx, shift)
            })?;
            let col = b.column(0).into_owned();
            let rep = timed(&mut rec.times.solve, || {
                nystrom_pcg(op, &col, &DVector::zeros(n), shift, &p, &opts)
            })?;
            (
                DMatrix::from_columns(std::slice::from_ref(&rep.solution)),
                rep.iterations,
                vec![rep.final_residual()],
                rep.converged,
            )
        }
        SolverKind::BlockPcg { .. } => {
            let approx = &outcome.as_ref().expect("sketched").approximation;
            let p: NystromPreconditioner = timed(&mut rec.times.precondition, || {
                build_preconditioner(approx, shift)
            })?;
            let rep = timed(&mut rec.times.solve, || {
                block_nystrom_pcg(op, b, shift, &p, &opts)
            })?;
            let finals = rep
                .residual_histories
                .iter()
                .map(|h| *h.last().unwrap_or(&0.0))
                .collect();
            (rep.solutions, rep.iterations, finals, rep.converged)
        }
        SolverKind::SketchAndSolve => {
            let approx = &outcome.as_ref().expect("sketched").approximation;
            let col = b.column(0).into_owned();
            let (x, r) = timed(&mut rec.times.solve, || -> Result<_, Error> {
                let x = woodbury_inverse_apply(approx.u(), approx.lambda_hat(), shift, &col)?;
                let r = (&col - regularize(op, shift)?.apply(&x)).norm();
                Ok((x, r))
            })?;
            let threshold = opts.tolerance.threshold(col.norm());
            (DMatrix::from_columns(&[x]), 0, vec![r], r <= threshold)
        }
    };

    rec.iterations = iterations;
    let worst = residuals.iter().copied().fold(0.0, f64::max);
    rec.residual = Some(worst);
    let rel = residuals
        .iter()
        .zip(b.column_iter())
        .map(|(r, c)| if c.norm() > 0.0 { r / c.norm() } else { *r })
        .fold(0.0, f64::max);
    rec.relative_residual = Some(rel);
    if let Some(x) = &problem.planted {
        rec.relative_error = Some((&solution - x).norm() / x.norm());
    }
    let status = if converged {
        Status::Converged
    } else if matches!(spec.solver, SolverKind::SketchAndSolve) {
        Status::AboveTolerance
    } else {
        Status::MaxIter
    };
    Ok((status, solution))
}

/// All trial records in trial order, and their summary.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
    pub summary: BenchSummary,
}

/// Thread cap from `NPCG_THREADS`; `None` when unset or not a positive
/// integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
}

/// Builds the problem once and runs `spec.trials` trials, in parallel up
/// to the `NPCG_THREADS` cap.
pub fn run_benchmark(spec: &ProblemSpec) -> Result<BenchReport, BenchError> {
    let problem = build_problem(spec)?;
    let run = || -> Vec<BenchRecord> {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| run_trial(spec, &problem, t).record)
            .collect()
    };
    let records = match thread_cap() {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| BenchError::Spec(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    let summary = BenchSummary::from_records(&spec.id, &spec.hash(), &records);
    Ok(BenchReport { records, summary })
}
