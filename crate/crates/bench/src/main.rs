use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use npcg_bench::io::{save_matrix, MatrixFormat};
use npcg_bench::record::write_json_lines;
use npcg_bench::runner::{build_problem, run_benchmark, run_trial, trial_rng};
use npcg_bench::spec::{
    Convention, PointsSpec, RankPolicy, RhsSpec, Sampling, SolverKind, Source, SpectrumSpec,
};
use npcg_bench::{ProblemSpec, Status};
use npcg_core::adaptive::select_rank;
use npcg_core::diagnostics::{effective_dimension, recommended_sketch_size};
use npcg_core::linalg::sym_eigenvalues_desc;
use npcg_core::operator::to_dense;
use npcg_core::SpectrumProfile;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "npcg",
    version,
    about = "Nyström-preconditioned CG for regularized psd systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve (A + μI)x = b once and print the run record.
    Solve(SolveArgs),
    /// Build a Nyström approximation of fixed rank and print its eigenvalues.
    Approx(Common),
    /// Choose the sketch size with the selected policy.
    Adaptive(Common),
    /// Effective dimension and recommended sketch size.
    Deff(Common),
    /// Run repeated trials and emit JSON lines.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Fixed,
    AdaptiveError,
    AdaptiveRatio,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Cg,
    NystromPcg,
    SketchAndSolve,
    BlockPcg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    MatrixMarket,
    CsvDense,
    RawF64,
}

impl From<FormatArg> for MatrixFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::MatrixMarket => MatrixFormat::MatrixMarket,
            FormatArg::CsvDense => MatrixFormat::CsvDense,
            FormatArg::RawF64 => MatrixFormat::RawF64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Mu,
    NMu,
}

#[derive(Args, Clone)]
struct Common {
    /// Symmetric psd matrix, or data points (one per row) with --kernel-sigma.
    #[arg(long, conflicts_with = "spectrum")]
    matrix: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "matrix-market")]
    format: FormatArg,
    /// Synthetic operator: power-law:N:EXPONENT or geometric:N:RATIO.
    #[arg(long)]
    spectrum: Option<String>,
    /// Treat --matrix as points and use a Gaussian kernel of this bandwidth.
    #[arg(long)]
    kernel_sigma: Option<f64>,
    #[arg(long, value_enum, default_value = "n-mu")]
    regularizer_convention: ConventionArg,
    #[arg(long, default_value_t = 1e-3)]
    mu: f64,
    /// Fixed sketch size, or the upper limit for adaptive policies.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 10)]
    ell0: usize,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value = "adaptive-error")]
    policy: Policy,
    /// Sample matrix columns instead of a Gaussian test matrix.
    #[arg(long)]
    column_sampling: bool,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Interpret --tol relative to ‖b‖.
    #[arg(long)]
    relative: bool,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "nystrom-pcg")]
    solver: SolverArg,
    /// Right-hand sides for block-pcg.
    #[arg(long, default_value_t = 4)]
    rhs_count: usize,
    /// Plant a known solution and report the error against it.
    #[arg(long)]
    planted: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    solve: SolveArgs,
    /// Problem spec as JSON; replaces the problem flags.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "bench")]
    id: String,
}

fn parse_spectrum(text: &str) -> anyhow::Result<SpectrumSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    let [kind, n, p] = parts[..] else {
        bail!("spectrum must look like power-law:N:EXPONENT or geometric:N:RATIO");
    };
    let n: usize = n.parse().context("spectrum size")?;
    let p: f64 = p.parse().context("spectrum parameter")?;
    Ok(match kind {
        "power-law" => SpectrumSpec::PowerLaw { n, exponent: p },
        "geometric" => SpectrumSpec::Geometric { n, ratio: p },
        other => bail!("unknown spectrum kind '{other}'"),
    })
}

fn source(c: &Common) -> anyhow::Result<Source> {
    let format = MatrixFormat::from(c.format);
    Ok(match (&c.matrix, &c.spectrum, c.kernel_sigma) {
        (Some(path), None, Some(sigma)) => Source::Krr {
            points: PointsSpec::File {
                path: path.clone(),
                format,
            },
            sigma,
            mu: c.mu,
            convention: match c.regularizer_convention {
                ConventionArg::Mu => Convention::Mu,
                ConventionArg::NMu => Convention::NMu,
            },
        },
        (Some(path), None, None) => Source::File {
            path: path.clone(),
            format,
            mu: c.mu,
        },
        (None, Some(s), None) => Source::Spectrum {
            spectrum: parse_spectrum(s)?,
            mu: c.mu,
        },
        (None, Some(_), Some(_)) => bail!("--kernel-sigma needs --matrix"),
        _ => bail!("give exactly one of --matrix or --spectrum"),
    })
}

fn spec_from(
    c: &Common,
    solver: SolverKind,
    planted: bool,
    id: &str,
) -> anyhow::Result<ProblemSpec> {
    let mut spec = ProblemSpec::new(id, source(c)?);
    spec.solver = solver;
    spec.rank = match c.policy {
        Policy::Fixed => RankPolicy::Fixed {
            ell: c.rank.context("--policy fixed needs --rank")?,
        },
        Policy::AdaptiveError => RankPolicy::AdaptiveError {
            ell0: c.ell0,
            ell_max: c.rank,
            tau: c.tau,
        },
        Policy::AdaptiveRatio => RankPolicy::AdaptiveRatio {
            ell0: c.ell0,
            ell_max: c.rank,
            tau: c.tau,
        },
    };
    spec.sampling = if c.column_sampling {
        Sampling::Columns
    } else {
        Sampling::Gaussian
    };
    spec.rhs = if planted {
        RhsSpec::Planted
    } else {
        RhsSpec::Gaussian
    };
    spec.eta = c.tol;
    spec.relative = c.relative;
    spec.max_iter = c.max_iter;
    spec.seed = c.seed;
    Ok(spec)
}

fn solver_kind(a: &SolveArgs) -> SolverKind {
    match a.solver {
        SolverArg::Cg => SolverKind::Cg,
        SolverArg::NystromPcg => SolverKind::NystromPcg,
        SolverArg::SketchAndSolve => SolverKind::SketchAndSolve,
        SolverArg::BlockPcg => SolverKind::BlockPcg { rhs: a.rhs_count },
    }
}

fn exit_for(statuses: impl IntoIterator<Item = Status>) -> ExitCode {
    let mut code = 0;
    for s in statuses {
        code = match s {
            Status::Failed => return ExitCode::from(1),
            Status::MaxIter | Status::AboveTolerance => 2,
            Status::Converged => code,
        };
    }
    ExitCode::from(code)
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn solve(a: &SolveArgs) -> anyhow::Result<ExitCode> {
    let spec = spec_from(&a.common, solver_kind(a), a.planted, "solve")?;
    let problem = build_problem(&spec)?;
    let outcome = run_trial(&spec, &problem, 0);
    print_json(&outcome.record)?;
    if let (Some(path), Some(x)) = (&a.common.out, &outcome.solution) {
        save_matrix(path, x, MatrixFormat::CsvDense)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(e) = &outcome.record.error {
        eprintln!("error: {e}");
    }
    Ok(exit_for([outcome.record.status]))
}

fn approx(c: &Common, fixed: bool) -> anyhow::Result<ExitCode> {
    let mut c = c.clone();
    if fixed {
        c.policy = Policy::Fixed;
    }
    let spec = spec_from(&c, SolverKind::NystromPcg, false, "approx")?;
    let problem = build_problem(&spec)?;
    let n = problem.dim();
    let cfg = npcg_bench::runner::adaptive_config(&spec, n, problem.shift);
    let outcome = select_rank(problem.op.as_ref(), &cfg, &mut trial_rng(spec.seed, 0))?;
    let mut v = json!({
        "n": n,
        "mu": problem.shift,
        "ell": outcome.rank(),
        "doublings": outcome.doublings,
        "hit_cap": outcome.hit_cap,
        "error_estimate": outcome.error_estimate,
        "posterior_kappa": outcome.posterior_condition_estimate,
        "lambda_ell": outcome.approximation.lambda_ell(),
    });
    if fixed {
        v["lambda_hat"] = json!(outcome.approximation.lambda_hat());
        v["shift_used"] = json!(outcome.approximation.shift_used());
    }
    print_json(&v)?;
    if let Some(path) = &c.out {
        save_matrix(path, outcome.approximation.u(), MatrixFormat::CsvDense)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Dense eigenvalues above this size would take minutes.
const DEFF_DENSE_LIMIT: usize = 5000;

fn deff(c: &Common) -> anyhow::Result<ExitCode> {
    let spec = spec_from(c, SolverKind::Cg, false, "deff")?;
    let problem = build_problem(&spec)?;
    let n = problem.dim();
    if n > DEFF_DENSE_LIMIT {
        bail!("deff computes all eigenvalues densely; n = {n} exceeds {DEFF_DENSE_LIMIT}");
    }
    let eig: Vec<f64> = sym_eigenvalues_desc(&to_dense(problem.op.as_ref()))
        .into_iter()
        .map(|l| l.max(0.0))
        .collect();
    let profile = SpectrumProfile::new(eig)?;
    let shift = problem.shift;
    if shift.is_nan() || shift <= 0.0 {
        bail!("effective dimension needs mu > 0");
    }
    print_json(&json!({
        "n": n,
        "mu": shift,
        "deff": effective_dimension(&profile, shift)?,
        "recommended_ell": recommended_sketch_size(&profile, shift)?,
    }))?;
    Ok(ExitCode::SUCCESS)
}

fn bench(a: &BenchArgs) -> anyhow::Result<ExitCode> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => spec_from(
            &a.solve.common,
            solver_kind(&a.solve),
            a.solve.planted,
            &a.id,
        )?,
    };
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    let report = run_benchmark(&spec)?;
    match &a.solve.common.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_json_lines(BufWriter::new(f), &report.records, &report.summary)?;
        }
        None => write_json_lines(std::io::stdout().lock(), &report.records, &report.summary)?,
    }
    Ok(exit_for(report.records.iter().map(|r| r.status)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Approx(c) => approx(c, true),
        Command::Adaptive(c) => approx(c, false),
        Command::Deff(c) => deff(c),
        Command::Bench(a) => bench(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
