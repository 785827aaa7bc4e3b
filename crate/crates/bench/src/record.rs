//! Per-trial records, aggregated summaries and JSON-lines output.

use std::io::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxIter,
    /// A direct solve (sketch-and-solve) that missed the tolerance.
    AboveTolerance,
    Failed,
}

/// Seconds spent in each phase. `total` spans all three phases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub sketch: f64,
    pub precondition: f64,
    pub solve: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub problem_id: String,
    pub spec_hash: String,
    pub trial: usize,
    /// Seed of the randomized algorithms in this trial.
    pub seed: u64,
    pub solver: String,
    pub n: usize,
    /// Input dimension of the data behind a ridge or kernel problem.
    pub d: Option<usize>,
    /// Diagonal shift actually applied to the operator.
    pub mu: f64,
    pub ell_final: usize,
    pub doublings: usize,
    pub iterations: usize,
    pub status: Status,
    /// Largest final residual norm over right-hand sides.
    pub residual: Option<f64>,
    pub relative_residual: Option<f64>,
    /// Relative error against a planted solution, when there is one.
    pub relative_error: Option<f64>,
    pub error_estimate: Option<f64>,
    pub posterior_kappa: Option<f64>,
    pub times: PhaseTimes,
    pub error: Option<String>,
}

impl BenchRecord {
    /// True when the two records agree on everything except timings.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.times = other.times;
        &a == other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

/// Mean and standard deviation over the trials that did not fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub problem_id: String,
    pub spec_hash: String,
    pub trials: usize,
    pub converged: usize,
    pub max_iter: usize,
    pub failed: usize,
    pub iterations: Option<Stat>,
    pub ell_final: Option<Stat>,
    pub residual: Option<Stat>,
    pub relative_error: Option<Stat>,
    pub error_estimate: Option<Stat>,
    pub posterior_kappa: Option<Stat>,
    pub sketch_time: Option<Stat>,
    pub precondition_time: Option<Stat>,
    pub solve_time: Option<Stat>,
    pub total_time: Option<Stat>,
}

impl BenchSummary {
    pub fn from_records(problem_id: &str, spec_hash: &str, records: &[BenchRecord]) -> Self {
        let ok: Vec<&BenchRecord> = records
            .iter()
            .filter(|r| r.status != Status::Failed)
            .collect();
        let stat = |f: &dyn Fn(&BenchRecord) -> Option<f64>| {
            let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
            Stat::of(&v)
        };
        let count = |s: Status| records.iter().filter(|r| r.status == s).count();
        Self {
            problem_id: problem_id.to_owned(),
            spec_hash: spec_hash.to_owned(),
            trials: records.len(),
            converged: count(Status::Converged),
            max_iter: count(Status::MaxIter),
            failed: count(Status::Failed),
            iterations: stat(&|r| Some(r.iterations as f64)),
            ell_final: stat(&|r| Some(r.ell_final as f64)),
            residual: stat(&|r| r.residual),
            relative_error: stat(&|r| r.relative_error),
            error_estimate: stat(&|r| r.error_estimate),
            posterior_kappa: stat(&|r| r.posterior_kappa),
            sketch_time: stat(&|r| Some(r.times.sketch)),
            precondition_time: stat(&|r| Some(r.times.precondition)),
            solve_time: stat(&|r| Some(r.times.solve)),
            total_time: stat(&|r| Some(r.times.total)),
        }
    }
}

/// One line of JSON-lines output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Line {
    Trial(BenchRecord),
    Summary(BenchSummary),
}

pub fn write_json_lines<W: Write>(
    mut out: W,
    records: &[BenchRecord],
    summary: &BenchSummary,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &Line::Trial(r.clone()))?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut out, &Line::Summary(summary.clone()))?;
    out.write_all(b"\n")?;
    out.flush()
}
