//! Serializable description of one benchmark problem and how to solve it.

use std::path::PathBuf;

use npcg_core::operator::RegularizerConvention;
use npcg_core::solvers::DEFAULT_MAX_ITER;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::MatrixFormat;
use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectrumSpec {
    /// `λ_j = j^{-exponent}`.
    PowerLaw {
        n: usize,
        exponent: f64,
    },
    /// `λ_j = ratio^j`.
    Geometric {
        n: usize,
        ratio: f64,
    },
    Values {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DesignSpec {
    File {
        path: PathBuf,
        format: MatrixFormat,
    },
    /// `samples` Gaussian points in `input_dim` dimensions mapped through
    /// `features` random Fourier features.
    RandomFeatures {
        samples: usize,
        input_dim: usize,
        features: usize,
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PointsSpec {
    File { path: PathBuf, format: MatrixFormat },
    Gaussian { n: usize, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    Mu,
    #[default]
    NMu,
}

impl From<Convention> for RegularizerConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::Mu => RegularizerConvention::Mu,
            Convention::NMu => RegularizerConvention::NMu,
        }
    }
}

/// Where the psd operator comes from. `mu` is the ridge parameter; for
/// kernel problems the diagonal shift follows `convention`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Source {
    File {
        path: PathBuf,
        format: MatrixFormat,
        mu: f64,
    },
    Spectrum {
        spectrum: SpectrumSpec,
        mu: f64,
    },
    /// `(GᵀG/n + μI)x = b` for a design matrix `G`.
    Ridge {
        design: DesignSpec,
        mu: f64,
    },
    /// `(K + shift·I)α = b` with a Gaussian kernel of bandwidth `sigma`.
    Krr {
        points: PointsSpec,
        sigma: f64,
        mu: f64,
        #[serde(default)]
        convention: Convention,
    },
}

impl Source {
    pub fn mu(&self) -> f64 {
        match self {
            Self::File { mu, .. }
            | Self::Spectrum { mu, .. }
            | Self::Ridge { mu, .. }
            | Self::Krr { mu, .. } => *mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolverKind {
    Cg,
    NystromPcg,
    SketchAndSolve,
    BlockPcg { rhs: usize },
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cg => "cg",
            Self::NystromPcg => "nystrom-pcg",
            Self::SketchAndSolve => "sketch-and-solve",
            Self::BlockPcg { .. } => "block-pcg",
        }
    }

    pub fn rhs_count(&self) -> usize {
        match self {
            Self::BlockPcg { rhs } => *rhs,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RankPolicy {
    Fixed {
        ell: usize,
    },
    AdaptiveError {
        ell0: usize,
        /// Defaults to the problem dimension.
        ell_max: Option<usize>,
        tau: Option<f64>,
    },
    AdaptiveRatio {
        ell0: usize,
        ell_max: Option<usize>,
        tau: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    #[default]
    Gaussian,
    Columns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsSpec {
    /// Standard normal entries.
    #[default]
    Gaussian,
    /// `b = A_μ x⋆` for a standard normal `x⋆`; records report the
    /// relative error against `x⋆`.
    Planted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: String,
    pub source: Source,
    pub solver: SolverKind,
    pub rank: RankPolicy,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub rhs: RhsSpec,
    /// Residual tolerance `η`.
    pub eta: f64,
    /// Stop at `‖r‖ <= η‖b‖` instead of `‖r‖ <= η`.
    #[serde(default)]
    pub relative: bool,
    pub max_iter: usize,
    pub seed: u64,
    pub trials: usize,
}

impl ProblemSpec {
    /// Nyström PCG with the error-based adaptive rank, absolute
    /// tolerance `1e-10`, one trial.
    pub fn new(id: impl Into<String>, source: Source) -> Self {
        Self {
            id: id.into(),
            source,
            solver: SolverKind::NystromPcg,
            rank: RankPolicy::AdaptiveError {
                ell0: 10,
                ell_max: None,
                tau: None,
            },
            sampling: Sampling::Gaussian,
            rhs: RhsSpec::Gaussian,
            eta: 1e-10,
            relative: false,
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            trials: 1,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: String| Err(BenchError::Spec(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be positive, got {}", self.eta));
        }
        if self.max_iter == 0 {
            return fail("max_iter must be at least 1".into());
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        let mu = self.source.mu();
        let needs_positive = !matches!(self.solver, SolverKind::Cg);
        if !(mu >= 0.0 && mu.is_finite()) || (needs_positive && mu == 0.0) {
            return fail(format!("mu = {mu} is not valid for {}", self.solver.name()));
        }
        if self.solver.rhs_count() == 0 {
            return fail("block-pcg needs at least one right-hand side".into());
        }
        match self.rank {
            RankPolicy::Fixed { ell: 0 } => return fail("fixed rank must be >= 1".into()),
            RankPolicy::AdaptiveError { ell0, ell_max, tau }
            | RankPolicy::AdaptiveRatio { ell0, ell_max, tau } => {
                if ell0 == 0 || ell_max.is_some_and(|m| m < ell0) {
                    return fail(format!(
                        "bad adaptive range ell0 = {ell0}, ell_max = {ell_max:?}"
                    ));
                }
                if tau.is_some_and(|t| !(t > 0.0)) {
                    return fail("tau must be positive".into());
                }
            }
            _ => {}
        }
        match &self.source {
            Source::Krr { sigma, .. }
            | Source::Ridge {
                design: DesignSpec::RandomFeatures { sigma, .. },
                ..
            } if !(*sigma > 0.0) => fail(format!("sigma must be positive, got {sigma}")),
            Source::Spectrum {
                spectrum: SpectrumSpec::PowerLaw { n: 0, .. } | SpectrumSpec::Geometric { n: 0, .. },
                ..
            } => fail("spectrum needs n >= 1".into()),
            _ => Ok(()),
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
