use thiserror::Error;

use crate::oracle::OracleResult;
use crate::solver::DispatchReport;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("diagonal block Q_X{block} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    DiagonalBlockSingular { block: usize, min_eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("{routine} did not converge within {iterations} sweeps")]
    NoConvergence { routine: &'static str, iterations: usize },

    #[error("matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularMatrix { min_eigenvalue: f64 },

    #[error("invalid distortion: {0}")]
    BadDelta(String),

    #[error("invalid correlation coefficients: {0}")]
    BadCorrelations(String),

    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),

    #[error("nonpositive rate denominator {value:e} at component {index}")]
    NonpositiveDenominator { index: usize, value: f64 },

    #[error("no feasible case found for (Δ1, Δ2) = ({}, {})", .0.delta1, .0.delta2)]
    NoFeasibleCase(Box<DispatchReport>),

    #[error("oracle stopped after {} iterations without converging", .0.iterations)]
    NotConverged(Box<OracleResult>),

    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),
}

impl Error {
    /// Stable variant name, used by the CLI on stderr.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NotPsd { .. } => "NotPSD",
            Error::DiagonalBlockSingular { .. } => "DiagonalBlockSingular",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::BadDelta(_) => "BadDelta",
            Error::BadCorrelations(_) => "BadCorrelations",
            Error::InfeasibleAllocation(_) => "InfeasibleAllocation",
            Error::NonpositiveDenominator { .. } => "NonpositiveDenominator",
            Error::NoFeasibleCase(_) => "NoFeasibleCase",
            Error::NotConverged(_) => "NotConverged",
            Error::InfeasibleProblem(_) => "InfeasibleProblem",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
