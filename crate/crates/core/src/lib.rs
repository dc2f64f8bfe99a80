//! Joint rate-distortion function of a pair of correlated multivariate
//! Gaussian sources, each with its own square-error budget.
//!
//! Pipeline: validate a covariance ([`model`]), bring it to canonical
//! variable form ([`cvf`]), then evaluate the rate on the canonical
//! correlations with [`solver::joint_rdf`]. [`symmetric`] and [`scalar`] are
//! closed forms for `Δ1 = Δ2` and for a single pair; [`oracle`] solves the
//! underlying matrix problem directly and serves as a check on all of them.

pub mod cvf;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod solver;
pub mod symmetric;
pub mod tolerance;

pub use cvf::{correlated_block, to_cvf};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use model::{
    CanonicalForm, CaseLabel, ComponentAllocation, DistortionPair, ErrorCovariance, JointGaussianSource, Partition,
    RdfAllocation,
};
pub use oracle::{maxdet_solve, maxdet_solve_cvf, mutual_information, OracleOptions, OracleResult};
pub use scalar::{scalar_rdf, ScalarRegion};
pub use solver::{joint_rdf, rate_from_allocation, DispatchReport, NewtonState, RegionLabel};
pub use symmetric::{symmetric_rdf, waterfill, WaterLevel};
pub use tolerance::Tolerances;
