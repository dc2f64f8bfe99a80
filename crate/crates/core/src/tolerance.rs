//! Numerical thresholds shared by every module.
//!
//! All checks in the crate read their thresholds from a [`Tolerances`]
//! record that callers pass explicitly. Relative thresholds are scaled by the
//! magnitude of the data they test so results survive a change of units.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `max |q_ij - q_ji| <= symmetry_rel * (1 + max |q|)`.
    pub symmetry_rel: f64,
    /// `lambda_min >= -psd_rel * lambda_max`.
    pub psd_rel: f64,
    /// Magnitudes at or below this are treated as zero by scalar pseudoinverses.
    pub pinv_zero: f64,
    /// Canonical correlations `>= 1 - eps_one` count as identical components.
    pub eps_one: f64,
    /// Canonical correlations `<= eps_zero` count as independent components.
    pub eps_zero: f64,
    /// Slack allowed in the per-component feasibility constraints.
    pub feasibility: f64,
    /// Slack allowed in region membership inequalities.
    pub region: f64,
    /// Newton stops once the residual infinity norm drops to this level.
    pub newton_residual: f64,
    pub newton_max_iterations: usize,
    /// Unknown distortions are clipped into `(newton_box, 1 - newton_box)`.
    pub newton_box: f64,
    /// Smallest step fraction tried by the residual backtracking.
    pub backtrack_floor: f64,
    pub homotopy_steps: usize,
    /// Water-level bisection stops when `|sum delta_i - delta| <= bisection_tol`.
    pub bisection_tol: f64,
    pub bisection_max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            symmetry_rel: 1e-10,
            psd_rel: 1e-9,
            pinv_zero: 1e-12,
            eps_one: 1e-9,
            eps_zero: 1e-9,
            feasibility: 1e-8,
            region: 1e-10,
            newton_residual: 1e-11,
            newton_max_iterations: 200,
            newton_box: 1e-10,
            backtrack_floor: 1.0 / (1u64 << 20) as f64,
            homotopy_steps: 10,
            bisection_tol: 1e-12,
            bisection_max_iterations: 100,
        }
    }
}
