//! Two-level water-filling for equal budgets `Δ1 = Δ2 = Δ`.
//!
//! For a common water level `λ'` each component sits on one of three
//! branches:
//!
//! | branch    | condition                 | `δ_i`              | `d̂_i`              |
//! |-----------|---------------------------|--------------------|--------------------|
//! | split     | `λ' < 1 - d_i`            | `λ'`               | `0`                |
//! | shared    | `1 - d_i <= λ' < 1 + d_i` | `(λ' + 1 - d_i)/2` | `(λ' - 1 + d_i)/2` |
//! | saturated | `λ' >= 1 + d_i`           | `1`                | `d_i`              |
//!
//! and `λ'` is fixed by `Σ δ_i = Δ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::check_correlations;
use crate::tolerance::Tolerances;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    Split,
    Shared,
    Saturated,
}

impl Branch {
    pub fn at(lambda: f64, d: f64) -> Self {
        if lambda < 1.0 - d {
            Branch::Split
        } else if lambda < 1.0 + d {
            Branch::Shared
        } else {
            Branch::Saturated
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelComponent {
    pub delta: f64,
    pub dhat: f64,
    pub branch: Branch,
}

/// Solution of the symmetric problem.
#[derive(Clone, Debug, Serialize)]
pub struct WaterLevel {
    pub lambda_prime: f64,
    pub correlations: Vec<f64>,
    pub per_component: Vec<LevelComponent>,
    /// Set when `Δ > n` was clamped to the all-saturated solution.
    pub clamped: bool,
}

impl WaterLevel {
    /// `½ Σ log((1 - d_i²)/(δ_i² - d̂_i²))` in nats.
    pub fn rate_nats(&self) -> f64 {
        let lambda = self.lambda_prime;
        self.correlations
            .iter()
            .zip(&self.per_component)
            .map(|(&d, c)| match c.branch {
                Branch::Split => 0.5 * ((1.0 - d * d) / (lambda * lambda)).ln(),
                // δ² - d̂² = (δ - d̂)(δ + d̂) = (1 - d) λ'
                Branch::Shared => 0.5 * ((1.0 + d) / lambda).ln(),
                Branch::Saturated => 0.0,
            })
            .sum()
    }
}

/// Component distortion at level `lambda`.
pub fn component_at(lambda: f64, d: f64) -> LevelComponent {
    let branch = Branch::at(lambda, d);
    let (delta, dhat) = match branch {
        Branch::Split => (lambda, 0.0),
        Branch::Shared => (0.5 * (lambda + 1.0 - d), 0.5 * (lambda - 1.0 + d)),
        Branch::Saturated => (1.0, d),
    };
    LevelComponent { delta, dhat, branch }
}

/// `Σ δ_i(λ')`: continuous, piecewise linear and nondecreasing.
pub fn total_distortion(d: &[f64], lambda: f64) -> f64 {
    d.iter().map(|&di| component_at(lambda, di).delta).sum()
}

/// Solves `Σ δ_i(λ') = Δ` for `λ'`.
pub fn waterfill(d: &[f64], delta: f64, tol: &Tolerances) -> Result<WaterLevel> {
    check_correlations(d)?;
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::BadDelta(format!("delta = {delta} must be positive and finite")));
    }
    let n = d.len() as f64;
    let top = 1.0 + d.iter().cloned().fold(0.0, f64::max);
    let finish = |lambda: f64, clamped: bool| WaterLevel {
        lambda_prime: lambda,
        correlations: d.to_vec(),
        per_component: d.iter().map(|&di| component_at(lambda, di)).collect(),
        clamped,
    };
    if delta >= n {
        if delta > n {
            log::warn!("delta = {delta} exceeds n = {n}; clamping to the saturated solution");
        }
        return Ok(finish(top, delta > n));
    }

    // Bracket the root between consecutive kinks 1 ± d_i.
    let mut kinks: Vec<f64> = d.iter().flat_map(|&di| [1.0 - di, 1.0 + di]).collect();
    kinks.push(0.0);
    kinks.sort_by(|a, b| a.total_cmp(b));
    let mut lo = 0.0;
    let mut hi = top;
    for &k in &kinks {
        if total_distortion(d, k) < delta {
            lo = k;
        } else {
            hi = k;
            break;
        }
    }

    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..tol.bisection_max_iterations {
        let f = total_distortion(d, lambda) - delta;
        if f.abs() <= tol.bisection_tol {
            break;
        }
        if f < 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        lambda = 0.5 * (lo + hi);
    }
    Ok(finish(lambda, false))
}

/// Symmetric joint RDF in nats.
pub fn symmetric_rdf(d: &[f64], delta: f64, tol: &Tolerances) -> Result<f64> {
    Ok(waterfill(d, delta, tol)?.rate_nats())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const EX2: [f64; 4] = [0.96, 0.78, 0.40, 0.14];

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn second_example_levels() {
        let w = waterfill(&EX2, 3.6, &tol()).unwrap();
        assert_relative_eq!(w.lambda_prime, 1.47, epsilon = 1e-9);
        let delta: Vec<f64> = w.per_component.iter().map(|c| c.delta).collect();
        let dhat: Vec<f64> = w.per_component.iter().map(|c| c.dhat).collect();
        for (x, y) in delta.iter().zip([0.755, 0.845, 1.0, 1.0]) {
            assert_relative_eq!(*x, y, epsilon = 1e-9);
        }
        for (x, y) in dhat.iter().zip([0.715, 0.625, 0.40, 0.14]) {
            assert_relative_eq!(*x, y, epsilon = 1e-9);
        }
        assert!(dhat.iter().all(|&x| x > 0.0));
        assert_eq!(w.per_component[2].branch, Branch::Saturated);
    }

    #[test]
    fn small_budget_splits_evenly() {
        let w = waterfill(&EX2, 0.1, &tol()).unwrap();
        for c in &w.per_component {
            assert_eq!(c.branch, Branch::Split);
            assert_relative_eq!(c.delta, 0.025, epsilon = 1e-12);
            assert_eq!(c.dhat, 0.0);
        }
    }

    #[test]
    fn full_budget_saturates() {
        let w = waterfill(&EX2, 4.0, &tol()).unwrap();
        assert!(!w.clamped);
        assert_eq!(w.rate_nats(), 0.0);
        let w = waterfill(&EX2, 7.0, &tol()).unwrap();
        assert!(w.clamped);
        assert_eq!(w.rate_nats(), 0.0);
        assert!(w.per_component.iter().all(|c| c.delta == 1.0));
    }

    #[test]
    fn zero_correlation_decouples() {
        let d = [0.0; 3];
        let rate = symmetric_rdf(&d, 1.2, &tol()).unwrap();
        assert_relative_eq!(rate, 3.0 * (3.0_f64 / 1.2).ln(), epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(waterfill(&EX2, 0.0, &tol()), Err(Error::BadDelta(_))));
        assert!(matches!(waterfill(&[1.0], 0.5, &tol()), Err(Error::BadCorrelations(_))));
    }

    #[test]
    fn branch_monotonicity_in_d() {
        for k in 0..=200 {
            let lambda = 2.0 * k as f64 / 200.0;
            for w in EX2.windows(2) {
                let (hi, lo) = (component_at(lambda, w[0]), component_at(lambda, w[1]));
                // Branches meet at the kinks only up to roundoff.
                assert!(hi.dhat >= lo.dhat - 1e-15);
                assert!(hi.delta <= lo.delta + 1e-15);
            }
        }
    }

    #[test]
    fn budget_met_and_denominators_positive() {
        for k in 1..200 {
            let delta = 4.0 * k as f64 / 200.0;
            let w = waterfill(&EX2, delta, &tol()).unwrap();
            let total: f64 = w.per_component.iter().map(|c| c.delta).sum();
            assert!((total - delta).abs() <= 1e-10);
            for c in &w.per_component {
                assert!(c.delta > 0.0 && c.delta <= 1.0);
                if c.branch != Branch::Saturated {
                    assert!(c.delta * c.delta - c.dhat * c.dhat > 0.0);
                }
            }
        }
    }

    #[test]
    fn rate_convex_nonincreasing() {
        let h = 0.01;
        let rates: Vec<f64> = (1..400)
            .map(|k| symmetric_rdf(&EX2, h * k as f64, &tol()).unwrap())
            .collect();
        for w in rates.windows(3) {
            assert!(w[1] <= w[0] + 1e-9);
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
    }
}
