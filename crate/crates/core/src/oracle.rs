//! Direct numerical solution of the matrix problem
//!
//! `max log det Σ  s.t.  0 ⪯ Σ ⪯ Q,  tr Σ_E1 <= Δ1,  tr Σ_E2 <= Δ2`
//!
//! by projected gradient ascent. Projection onto the feasible set runs
//! Dykstra's alternating projections between `{Σ ⪯ Q}` and the two trace
//! half-spaces. Slow compared to the closed forms, but it knows nothing about
//! canonical forms or case analysis, which is what makes it a useful check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{CanonicalForm, DistortionPair, ErrorCovariance, JointGaussianSource};
use crate::tolerance::Tolerances;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step changes `log det Σ` by at most this,
    /// relative to `max(1, |log det Σ|)`.
    pub rel_tol: f64,
    pub dykstra_sweeps: usize,
    /// Dykstra stops early once a sweep moves no entry by more than this.
    pub dykstra_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            rel_tol: 1e-10,
            dykstra_sweeps: 50,
            dykstra_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub sigma: ErrorCovariance,
    pub rate_nats: f64,
    pub iterations: usize,
    /// `max |Σ - P(Σ + Σ^{-1})|`: zero exactly at a stationary point.
    pub kkt_residual: f64,
    pub converged: bool,
}

impl OracleResult {
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged(Box::new(self)))
        }
    }
}

/// `½ (log det q - log det sigma)`.
pub fn mutual_information(q: &Matrix, sigma: &Matrix, tol: &Tolerances) -> Result<f64> {
    Ok(0.5 * (linalg::logdet_psd(q, tol)? - linalg::logdet_psd(sigma, tol)?))
}

struct Feasible<'a> {
    q: &'a Matrix,
    p1: usize,
    delta: DistortionPair,
}

impl Feasible<'_> {
    /// Nearest point of `{Σ ⪯ Q}`: clip the negative spectrum of `Q - Y`.
    fn below_q(&self, y: &Matrix) -> Result<Matrix> {
        let e = linalg::sym_eig(&linalg::symmetrize(&(self.q - y)))?;
        Ok(self.q - e.map(|l| l.max(0.0)))
    }

    fn traces(&self, y: &mut Matrix) {
        let p1 = self.p1;
        let p2 = y.nrows() - p1;
        for (start, size, budget) in [(0, p1, self.delta.delta1), (p1, p2, self.delta.delta2)] {
            let tr: f64 = (start..start + size).map(|i| y[(i, i)]).sum();
            if tr > budget {
                let shift = (tr - budget) / size as f64;
                for i in start..start + size {
                    y[(i, i)] -= shift;
                }
            }
        }
    }

    fn project(&self, y: &Matrix, opts: &OracleOptions) -> Result<Matrix> {
        let mut x = y.clone();
        let mut p = Matrix::zeros(y.nrows(), y.ncols());
        let mut q = p.clone();
        for _ in 0..opts.dykstra_sweeps {
            let a = self.below_q(&(&x + &p))?;
            p = &x + &p - &a;
            let mut next = &a + &q;
            self.traces(&mut next);
            q = &a + &q - &next;
            let moved = linalg::max_abs(&(&next - &x));
            x = next;
            if moved <= opts.dykstra_tol * (1.0 + linalg::max_abs(&x)) {
                break;
            }
        }
        // Dykstra stops slightly outside; restore exact feasibility.
        let x = self.below_q(&x)?;
        let (t1, t2) = self.trace_pair(&x);
        let alpha = 1f64.min(self.delta.delta1 / t1).min(self.delta.delta2 / t2);
        Ok(linalg::symmetrize(&(x * alpha)))
    }

    fn trace_pair(&self, y: &Matrix) -> (f64, f64) {
        let t1 = (0..self.p1).map(|i| y[(i, i)]).sum();
        let t2 = (self.p1..y.nrows()).map(|i| y[(i, i)]).sum();
        (t1, t2)
    }
}

/// Solves the matrix problem for a validated source.
pub fn maxdet_solve(
    src: &JointGaussianSource,
    delta: DistortionPair,
    opts: &OracleOptions,
    tol: &Tolerances,
) -> Result<OracleResult> {
    solve_matrix(src.q(), src.p1(), delta, opts, tol)
}

/// Solves the matrix problem for `Q_cvf` of a canonical form.
pub fn maxdet_solve_cvf(
    cf: &CanonicalForm,
    delta: DistortionPair,
    opts: &OracleOptions,
    tol: &Tolerances,
) -> Result<OracleResult> {
    solve_matrix(&cf.q_cvf(), cf.partition.p1(), delta, opts, tol)
}

fn solve_matrix(
    q: &Matrix,
    p1: usize,
    delta: DistortionPair,
    opts: &OracleOptions,
    tol: &Tolerances,
) -> Result<OracleResult> {
    if !(delta.delta1 > 0.0 && delta.delta2 > 0.0) {
        return Err(Error::InfeasibleProblem(format!(
            "budgets ({}, {}) must be positive",
            delta.delta1, delta.delta2
        )));
    }
    let dim = q.nrows();
    let tr1: f64 = (0..p1).map(|i| q[(i, i)]).sum();
    let tr2: f64 = (p1..dim).map(|i| q[(i, i)]).sum();
    let logdet_q = linalg::logdet_psd(q, tol)?;
    let set = Feasible { q, p1, delta };

    // Strictly feasible: inside both trace budgets and at half of Q.
    let scale = 1f64.min(delta.delta1 / tr1).min(delta.delta2 / tr2);
    let mut sigma = q * (0.5 * scale);
    let mut eig = linalg::sym_eig(&sigma)?;
    let mut f = linalg::logdet_from_eig(&eig, tol)?;
    let mut step = 0.5 * eig.min() * eig.min();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let grad = eig.map(|l| 1.0 / l);
        let candidate = set.project(&(&sigma + &grad * step), opts)?;
        let ce = linalg::sym_eig(&candidate)?;
        let fc = if ce.min() > 0.0 {
            linalg::logdet_from_eig(&ce, tol).unwrap_or(f64::NEG_INFINITY)
        } else {
            f64::NEG_INFINITY
        };
        if fc > f {
            let change = (fc - f) / f.abs().max(1.0);
            sigma = candidate;
            eig = ce;
            f = fc;
            step *= 2.0;
            if change <= opts.rel_tol {
                converged = true;
                break;
            }
        } else {
            step *= 0.5;
            if step < f64::EPSILON * eig.min() * eig.min() {
                // No ascent direction left at machine precision.
                converged = true;
                break;
            }
        }
    }

    let grad = eig.map(|l| 1.0 / l);
    let kkt_residual = linalg::max_abs(&(&sigma - set.project(&(&sigma + grad), opts)?));
    Ok(OracleResult {
        rate_nats: (0.5 * (logdet_q - f)).max(0.0),
        sigma: ErrorCovariance { sigma, p1 },
        iterations,
        kkt_residual,
        converged,
    })
}
