//! Damped Newton iteration with residual backtracking and box clipping.

use nalgebra::DVector;
use serde::Serialize;

use crate::linalg::Matrix;
use crate::tolerance::Tolerances;

/// Final iterate of a Newton solve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonState {
    pub unknowns: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// A square nonlinear system. `residual` returns `None` outside the domain.
pub trait System {
    fn dim(&self) -> usize;
    /// The first `boxed()` unknowns are distortions and stay inside the box.
    fn boxed(&self) -> usize;
    fn residual(&self, x: &[f64]) -> Option<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Matrix;
    /// Magnitude of the terms the residual is a difference of. The stopping
    /// test is `|F| <= newton_residual * max(1, scale)`.
    fn scale(&self, _x: &[f64]) -> f64 {
        1.0
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn clip(x: &mut [f64], boxed: usize, eps: f64) {
    for v in x.iter_mut().take(boxed) {
        *v = v.clamp(eps, 1.0 - eps);
    }
}

/// Runs damped Newton from `x0`. On failure the last iterate is returned as
/// the error so callers can report it.
pub fn solve<S: System>(sys: &S, x0: &[f64], tol: &Tolerances) -> Result<NewtonState, NewtonState> {
    let mut x = x0.to_vec();
    clip(&mut x, sys.boxed(), tol.newton_box);
    let Some(mut f) = sys.residual(&x) else {
        return Err(NewtonState {
            unknowns: x,
            residual_norm: f64::INFINITY,
            iterations: 0,
        });
    };
    let mut norm = inf_norm(&f);
    let done = |x: &[f64], norm: f64| norm <= tol.newton_residual * sys.scale(x).max(1.0);

    for it in 0..tol.newton_max_iterations {
        if done(&x, norm) {
            return Ok(NewtonState {
                unknowns: x,
                residual_norm: norm,
                iterations: it,
            });
        }
        let rhs = -DVector::from_vec(f.clone());
        let jac = sys.jacobian(&x);
        // Residual noise from rounding the unknowns, e.g. `1 - b` for `b` near 1.
        let floor = 64.0 * f64::EPSILON * jac.amax() * x.iter().fold(1.0, |m: f64, v| m.max(v.abs()));
        let Some(step) = jac.lu().solve(&rhs) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t >= tol.backtrack_floor {
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            clip(&mut trial, sys.boxed(), tol.newton_box);
            if let Some(ft) = sys.residual(&trial) {
                let nt = inf_norm(&ft);
                if nt < norm {
                    x = trial;
                    f = ft;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // No step decreases the residual: accept if it is at roundoff level
            // and the iterate is not held by the box.
            let pinned = x
                .iter()
                .take(sys.boxed())
                .any(|&v| v <= tol.newton_box || v >= 1.0 - tol.newton_box);
            let converged = done(&x, norm) || (norm <= floor && !pinned);
            let state = NewtonState {
                unknowns: x,
                residual_norm: norm,
                iterations: it + 1,
            };
            return if converged { Ok(state) } else { Err(state) };
        }
    }
    let converged = done(&x, norm);
    let state = NewtonState {
        unknowns: x,
        residual_norm: norm,
        iterations: tol.newton_max_iterations,
    };
    if converged {
        Ok(state)
    } else {
        Err(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // x² = 2, y = x.
    struct Root;

    impl System for Root {
        fn dim(&self) -> usize {
            2
        }
        fn boxed(&self) -> usize {
            0
        }
        fn residual(&self, x: &[f64]) -> Option<Vec<f64>> {
            Some(vec![x[0] * x[0] - 2.0, x[1] - x[0]])
        }
        fn jacobian(&self, x: &[f64]) -> Matrix {
            Matrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, -1.0, 1.0])
        }
    }

    #[test]
    fn finds_root() {
        let s = solve(&Root, &[1.0, 0.0], &Tolerances::default()).unwrap();
        assert!((s.unknowns[0] - 2f64.sqrt()).abs() < 1e-10);
        assert!(s.iterations < 10);
    }

    // Residual undefined for x <= 0.
    struct Log;

    impl System for Log {
        fn dim(&self) -> usize {
            1
        }
        fn boxed(&self) -> usize {
            1
        }
        fn residual(&self, x: &[f64]) -> Option<Vec<f64>> {
            Some(vec![x[0].ln() - 0.9f64.ln()])
        }
        fn jacobian(&self, x: &[f64]) -> Matrix {
            Matrix::from_element(1, 1, 1.0 / x[0])
        }
    }

    #[test]
    fn stays_in_box() {
        let s = solve(&Log, &[0.001], &Tolerances::default()).unwrap();
        assert!((s.unknowns[0] - 0.9).abs() < 1e-10);
    }
}
