//! Stationarity systems for the active-correlation cases.
//!
//! An active component with error variances `(a, b)` and correlation `d`
//! reconstructs with `d̂ = d - sqrt((1-a)(1-b))`, which leaves
//!
//! `g(a, b) = ab - d̂² = a + b - 1 - d² + 2d sqrt((1-a)(1-b))`
//!
//! as the determinant of its error block. Both systems below are gradients of
//! `Σ log g_i` plus a budget term, so the Jacobians are symmetric.

use crate::linalg::Matrix;

use super::newton::System;

/// `g` and its first and second derivatives at one component.
#[derive(Clone, Copy, Debug)]
pub struct Active {
    pub g: f64,
    pub ga: f64,
    pub gb: f64,
    pub gaa: f64,
    pub gbb: f64,
    pub gab: f64,
}

impl Active {
    pub fn eval(d: f64, a: f64, b: f64) -> Option<Self> {
        let (x, y) = (1.0 - a, 1.0 - b);
        if !(x > 0.0 && y > 0.0 && a > 0.0 && b > 0.0) {
            return None;
        }
        let r = (x * y).sqrt();
        // Same values as the expanded forms, without their cancellation when
        // `a`, `b` and `1 - d²` are all small.
        let dhat = d - r;
        let g = a * b - dhat * dhat;
        if g <= 0.0 || !g.is_finite() {
            return None;
        }
        Some(Self {
            g,
            ga: b - dhat * (y / x).sqrt(),
            gb: a - dhat * (x / y).sqrt(),
            gaa: -d * r / (2.0 * x * x),
            gbb: -d * r / (2.0 * y * y),
            gab: d / (2.0 * r),
        })
    }

    /// Partials of `(g_a/g, g_b/g)`, returned as `[[∂a, ∂b], [∂a, ∂b]]`.
    fn log_hessian(&self) -> [[f64; 2]; 2] {
        let g2 = self.g * self.g;
        let aa = (self.gaa * self.g - self.ga * self.ga) / g2;
        let ab = (self.gab * self.g - self.ga * self.gb) / g2;
        let bb = (self.gbb * self.g - self.gb * self.gb) / g2;
        [[aa, ab], [ab, bb]]
    }
}

/// Correlation estimate of an active component.
pub fn active_dhat(d: f64, a: f64, b: f64) -> f64 {
    d - ((1.0 - a) * (1.0 - b)).max(0.0).sqrt()
}

/// `κ` active components; the remaining `n - κ` share what is left of each
/// budget equally with `d̂ = 0`.
///
/// Unknowns `(a_1..a_κ, b_1..b_κ)`, equations
/// `g_a,i/g_i - 1/a_r = 0` and `g_b,i/g_i - 1/b_r = 0` with
/// `a_r = (Δ1 - Σ a_i)/(n - κ)`.
pub struct PartialSystem<'a> {
    pub d: &'a [f64],
    pub kappa: usize,
    pub delta1: f64,
    pub delta2: f64,
}

impl PartialSystem<'_> {
    pub fn rest(&self, x: &[f64]) -> (f64, f64) {
        let k = self.kappa;
        let m = (self.d.len() - k) as f64;
        let sa: f64 = x[..k].iter().sum();
        let sb: f64 = x[k..].iter().sum();
        ((self.delta1 - sa) / m, (self.delta2 - sb) / m)
    }
}

impl System for PartialSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.kappa
    }

    fn boxed(&self) -> usize {
        2 * self.kappa
    }

    fn residual(&self, x: &[f64]) -> Option<Vec<f64>> {
        let k = self.kappa;
        let (ar, br) = self.rest(x);
        if ar <= 0.0 || br <= 0.0 {
            return None;
        }
        let mut f = vec![0.0; 2 * k];
        for i in 0..k {
            let c = Active::eval(self.d[i], x[i], x[k + i])?;
            f[i] = c.ga / c.g - 1.0 / ar;
            f[k + i] = c.gb / c.g - 1.0 / br;
        }
        Some(f)
    }

    fn scale(&self, x: &[f64]) -> f64 {
        let (ar, br) = self.rest(x);
        1.0 / ar.min(br)
    }

    fn jacobian(&self, x: &[f64]) -> Matrix {
        let k = self.kappa;
        let m = (self.d.len() - k) as f64;
        let (ar, br) = self.rest(x);
        let (ca, cb) = (1.0 / (m * ar * ar), 1.0 / (m * br * br));
        let mut j = Matrix::zeros(2 * k, 2 * k);
        for r in 0..k {
            for c in 0..k {
                j[(r, c)] = -ca;
                j[(k + r, k + c)] = -cb;
            }
        }
        for i in 0..k {
            // Only called on points where the residual is defined.
            let h = Active::eval(self.d[i], x[i], x[k + i])
                .expect("jacobian outside the domain")
                .log_hessian();
            j[(i, i)] += h[0][0];
            j[(i, k + i)] += h[0][1];
            j[(k + i, i)] += h[1][0];
            j[(k + i, k + i)] += h[1][1];
        }
        j
    }
}

/// The first `m` components active, the rest saturated at `(1, 1, d_i)`.
///
/// Unknowns `(a_1..a_m, b_1..b_m, λ1, λ2)`, equations
/// `-g_a,i/(2 g_i) + λ1 = 0`, `-g_b,i/(2 g_i) + λ2 = 0`,
/// `Σ a_i = budget1`, `Σ b_i = budget2`.
pub struct FullSystem<'a> {
    pub d: &'a [f64],
    pub m: usize,
    pub budget1: f64,
    pub budget2: f64,
}

impl System for FullSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.m + 2
    }

    fn boxed(&self) -> usize {
        2 * self.m
    }

    fn residual(&self, x: &[f64]) -> Option<Vec<f64>> {
        let m = self.m;
        let (l1, l2) = (x[2 * m], x[2 * m + 1]);
        let mut f = vec![0.0; 2 * m + 2];
        for i in 0..m {
            let c = Active::eval(self.d[i], x[i], x[m + i])?;
            f[i] = -c.ga / (2.0 * c.g) + l1;
            f[m + i] = -c.gb / (2.0 * c.g) + l2;
        }
        f[2 * m] = x[..m].iter().sum::<f64>() - self.budget1;
        f[2 * m + 1] = x[m..2 * m].iter().sum::<f64>() - self.budget2;
        Some(f)
    }

    fn scale(&self, x: &[f64]) -> f64 {
        let m = self.m;
        x[2 * m].abs().max(x[2 * m + 1].abs())
    }

    fn jacobian(&self, x: &[f64]) -> Matrix {
        let m = self.m;
        let mut j = Matrix::zeros(2 * m + 2, 2 * m + 2);
        for i in 0..m {
            let h = Active::eval(self.d[i], x[i], x[m + i])
                .expect("jacobian outside the domain")
                .log_hessian();
            j[(i, i)] = -0.5 * h[0][0];
            j[(i, m + i)] = -0.5 * h[0][1];
            j[(m + i, i)] = -0.5 * h[1][0];
            j[(m + i, m + i)] = -0.5 * h[1][1];
            j[(i, 2 * m)] = 1.0;
            j[(m + i, 2 * m + 1)] = 1.0;
            j[(2 * m, i)] = 1.0;
            j[(2 * m + 1, m + i)] = 1.0;
        }
        j
    }
}

/// Exact solution of [`PartialSystem`] at `Δ1 = Δ2 = delta`, or `None` if it
/// leaves the domain.
pub fn partial_start(d: &[f64], kappa: usize, delta: f64) -> Option<Vec<f64>> {
    let n = d.len();
    let shift: f64 = d[..kappa].iter().map(|&x| 0.5 * (1.0 - x)).sum();
    let level = (delta - shift) / (0.5 * kappa as f64 + (n - kappa) as f64);
    if level <= 0.0 {
        return None;
    }
    let a: Vec<f64> = d[..kappa].iter().map(|&x| 0.5 * (level + 1.0 - x)).collect();
    Some([a.clone(), a].concat())
}

/// Exact solution of [`FullSystem`] at `budget1 = budget2 = budget`.
pub fn full_start(d: &[f64], m: usize, budget: f64) -> Option<Vec<f64>> {
    let shift: f64 = d[..m].iter().map(|&x| 1.0 - x).sum();
    let level = (2.0 * budget - shift) / m as f64;
    if level <= 0.0 {
        return None;
    }
    let a: Vec<f64> = d[..m].iter().map(|&x| 0.5 * (level + 1.0 - x)).collect();
    let lambda = 0.5 / level;
    Some([a.clone(), a, vec![lambda, lambda]].concat())
}
