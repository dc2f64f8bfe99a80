//! Lagrangian warm start.
//!
//! For budget prices `μ = (μ1, μ2) > 0` each component maximizes
//! `log(Δ1,i Δ2,i - d̂_i²) - μ1 Δ1,i - μ2 Δ2,i` on its own, and that maximizer
//! has a closed form in each of the three states (inactive, active,
//! saturated). The dual function
//!
//! `ψ(μ) = Σ_i max(...) + μ1 Δ1 + μ2 Δ2`
//!
//! is convex in two variables, so a damped Newton descent on `ψ` reaches the
//! prices that meet both budgets without any knowledge of `(κ, ℓ)`.

use crate::model::ComponentAllocation;

/// Maximizer of the priced per-component objective.
pub fn response(d: f64, mu1: f64, mu2: f64) -> ComponentAllocation {
    let (a, b) = (1.0 / mu1, 1.0 / mu2);
    if d == 0.0 {
        return ComponentAllocation {
            delta1: a.min(1.0),
            delta2: b.min(1.0),
            dhat: 0.0,
        };
    }
    if a <= 1.0 && b <= 1.0 && d * d <= (1.0 - a) * (1.0 - b) {
        return ComponentAllocation {
            delta1: a,
            delta2: b,
            dhat: 0.0,
        };
    }
    // Active: with ρ = sqrt(y/x), g_a/g_b = (1 - dρ)/(1 - d/ρ) = μ1/μ2.
    let m = mu1 / mu2;
    let rho = (-(m - 1.0) + ((m - 1.0).powi(2) + 4.0 * m * d * d).sqrt()) / (2.0 * d);
    let g = (1.0 - d * rho) / mu1;
    let x = (1.0 - d * d - g) / (1.0 + rho * rho - 2.0 * d * rho);
    let y = rho * rho * x;
    if x > 0.0 && y > 0.0 && x < 1.0 && y < 1.0 && g > 0.0 {
        return ComponentAllocation {
            delta1: 1.0 - x,
            delta2: 1.0 - y,
            dhat: (d - rho * x).max(0.0),
        };
    }
    ComponentAllocation::saturated(d)
}

fn priced(d: &[f64], mu: [f64; 2], budget: [f64; 2]) -> (f64, [f64; 2]) {
    let mut value = mu[0] * budget[0] + mu[1] * budget[1];
    let mut grad = budget;
    for &di in d {
        let c = response(di, mu[0], mu[1]);
        value += (c.delta1 * c.delta2 - c.dhat * c.dhat).ln() - mu[0] * c.delta1 - mu[1] * c.delta2;
        grad[0] -= c.delta1;
        grad[1] -= c.delta2;
    }
    (value, grad)
}

/// Outcome of the price search.
#[derive(Clone, Debug)]
pub struct Priced {
    pub mu: [f64; 2],
    pub components: Vec<ComponentAllocation>,
    /// `max_j |Δ_j - Σ_i Δ_j,i|`. Near zero the components are optimal.
    pub budget_gap: f64,
}

/// Prices meeting both budgets and the components they induce, or `None`
/// when descent stalls far from them (typically because one budget cannot
/// bind).
pub fn solve(d: &[f64], delta1: f64, delta2: f64) -> Option<Priced> {
    let n = d.len() as f64;
    let budget = [delta1, delta2];
    let mut mu = [n / delta1, n / delta2];
    let (mut value, mut grad) = priced(d, mu, budget);
    for _ in 0..200 {
        let gnorm = grad[0].abs().max(grad[1].abs());
        if gnorm <= 1e-13 * n {
            break;
        }
        // Hessian by central differences of the gradient.
        let mut h = [[0.0; 2]; 2];
        for k in 0..2 {
            let step = 1e-7 * mu[k];
            let mut up = mu;
            let mut down = mu;
            up[k] += step;
            down[k] -= step;
            let gu = priced(d, up, budget).1;
            let gd = priced(d, down, budget).1;
            for r in 0..2 {
                h[r][k] = (gu[r] - gd[r]) / (2.0 * step);
            }
        }
        // Relative gradient step moving some price by half its value. Used
        // where ψ is flat or kinked, e.g. when every component is saturated.
        let fallback = {
            let rel = [-grad[0] * mu[0], -grad[1] * mu[1]];
            let s = 0.5 / rel[0].abs().max(rel[1].abs());
            [rel[0] * s * mu[0], rel[1] * s * mu[1]]
        };
        let sym = 0.5 * (h[0][1] + h[1][0]);
        let det = h[0][0] * h[1][1] - sym * sym;
        let mut dir = if h[0][0] > 0.0 && det > 0.0 {
            [
                -(h[1][1] * grad[0] - sym * grad[1]) / det,
                -(h[0][0] * grad[1] - sym * grad[0]) / det,
            ]
        } else {
            fallback
        };
        if dir[0] * grad[0] + dir[1] * grad[1] >= 0.0 {
            dir = fallback;
        }
        let slope = dir[0] * grad[0] + dir[1] * grad[1];
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let trial = [mu[0] + t * dir[0], mu[1] + t * dir[1]];
            if trial[0] > 0.0 && trial[1] > 0.0 {
                let (v, g) = priced(d, trial, budget);
                // Near the optimum ψ can be flat to roundoff; then a smaller
                // gradient is the only visible progress.
                let flat = (v - value).abs() <= 1e-14 * (1.0 + value.abs());
                let smaller = g[0].abs().max(g[1].abs()) < gnorm;
                if v.is_finite() && (v <= value + 1e-4 * t * slope || (flat && smaller)) {
                    mu = trial;
                    value = v;
                    grad = g;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    // Only a warm start: Newton polishes the rest.
    let gnorm = grad[0].abs().max(grad[1].abs());
    if gnorm > 1e-4 * n.max(1.0) {
        return None;
    }
    Some(Priced {
        mu,
        components: d.iter().map(|&di| response(di, mu[0], mu[1])).collect(),
        budget_gap: gnorm,
    })
}
