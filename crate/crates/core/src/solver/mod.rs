//! Joint RDF for arbitrary budgets `(Δ1, Δ2)` on a source in canonical
//! variable form.
//!
//! The optimal test channel is diagonal per canonical pair, and every pair is
//! in one of three states: inactive (`d̂_i = 0`), active (`0 < d̂_i < d_i`) or
//! saturated (`(Δ1,i, Δ2,i, d̂_i) = (1, 1, d_i)`). [`joint_rdf`] searches the
//! candidate patterns in a fixed order and returns the first one whose region
//! conditions hold.
//!
//! All `case_*` functions expect `d` sorted in descending order. Components
//! are activated from the largest `d_i` and saturated from the smallest.

pub mod dual;
pub mod kkt;
pub mod newton;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{check_correlations, CaseLabel, ComponentAllocation, DistortionPair, RdfAllocation};
use crate::tolerance::Tolerances;

use kkt::{active_dhat, FullSystem, PartialSystem};
pub use newton::NewtonState;
use newton::System;

/// Region whose test decides a candidate pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RegionLabel {
    M1,
    M2,
    D0,
    Dkappa(usize),
    Dhat(usize),
}

impl RegionLabel {
    pub fn case(self) -> CaseLabel {
        match self {
            RegionLabel::M1 => CaseLabel::D,
            RegionLabel::M2 => CaseLabel::E,
            RegionLabel::D0 => CaseLabel::A,
            RegionLabel::Dkappa(_) => CaseLabel::B,
            RegionLabel::Dhat(_) => CaseLabel::C,
        }
    }
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionLabel::M1 => write!(f, "M1"),
            RegionLabel::M2 => write!(f, "M2"),
            RegionLabel::D0 => write!(f, "D0"),
            RegionLabel::Dkappa(k) => write!(f, "D_kappa={k}"),
            RegionLabel::Dhat(l) => write!(f, "Dhat_ell={l}"),
        }
    }
}

/// Why a candidate pattern was not accepted.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Rejection {
    /// A region inequality failed; the message names it.
    RegionMismatch(String),
    NewtonDivergence { residual_norm: f64, iterations: usize },
    /// `Δ_j <= ℓ` leaves nothing for the active components.
    BudgetExhausted,
    /// Region test passed but the allocation violates a constraint.
    Infeasible,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::RegionMismatch(s) => write!(f, "region mismatch: {s}"),
            Rejection::NewtonDivergence {
                residual_norm,
                iterations,
            } => write!(f, "newton stopped at residual {residual_norm:e} after {iterations} iterations"),
            Rejection::BudgetExhausted => write!(f, "budget exhausted"),
            Rejection::Infeasible => write!(f, "infeasible allocation"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Attempt {
    pub region: RegionLabel,
    pub rejection: Rejection,
}

/// Everything [`joint_rdf`] tried before giving up.
#[derive(Clone, Debug, Serialize)]
pub struct DispatchReport {
    pub correlations: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
    pub in_m1: bool,
    pub in_m2: bool,
    pub attempts: Vec<Attempt>,
}

impl std::fmt::Display for DispatchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "d = {:?}, (Δ1, Δ2) = ({}, {}), M1 = {}, M2 = {}",
            self.correlations, self.delta1, self.delta2, self.in_m1, self.in_m2
        )?;
        for a in &self.attempts {
            writeln!(f, "  {}: {}", a.region, a.rejection)?;
        }
        Ok(())
    }
}

type CaseResult = std::result::Result<RdfAllocation, Rejection>;

/// Saturation region test.
///
/// `which = 1` is the region where only the X1 budget binds:
/// `Δ2 > n - Σ d_i² (1 - min{1, Δ1/n})`. `which = 2` swaps the roles.
pub fn in_region_m(d: &[f64], delta: DistortionPair, which: u8) -> bool {
    let (own, other) = match which {
        1 => (delta.delta1, delta.delta2),
        2 => (delta.delta2, delta.delta1),
        _ => panic!("region index must be 1 or 2, got {which}"),
    };
    let n = d.len() as f64;
    let level = (own / n).min(1.0);
    let bound = n - d.iter().map(|x| x * x * (1.0 - level)).sum::<f64>();
    other > bound
}

fn allocation(d: &[f64], components: Vec<ComponentAllocation>, case: CaseLabel, kappa: usize, ell: usize) -> RdfAllocation {
    RdfAllocation {
        correlations: d.to_vec(),
        components,
        kappa,
        ell,
        case,
        rate_nats: 0.0,
        newton: None,
    }
}

fn with_rate(mut alloc: RdfAllocation) -> CaseResult {
    match rate_from_allocation(&alloc.correlations, &alloc.components) {
        Ok(r) => {
            alloc.rate_nats = r;
            Ok(alloc)
        }
        Err(e) => Err(Rejection::RegionMismatch(e.to_string())),
    }
}

/// `a <= b + slack`, logging when only the slack makes it hold.
fn at_most(a: f64, b: f64, slack: f64, what: impl FnOnce() -> String) -> std::result::Result<(), Rejection> {
    if a <= b {
        Ok(())
    } else if a <= b + slack {
        log::debug!("boundary hit: {}", what());
        Ok(())
    } else {
        Err(Rejection::RegionMismatch(what()))
    }
}

fn check_inactive(i: usize, d: f64, a: f64, b: f64, tol: &Tolerances) -> std::result::Result<(), Rejection> {
    if a > 1.0 || b > 1.0 || a <= 0.0 || b <= 0.0 {
        return Err(Rejection::RegionMismatch(format!(
            "component {i}: inactive distortions ({a}, {b}) outside (0, 1]"
        )));
    }
    at_most(d * d, (1.0 - a) * (1.0 - b), tol.region, || {
        format!("component {i}: d² > (1-Δ1,i)(1-Δ2,i)")
    })
}

fn check_active(i: usize, d: f64, a: f64, b: f64, tol: &Tolerances) -> std::result::Result<(), Rejection> {
    if !(a < 1.0 && b < 1.0 && a > 0.0 && b > 0.0) {
        return Err(Rejection::RegionMismatch(format!(
            "component {i}: active distortions ({a}, {b}) outside (0, 1)"
        )));
    }
    let (x, y) = (1.0 - a, 1.0 - b);
    at_most(x * y, d * d, tol.region, || format!("component {i}: (1-Δ1,i)(1-Δ2,i) > d²"))?;
    at_most(d * d, (x / y).min(y / x), tol.region, || {
        format!("component {i}: d² above the ratio bound")
    })
}

/// Equal split with no cross-correlation.
pub fn case_a(d: &[f64], delta: DistortionPair, tol: &Tolerances) -> CaseResult {
    let n = d.len() as f64;
    let (a, b) = (delta.delta1 / n, delta.delta2 / n);
    check_inactive(0, d[0], a, b, tol)?;
    let comps = vec![
        ComponentAllocation {
            delta1: a,
            delta2: b,
            dhat: 0.0
        };
        d.len()
    ];
    with_rate(allocation(d, comps, CaseLabel::A, 0, 0))
}

/// Newton from the symmetric solution at the mean budget. If that diverges,
/// Newton from the Lagrangian warm start, and last a homotopy from the mean
/// to the target.
fn continuation<S: System>(
    make: impl Fn(f64, f64) -> S,
    start: Option<Vec<f64>>,
    priced: impl FnOnce() -> Option<Vec<f64>>,
    delta: DistortionPair,
    tol: &Tolerances,
) -> std::result::Result<NewtonState, NewtonState> {
    let mean = 0.5 * (delta.delta1 + delta.delta2);
    let target = make(delta.delta1, delta.delta2);
    let mut total = 0;
    if let Some(x0) = &start {
        match newton::solve(&target, x0, tol) {
            Ok(s) => return Ok(s),
            Err(s) => total += s.iterations,
        }
    }
    let from_prices = priced().map(|x| newton::solve(&target, &x, tol));
    let last = match from_prices {
        Some(Ok(s)) => {
            return Ok(NewtonState {
                iterations: s.iterations + total,
                ..s
            })
        }
        Some(Err(s)) => {
            total += s.iterations;
            s
        }
        None => NewtonState {
            unknowns: start.clone().unwrap_or_default(),
            residual_norm: f64::INFINITY,
            iterations: total,
        },
    };
    let Some(x0) = start else {
        return Err(NewtonState { iterations: total, ..last });
    };
    if delta.delta1 == delta.delta2 {
        return Err(NewtonState { iterations: total, ..last });
    }
    let at = |s: f64| {
        (
            mean + s * (delta.delta1 - mean),
            mean + s * (delta.delta2 - mean),
        )
    };
    let mut x = newton::solve(&make(mean, mean), &x0, tol)?;
    let min_step = 1.0 / (tol.homotopy_steps as f64 * 1024.0);
    let mut step = 1.0 / tol.homotopy_steps as f64;
    let mut s = 0.0;
    while s < 1.0 {
        let next = (s + step).min(1.0);
        let (d1, d2) = at(next);
        match newton::solve(&make(d1, d2), &x.unknowns, tol) {
            Ok(sol) => {
                total += sol.iterations;
                x = sol;
                s = next;
            }
            Err(fail) => {
                total += fail.iterations;
                step *= 0.5;
                if step < min_step {
                    return Err(NewtonState {
                        iterations: total,
                        ..fail
                    });
                }
            }
        }
    }
    x.iterations = total;
    Ok(x)
}

/// Averages `v[range]` over runs of equal `d`.
fn symmetrize_ties(d: &[f64], v: &mut [f64]) {
    let mut start = 0;
    while start < v.len() {
        let mut end = start + 1;
        while end < v.len() && (d[end] - d[start]).abs() <= 1e-12 {
            end += 1;
        }
        if end - start > 1 {
            let mean = v[start..end].iter().sum::<f64>() / (end - start) as f64;
            v[start..end].fill(mean);
        }
        start = end;
    }
}

fn diverged(s: NewtonState) -> Rejection {
    Rejection::NewtonDivergence {
        residual_norm: s.residual_norm,
        iterations: s.iterations,
    }
}

/// The `kappa` largest correlations active, the rest sharing the leftover
/// budget equally with `d̂ = 0`.
pub fn case_b(d: &[f64], delta: DistortionPair, kappa: usize, tol: &Tolerances) -> CaseResult {
    let n = d.len();
    if kappa == 0 || kappa >= n {
        return Err(Rejection::RegionMismatch(format!("kappa = {kappa} outside 1..{n}")));
    }
    let make = |d1, d2| PartialSystem {
        d,
        kappa,
        delta1: d1,
        delta2: d2,
    };
    let mean = 0.5 * (delta.delta1 + delta.delta2);
    let priced = || {
        let c = dual::solve(d, delta.delta1, delta.delta2)?.components;
        let a = c[..kappa].iter().map(|x| x.delta1);
        let b = c[..kappa].iter().map(|x| x.delta2);
        Some(a.chain(b).collect())
    };
    let state = continuation(make, kkt::partial_start(d, kappa, mean), priced, delta, tol).map_err(diverged)?;

    let mut x = state.unknowns.clone();
    symmetrize_ties(&d[..kappa], &mut x[..kappa]);
    symmetrize_ties(&d[..kappa], &mut x[kappa..]);
    let (ar, br) = make(delta.delta1, delta.delta2).rest(&x);
    let mut comps = Vec::with_capacity(n);
    for i in 0..kappa {
        let (a, b) = (x[i], x[kappa + i]);
        check_active(i, d[i], a, b, tol)?;
        comps.push(ComponentAllocation {
            delta1: a,
            delta2: b,
            dhat: active_dhat(d[i], a, b),
        });
    }
    for (i, &di) in d.iter().enumerate().skip(kappa) {
        check_inactive(i, di, ar, br, tol)?;
        comps.push(ComponentAllocation {
            delta1: ar,
            delta2: br,
            dhat: 0.0,
        });
    }
    let mut alloc = allocation(d, comps, CaseLabel::B, kappa, 0);
    alloc.newton = Some(NewtonState { unknowns: x, ..state });
    with_rate(alloc)
}

/// Every component active, the `ell` smallest correlations saturated.
pub fn case_c(d: &[f64], delta: DistortionPair, ell: usize, tol: &Tolerances) -> CaseResult {
    let n = d.len();
    if ell > n {
        return Err(Rejection::RegionMismatch(format!("ell = {ell} exceeds n = {n}")));
    }
    let m = n - ell;
    if m == 0 {
        let floor = n as f64 - tol.feasibility;
        if delta.delta1 < floor || delta.delta2 < floor {
            return Err(Rejection::BudgetExhausted);
        }
        let comps = d.iter().map(|&x| ComponentAllocation::saturated(x)).collect();
        return with_rate(allocation(d, comps, CaseLabel::C, n, n));
    }
    let (budget1, budget2) = (delta.delta1 - ell as f64, delta.delta2 - ell as f64);
    if budget1 <= 0.0 || budget2 <= 0.0 {
        return Err(Rejection::BudgetExhausted);
    }
    let make = |b1, b2| FullSystem {
        d,
        m,
        budget1: b1,
        budget2: b2,
    };
    let budgets = DistortionPair {
        delta1: budget1,
        delta2: budget2,
    };
    let mean = 0.5 * (budget1 + budget2);
    let priced = || {
        let dual::Priced { mu, components: c, .. } = dual::solve(d, delta.delta1, delta.delta2)?;
        let a = c[..m].iter().map(|x| x.delta1);
        let b = c[..m].iter().map(|x| x.delta2);
        Some(a.chain(b).chain([0.5 * mu[0], 0.5 * mu[1]]).collect())
    };
    let state = continuation(make, kkt::full_start(d, m, mean), priced, budgets, tol).map_err(diverged)?;

    let mut x = state.unknowns.clone();
    symmetrize_ties(&d[..m], &mut x[..m]);
    symmetrize_ties(&d[..m], &mut x[m..2 * m]);
    let mut comps = Vec::with_capacity(n);
    for i in 0..m {
        let (a, b) = (x[i], x[m + i]);
        check_active(i, d[i], a, b, tol)?;
        comps.push(ComponentAllocation {
            delta1: a,
            delta2: b,
            dhat: active_dhat(d[i], a, b),
        });
    }
    comps.extend(d[m..].iter().map(|&x| ComponentAllocation::saturated(x)));
    let mut alloc = allocation(d, comps, CaseLabel::C, n, ell);
    alloc.newton = Some(NewtonState { unknowns: x, ..state });
    with_rate(alloc)
}

fn single_binding(d: &[f64], own: f64, swap: bool) -> Vec<ComponentAllocation> {
    let n = d.len() as f64;
    let level = (own / n).min(1.0);
    d.iter()
        .map(|&di| {
            let other = 1.0 - di * di * (1.0 - level);
            let (delta1, delta2) = if swap { (other, level) } else { (level, other) };
            ComponentAllocation {
                delta1,
                delta2,
                dhat: di * level,
            }
        })
        .collect()
}

fn closed_form(d: &[f64], comps: Vec<ComponentAllocation>, case: CaseLabel) -> CaseResult {
    let kappa = comps.iter().filter(|c| c.dhat != 0.0).count();
    let ell = comps
        .iter()
        .filter(|c| c.delta1 == 1.0 && c.delta2 == 1.0)
        .count();
    with_rate(allocation(d, comps, case, kappa, ell))
}

/// Only the X1 budget binds: `Δ1,i = min{1, Δ1/n}`, `d̂_i = d_i Δ1,i` and the
/// X2 errors are whatever the reconstruction of X1 implies. The rate equals
/// `R_X1(Δ1)`.
pub fn case_d(d: &[f64], delta: DistortionPair) -> CaseResult {
    closed_form(d, single_binding(d, delta.delta1, false), CaseLabel::D)
}

/// Mirror image of [`case_d`] with the X2 budget binding.
pub fn case_e(d: &[f64], delta: DistortionPair) -> CaseResult {
    closed_form(d, single_binding(d, delta.delta2, true), CaseLabel::E)
}

/// `½ Σ log((1 - d_i²)/(Δ1,i Δ2,i - d̂_i²))` in nats.
pub fn rate_from_allocation(d: &[f64], components: &[ComponentAllocation]) -> Result<f64> {
    if d.len() != components.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} correlations but {} components",
            d.len(),
            components.len()
        )));
    }
    let mut rate = 0.0;
    for (i, (&di, c)) in d.iter().zip(components).enumerate() {
        let den = c.delta1 * c.delta2 - c.dhat * c.dhat;
        if !(den > 0.0) {
            return Err(Error::NonpositiveDenominator { index: i, value: den });
        }
        rate += 0.5 * ((1.0 - di * di) / den).ln();
    }
    Ok(rate.max(0.0))
}

/// Per-component constraints: `Δ1,i, Δ2,i >= 0`, `Δ1,i Δ2,i >= d̂_i²` and
/// `Q_i - Σ_i ⪰ 0`. The last is the Schur condition on
/// `[[1 - Δ1,i, d_i - d̂_i], [d_i - d̂_i, 1 - Δ2,i]]` multiplied through by
/// `1 - Δ2,i`, which stays well conditioned when `Δ2,i` is close to 1.
pub fn component_feasible(d: f64, c: &ComponentAllocation, tol: &Tolerances) -> bool {
    let slack = tol.feasibility;
    let (x, y) = (1.0 - c.delta1, 1.0 - c.delta2);
    let gap = d - c.dhat;
    c.delta1 >= -slack
        && c.delta2 >= -slack
        && c.delta1 * c.delta2 - c.dhat * c.dhat >= -slack
        && x >= -slack
        && y >= -slack
        && x * y - gap * gap >= -slack
}

/// All constraints including the two budgets.
pub fn feasible(alloc: &RdfAllocation, delta: DistortionPair, tol: &Tolerances) -> bool {
    let slack = tol.feasibility;
    alloc.correlations.len() == alloc.components.len()
        && alloc
            .correlations
            .iter()
            .zip(&alloc.components)
            .all(|(&d, c)| component_feasible(d, c, tol))
        && alloc.total_delta1() <= delta.delta1 + slack
        && alloc.total_delta2() <= delta.delta2 + slack
}

/// The 2×2 block of `Q - Σ` for one component, as `(M, R, N)` for the
/// Schur test.
pub fn residual_block(d: f64, c: &ComponentAllocation) -> (Matrix, Matrix, Matrix) {
    (
        Matrix::from_element(1, 1, 1.0 - c.delta1),
        Matrix::from_element(1, 1, 1.0 - c.delta2),
        Matrix::from_element(1, 1, d - c.dhat),
    )
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

/// Whether the region test of `label` accepts `alloc`: structural pattern of
/// the case plus the region inequalities. `d` must be sorted descending.
pub fn region_accepts(label: RegionLabel, alloc: &RdfAllocation, delta: DistortionPair, tol: &Tolerances) -> bool {
    let d = &alloc.correlations;
    let c = &alloc.components;
    let n = d.len();
    let m1 = in_region_m(d, delta, 1);
    let m2 = in_region_m(d, delta, 2);
    let same = |x: &[ComponentAllocation], y: &[ComponentAllocation]| {
        x.iter().zip(y).all(|(p, q)| {
            near(p.delta1, q.delta1, 1e-9) && near(p.delta2, q.delta2, 1e-9) && near(p.dhat, q.dhat, 1e-9)
        })
    };
    let active_ok = |range: std::ops::Range<usize>| {
        range.into_iter().all(|i| {
            c[i].dhat > 0.0 && check_active(i, d[i], c[i].delta1, c[i].delta2, tol).is_ok()
        })
    };
    match label {
        RegionLabel::M1 => m1 && same(c, &single_binding(d, delta.delta1, false)),
        RegionLabel::M2 => m2 && same(c, &single_binding(d, delta.delta2, true)),
        _ if m1 || m2 => false,
        RegionLabel::D0 => {
            let (a, b) = (delta.delta1 / n as f64, delta.delta2 / n as f64);
            c.iter()
                .all(|x| x.dhat == 0.0 && near(x.delta1, a, 1e-12) && near(x.delta2, b, 1e-12))
                && check_inactive(0, d[0], a, b, tol).is_ok()
        }
        RegionLabel::Dkappa(k) => {
            if k == 0 || k >= n {
                return false;
            }
            let rest = &c[k..];
            let (ar, br) = (rest[0].delta1, rest[0].delta2);
            rest.iter()
                .all(|x| x.dhat == 0.0 && near(x.delta1, ar, 1e-12) && near(x.delta2, br, 1e-12))
                && (k..n).all(|i| check_inactive(i, d[i], ar, br, tol).is_ok())
                && active_ok(0..k)
        }
        RegionLabel::Dhat(l) => {
            if l > n {
                return false;
            }
            let m = n - l;
            (m..n).all(|i| c[i] == ComponentAllocation::saturated(d[i])) && active_ok(0..m)
        }
    }
}

/// Every region label that could apply to an instance of size `n`.
pub fn all_regions(n: usize) -> Vec<RegionLabel> {
    let mut v = vec![RegionLabel::M1, RegionLabel::M2, RegionLabel::D0];
    v.extend((1..n).map(RegionLabel::Dkappa));
    v.extend((0..=n).map(RegionLabel::Dhat));
    v
}

/// Joint RDF with the optimal diagonal test channel.
///
/// `d` may come in any order; components of the result follow the input
/// order. Newton unknowns, when present, refer to the descending order.
pub fn joint_rdf(d: &[f64], delta: DistortionPair, tol: &Tolerances) -> Result<RdfAllocation> {
    check_correlations(d)?;
    let delta = DistortionPair::new(delta.delta1, delta.delta2)?;
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[j].total_cmp(&d[i]));
    let sorted: Vec<f64> = order.iter().map(|&i| d[i]).collect();

    let mut alloc = dispatch(&sorted, delta, tol)?;
    let mut components = alloc.components.clone();
    for (k, &i) in order.iter().enumerate() {
        components[i] = alloc.components[k];
    }
    alloc.components = components;
    alloc.correlations = d.to_vec();
    Ok(alloc)
}

/// Dispatch on descending `d`.
pub fn dispatch(d: &[f64], delta: DistortionPair, tol: &Tolerances) -> Result<RdfAllocation> {
    let n = d.len();
    let nf = n as f64;
    if delta.delta1 >= nf && delta.delta2 >= nf {
        return case_c(d, delta, n, tol).map_err(|r| unreachable!("saturated case rejected: {r}"));
    }
    let mut report = DispatchReport {
        correlations: d.to_vec(),
        delta1: delta.delta1,
        delta2: delta.delta2,
        in_m1: in_region_m(d, delta, 1),
        in_m2: in_region_m(d, delta, 2),
        attempts: Vec::new(),
    };

    let mut candidates: Vec<RegionLabel> = Vec::new();
    if report.in_m1 {
        candidates.push(RegionLabel::M1);
    } else if report.in_m2 {
        candidates.push(RegionLabel::M2);
    } else {
        candidates.push(RegionLabel::D0);
        candidates.extend((1..n).map(RegionLabel::Dkappa));
        candidates.extend((0..=n).map(RegionLabel::Dhat));
    }

    for region in candidates {
        let result = match region {
            RegionLabel::M1 => case_d(d, delta),
            RegionLabel::M2 => case_e(d, delta),
            RegionLabel::D0 => case_a(d, delta, tol),
            RegionLabel::Dkappa(k) => case_b(d, delta, k, tol),
            RegionLabel::Dhat(l) => case_c(d, delta, l, tol),
        };
        let rejection = match result {
            Ok(alloc) if feasible(&alloc, delta, tol) => return Ok(alloc),
            Ok(_) => Rejection::Infeasible,
            Err(r) => r,
        };
        log::trace!("{region} rejected: {rejection}");
        report.attempts.push(Attempt { region, rejection });
    }
    if !report.in_m1 && !report.in_m2 {
        if let Some(alloc) = from_prices(d, delta, tol) {
            log::debug!("Newton failed in every region; using the priced allocation");
            return Ok(alloc);
        }
    }
    Err(Error::NoFeasibleCase(Box::new(report)))
}

/// The allocation induced by budget-meeting prices, labelled by its pattern.
/// Still has to pass the region test of that label. Covers optima that sit
/// closer to `Δ_j,i = 1` than the Newton box allows.
fn from_prices(d: &[f64], delta: DistortionPair, tol: &Tolerances) -> Option<RdfAllocation> {
    let n = d.len();
    let p = dual::solve(d, delta.delta1, delta.delta2)?;
    if p.budget_gap > tol.feasibility {
        return None;
    }
    let kappa = p.components.iter().filter(|c| c.dhat > 0.0).count();
    let ell = p
        .components
        .iter()
        .zip(d)
        .filter(|(c, &x)| **c == ComponentAllocation::saturated(x))
        .count();
    let region = match (kappa, ell) {
        (0, _) => RegionLabel::D0,
        (k, 0) if k < n => RegionLabel::Dkappa(k),
        (_, l) => RegionLabel::Dhat(l),
    };
    let alloc = with_rate(allocation(d, p.components, region.case(), kappa, ell)).ok()?;
    (feasible(&alloc, delta, tol) && region_accepts(region, &alloc, delta, tol)).then_some(alloc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use approx::assert_relative_eq;

    const EX1: [f64; 2] = [0.588, 0.271];
    const EX2: [f64; 4] = [0.96, 0.78, 0.40, 0.14];

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn pair(a: f64, b: f64) -> DistortionPair {
        DistortionPair::new(a, b).unwrap()
    }

    #[test]
    fn region_m_examples() {
        assert!(in_region_m(&EX1, pair(0.5, 1.7), 1));
        assert!(!in_region_m(&EX1, pair(0.5, 1.7), 2));
        for which in [1, 2] {
            assert!(!in_region_m(&EX1, pair(0.3, 0.2), which));
            let zero = DistortionPair {
                delta1: 0.0,
                delta2: 0.0,
            };
            assert!(!in_region_m(&EX1, zero, which));
        }
    }

    #[test]
    fn case_a_examples() {
        let a = case_a(&EX1, pair(0.3, 0.2), &tol()).unwrap();
        for c in &a.components {
            assert_eq!((c.delta1, c.delta2, c.dhat), (0.15, 0.1, 0.0));
        }
        let a = case_a(&[0.0, 0.0], pair(1.0, 1.0), &tol()).unwrap();
        assert_relative_eq!(a.rate_nats, 2.0 * 0.5 * (1.0_f64 / 0.25).ln(), epsilon = 1e-14);
        assert!(matches!(
            case_a(&[0.9, 0.9], pair(0.3, 0.2), &tol()),
            Err(Rejection::RegionMismatch(_))
        ));
    }

    #[test]
    fn case_b_printed_matrix() {
        let b = case_b(&EX1, pair(1.3, 1.2), 1, &tol()).unwrap();
        let c = &b.components;
        for (x, y) in [
            (c[0].delta1, 0.5692),
            (c[1].delta1, 0.7308),
            (c[0].delta2, 0.5381),
            (c[1].delta2, 0.6619),
            (c[0].dhat, 0.1414),
            (c[1].dhat, 0.0),
        ] {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
        // cvxpy on the same instance
        assert_relative_eq!(b.rate_nats, 0.7384893306, epsilon = 1e-8);
    }

    #[test]
    fn case_b_exhausted_leftover() {
        // κ = 1 with a budget so small that nothing is left for the rest.
        assert!(case_b(&EX1, pair(0.01, 0.01), 1, &tol()).is_err());
    }

    #[test]
    fn case_c_saturated_and_symmetric() {
        let all = case_c(&EX1, pair(2.0, 2.0), 2, &tol()).unwrap();
        assert_eq!(all.rate_nats, 0.0);
        assert!(case_c(&EX1, pair(2.0, 1.5), 2, &tol()).is_err());

        let c = case_c(&EX2, pair(3.6, 3.6), 2, &tol()).unwrap();
        let expect = [(0.755, 0.715), (0.845, 0.625), (1.0, 0.40), (1.0, 0.14)];
        for (comp, (delta, dhat)) in c.components.iter().zip(expect) {
            assert_relative_eq!(comp.delta1, delta, epsilon = 1e-9);
            assert_relative_eq!(comp.delta2, delta, epsilon = 1e-9);
            assert_relative_eq!(comp.dhat, dhat, epsilon = 1e-9);
        }
        assert!(matches!(
            case_c(&EX2, pair(1.5, 3.6), 2, &tol()),
            Err(Rejection::BudgetExhausted)
        ));
    }

    #[test]
    fn case_d_printed_matrix() {
        let a = case_d(&EX1, pair(0.5, 1.7)).unwrap();
        let c = &a.components;
        for (x, y) in [
            (c[0].delta1, 0.25),
            (c[1].delta1, 0.25),
            (c[0].delta2, 0.7411),
            (c[1].delta2, 0.9449),
            (c[0].dhat, 0.1469),
            (c[1].dhat, 0.0677),
        ] {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
        assert_relative_eq!(a.rate_nats, 4.0_f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn case_e_mirrors_case_d() {
        let d = case_d(&EX1, pair(0.5, 1.7)).unwrap();
        let e = case_e(&EX1, pair(1.7, 0.5)).unwrap();
        for (x, y) in d.components.iter().zip(&e.components) {
            assert_eq!((x.delta1, x.delta2, x.dhat), (y.delta2, y.delta1, y.dhat));
        }
        assert_eq!(d.rate_nats, e.rate_nats);
        assert_eq!(e.case, CaseLabel::E);
    }

    #[test]
    fn case_d_with_full_budget_is_free() {
        let a = case_d(&EX1, pair(2.5, 2.5)).unwrap();
        assert_eq!(a.rate_nats, 0.0);
        assert_eq!(a.ell, 2);
    }

    #[test]
    fn dispatch_examples() {
        let t = tol();
        assert_eq!(joint_rdf(&EX1, pair(0.3, 0.2), &t).unwrap().case, CaseLabel::A);
        let b = joint_rdf(&EX1, pair(1.3, 1.2), &t).unwrap();
        assert_eq!((b.case, b.kappa), (CaseLabel::B, 1));
        assert_eq!(joint_rdf(&EX1, pair(0.5, 1.7), &t).unwrap().case, CaseLabel::D);
        assert_eq!(joint_rdf(&EX1, pair(2.0, 2.0), &t).unwrap().rate_nats, 0.0);
        let c = joint_rdf(&EX2, pair(3.6, 3.6), &t).unwrap();
        assert_eq!((c.case, c.ell), (CaseLabel::C, 2));
    }

    #[test]
    fn dispatch_restores_input_order() {
        let t = tol();
        let a = joint_rdf(&[0.271, 0.588], pair(1.3, 1.2), &t).unwrap();
        let b = joint_rdf(&EX1, pair(1.3, 1.2), &t).unwrap();
        assert_relative_eq!(a.components[1].dhat, b.components[0].dhat, epsilon = 1e-14);
        assert_eq!(a.components[0].dhat, 0.0);
        assert_eq!(a.correlations, vec![0.271, 0.588]);
    }

    #[test]
    fn tied_components_get_equal_allocations() {
        let d = [0.8, 0.8, 0.3];
        let a = joint_rdf(&d, pair(1.6, 1.1), &tol()).unwrap();
        let (x, y) = (a.components[0], a.components[1]);
        assert_eq!((x.delta1, x.delta2, x.dhat), (y.delta1, y.delta2, y.dhat));
    }

    #[test]
    fn rate_from_allocation_examples() {
        let sat: Vec<_> = EX1.iter().map(|&x| ComponentAllocation::saturated(x)).collect();
        assert_eq!(rate_from_allocation(&EX1, &sat).unwrap(), 0.0);

        // Separable case: two independent reverse water-filling rates.
        let comps = vec![
            ComponentAllocation {
                delta1: 0.15,
                delta2: 0.1,
                dhat: 0.0
            };
            2
        ];
        let rate = rate_from_allocation(&[0.0, 0.0], &comps).unwrap();
        assert_relative_eq!(rate, (1.0_f64 / 0.15).ln() + (1.0_f64 / 0.1).ln(), epsilon = 1e-14);

        // Against ½ log(det Q / det Σ) on the assembled matrices.
        let a = joint_rdf(&EX1, pair(0.3, 0.2), &tol()).unwrap();
        let sigma = crate::model::assemble_error_covariance(&a, &tol()).unwrap();
        let q = crate::model::cvf_covariance(&EX1);
        let mi = 0.5
            * (linalg::logdet_psd(&q, &tol()).unwrap() - linalg::logdet_psd(&sigma.sigma, &tol()).unwrap());
        assert_relative_eq!(a.rate_nats, mi, epsilon = 1e-12);

        let bad = [ComponentAllocation {
            delta1: 0.1,
            delta2: 0.1,
            dhat: 0.2,
        }];
        assert!(matches!(
            rate_from_allocation(&[0.5], &bad),
            Err(Error::NonpositiveDenominator { index: 0, .. })
        ));
    }

    #[test]
    fn feasibility_examples() {
        let b = joint_rdf(&EX1, pair(1.3, 1.2), &tol()).unwrap();
        assert!(feasible(&b, pair(1.3, 1.2), &tol()));
        assert!(!feasible(&b, pair(1.2, 1.2), &tol()));
        let c = ComponentAllocation {
            delta1: 0.5,
            delta2: 1.0,
            dhat: 0.1,
        };
        assert!(!component_feasible(0.5, &c, &tol()));
        let c = ComponentAllocation { dhat: 0.5, ..c };
        assert!(component_feasible(0.5, &c, &tol()));
    }

    #[test]
    fn region_accepts_returned_label() {
        let t = tol();
        for (delta, label) in [
            (pair(0.3, 0.2), RegionLabel::D0),
            (pair(1.3, 1.2), RegionLabel::Dkappa(1)),
            (pair(0.5, 1.7), RegionLabel::M1),
        ] {
            let a = joint_rdf(&EX1, delta, &t).unwrap();
            let accepted: Vec<_> = all_regions(2)
                .into_iter()
                .filter(|&l| region_accepts(l, &a, delta, &t))
                .collect();
            assert_eq!(accepted, vec![label]);
        }
    }
}
