//! End-to-end reproduction of the two worked examples.

use gjrdf::linalg::{self, Matrix};
use gjrdf::model::assemble_error_covariance;
use gjrdf::{correlated_block, joint_rdf, to_cvf, DistortionPair, JointGaussianSource, Tolerances};

use crate::row::oracle_gap;

const EX1: [f64; 2] = [0.588, 0.271];
const EX2: [f64; 4] = [0.96, 0.78, 0.40, 0.14];

pub struct Outcome {
    pub name: String,
    pub pass: bool,
    pub lines: Vec<String>,
}

fn two_pair(d1: [f64; 2], d2: [f64; 2], dhat: [f64; 2]) -> Matrix {
    let mut m = Matrix::zeros(4, 4);
    for i in 0..2 {
        m[(i, i)] = d1[i];
        m[(i + 2, i + 2)] = d2[i];
        m[(i, i + 2)] = dhat[i];
        m[(i + 2, i)] = dhat[i];
    }
    m
}

fn render(label: &str, m: &Matrix) -> Vec<String> {
    let mut out = vec![format!("  {label}:")];
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|x| format!("{x:8.4}")).collect();
        out.push(format!("    [{}]", cells.join(" ")));
    }
    out
}

fn first_example(
    name: &str,
    delta: (f64, f64),
    printed: Matrix,
    case: &str,
    tolerance: f64,
    verify: bool,
    tol: &Tolerances,
) -> gjrdf::Result<Outcome> {
    let src = JointGaussianSource::from_correlations(&EX1, tol)?;
    let cf = to_cvf(&src, tol.eps_one, tol.eps_zero)?;
    let d = correlated_block(&cf);
    let pair = DistortionPair::new(delta.0, delta.1)?;
    let alloc = joint_rdf(&d, pair, tol)?;
    let sigma = assemble_error_covariance(&alloc, &Tolerances {
        // Printed entries carry four decimals, computed ones are exact.
        feasibility: tolerance.max(tol.feasibility),
        ..tol.clone()
    })?
    .sigma;
    let dev = linalg::max_abs(&(&sigma - &printed));
    let pass = dev <= tolerance && alloc.case.to_string() == case;
    let mut lines = vec![format!(
        "  (Δ1, Δ2) = ({}, {}): case {} (expected {case}), kappa {}, ell {}, rate {:.6} nats",
        delta.0, delta.1, alloc.case, alloc.kappa, alloc.ell, alloc.rate_nats
    )];
    lines.extend(render("computed", &sigma));
    lines.extend(render("printed", &printed));
    lines.push(format!("  max |computed - printed| = {dev:.3e}"));
    if verify {
        lines.push(format!("  oracle gap = {:.3e}", oracle_gap(&d, pair, alloc.rate_nats, tol)?));
    }
    Ok(Outcome {
        name: name.into(),
        pass,
        lines,
    })
}

fn second_example(tolerance: f64, verify: bool, tol: &Tolerances) -> gjrdf::Result<Outcome> {
    let pair = DistortionPair::new(3.6, 3.6)?;
    let alloc = joint_rdf(&EX2, pair, tol)?;
    let c = &alloc.components;
    let mut misses = Vec::new();
    if !c.iter().all(|x| x.dhat > 0.0) {
        misses.push("some dhat is zero".to_string());
    }
    for (what, got, want) in [
        ("delta_3", c[2].delta1, 1.0),
        ("delta_4", c[3].delta1, 1.0),
        ("dhat_3", c[2].dhat, 0.40),
        ("dhat_4", c[3].dhat, 0.14),
    ] {
        if (got - want).abs() > tolerance {
            misses.push(format!("{what} = {got}, printed {want}"));
        }
    }
    let mut lines = vec![format!(
        "  Δ = 3.6: case {}, ell {}, rate {:.6} nats",
        alloc.case, alloc.ell, alloc.rate_nats
    )];
    for (i, x) in c.iter().enumerate() {
        lines.push(format!(
            "    component {}: delta = ({:.6}, {:.6}), dhat = {:.6}",
            i + 1,
            x.delta1,
            x.delta2,
            x.dhat
        ));
    }
    lines.extend(misses.iter().map(|m| format!("  mismatch: {m}")));
    if verify {
        lines.push(format!("  oracle gap = {:.3e}", oracle_gap(&EX2, pair, alloc.rate_nats, tol)?));
    }
    Ok(Outcome {
        name: "Example 2 branch pattern".into(),
        pass: misses.is_empty(),
        lines,
    })
}

/// Runs all four checks at `tolerance`.
pub fn run(tolerance: f64, verify: bool, tol: &Tolerances) -> Vec<gjrdf::Result<Outcome>> {
    vec![
        first_example(
            "Example 1 case 1",
            (0.3, 0.2),
            two_pair([0.15, 0.15], [0.1, 0.1], [0.0, 0.0]),
            "A",
            tolerance,
            verify,
            tol,
        ),
        first_example(
            "Example 1 case 2",
            (1.3, 1.2),
            two_pair([0.5692, 0.7308], [0.5381, 0.6619], [0.1414, 0.0]),
            "B",
            tolerance,
            verify,
            tol,
        ),
        first_example(
            "Example 1 case 3",
            (0.5, 1.7),
            two_pair([0.25, 0.25], [0.7411, 0.9449], [0.1469, 0.0677]),
            "D",
            tolerance,
            verify,
            tol,
        ),
        second_example(tolerance, verify, tol),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pass_at_printed_precision() {
        for o in run(1e-3, false, &Tolerances::default()) {
            let o = o.unwrap();
            assert!(o.pass, "{}: {:?}", o.name, o.lines);
        }
    }

    #[test]
    fn rounded_values_fail_when_tight() {
        let fails = run(1e-12, false, &Tolerances::default())
            .into_iter()
            .filter(|o| !o.as_ref().unwrap().pass)
            .count();
        assert_eq!(fails, 2);
    }
}
