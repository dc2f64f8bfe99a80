//! One evaluated grid point and its CSV/JSON renderings.

use gjrdf::{
    joint_rdf, maxdet_solve, DistortionPair, Error, JointGaussianSource, OracleOptions, RdfAllocation, Tolerances,
};
use serde::Serialize;

pub const HEADER: &str = "delta1,delta2,rate_nats,rate_bits,case,kappa,ell,newton_iters,residual";

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub delta1: f64,
    pub delta2: f64,
    pub rate_nats: f64,
    pub rate_bits: f64,
    /// Case letter, or `FAIL` when no allocation was found.
    pub case_label: String,
    pub kappa: Option<usize>,
    pub ell: Option<usize>,
    pub newton_iters: Option<usize>,
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_gap: Option<f64>,
}

impl SweepRow {
    pub fn from_allocation(delta: DistortionPair, a: &RdfAllocation) -> Self {
        Self {
            delta1: delta.delta1,
            delta2: delta.delta2,
            rate_nats: a.rate_nats,
            rate_bits: a.rate_bits(),
            case_label: a.case.to_string(),
            kappa: Some(a.kappa),
            ell: Some(a.ell),
            newton_iters: Some(a.newton.as_ref().map_or(0, |s| s.iterations)),
            residual: Some(a.newton.as_ref().map_or(0.0, |s| s.residual_norm)),
            oracle_gap: None,
        }
    }

    pub fn failed(delta1: f64, delta2: f64) -> Self {
        Self {
            delta1,
            delta2,
            rate_nats: f64::NAN,
            rate_bits: f64::NAN,
            case_label: "FAIL".into(),
            kappa: None,
            ell: None,
            newton_iters: None,
            residual: None,
            oracle_gap: None,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.case_label == "FAIL"
    }

    pub fn csv(&self, with_gap: bool) -> String {
        let int = |v: Option<usize>| v.map_or(String::new(), |x| x.to_string());
        let float = |v: Option<f64>| fmt_g(v.unwrap_or(f64::NAN));
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{}",
            fmt_g(self.delta1),
            fmt_g(self.delta2),
            fmt_g(self.rate_nats),
            fmt_g(self.rate_bits),
            self.case_label,
            int(self.kappa),
            int(self.ell),
            int(self.newton_iters),
            float(self.residual),
        );
        if with_gap {
            line.push(',');
            line.push_str(&float(self.oracle_gap));
        }
        line
    }
}

/// Solves one point; with `verify` also runs the oracle and records the gap.
pub fn evaluate(
    d: &[f64],
    delta1: f64,
    delta2: f64,
    verify: bool,
    tol: &Tolerances,
) -> gjrdf::Result<(SweepRow, RdfAllocation)> {
    let delta = DistortionPair::new(delta1, delta2)?;
    let alloc = joint_rdf(d, delta, tol)?;
    let mut row = SweepRow::from_allocation(delta, &alloc);
    if verify {
        row.oracle_gap = Some(oracle_gap(d, delta, alloc.rate_nats, tol)?);
    }
    Ok((row, alloc))
}

pub fn oracle_gap(d: &[f64], delta: DistortionPair, rate: f64, tol: &Tolerances) -> gjrdf::Result<f64> {
    let src = JointGaussianSource::from_correlations(d, tol)?;
    let o = maxdet_solve(&src, delta, &OracleOptions::default(), tol)?.into_converged()?;
    Ok((rate - o.rate_nats).abs())
}

/// Evaluates a row-major grid. Failures become `FAIL` rows and are logged.
pub fn sweep(d: &[f64], d1: &[f64], d2: &[f64], verify: bool, parallel: bool, tol: &Tolerances) -> Vec<SweepRow> {
    let line = |a: f64| -> Vec<SweepRow> {
        d2.iter()
            .map(|&b| match evaluate(d, a, b, verify, tol) {
                Ok((row, _)) => row,
                Err(e) => {
                    log::warn!("({a}, {b}): {}: {e}", e.name());
                    SweepRow::failed(a, b)
                }
            })
            .collect()
    };
    if !parallel {
        return d1.iter().flat_map(|&a| line(a)).collect();
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(d1.len().max(1));
    let mut lines: Vec<Vec<SweepRow>> = vec![Vec::new(); d1.len()];
    let chunk = d1.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        for (vals, out) in d1.chunks(chunk).zip(lines.chunks_mut(chunk)) {
            s.spawn(move || {
                for (&a, slot) in vals.iter().zip(out.iter_mut()) {
                    *slot = line(a);
                }
            });
        }
    });
    lines.into_iter().flatten().collect()
}

pub fn write_csv(rows: &[SweepRow], with_gap: bool, out: &mut impl std::io::Write) -> std::io::Result<()> {
    let header = if with_gap {
        format!("{HEADER},oracle_gap")
    } else {
        HEADER.to_string()
    };
    writeln!(out, "{header}")?;
    for r in rows {
        writeln!(out, "{}", r.csv(with_gap))?;
    }
    Ok(())
}

/// `printf("%.12g")`.
pub fn fmt_g(x: f64) -> String {
    const SIG: usize = 12;
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Rounding to SIG digits decides the exponent, as in C.
    let sci = format!("{:.*e}", SIG - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG as i32 {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (SIG as i32 - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoFeasibleCase(_) | Error::NotConverged(_) | Error::NoConvergence { .. } => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g_format_matches_printf() {
        assert_eq!(fmt_g(0.3), "0.3");
        assert_eq!(fmt_g(1.0), "1");
        assert_eq!(fmt_g(-2.5), "-2.5");
        assert_eq!(fmt_g(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_g(2.0 / 3.0 * 100.0), "66.6666666667");
        assert_eq!(fmt_g(1e-5), "1e-05");
        assert_eq!(fmt_g(1.5e-12), "1.5e-12");
        assert_eq!(fmt_g(0.0001), "0.0001");
        assert_eq!(fmt_g(123456789012.0), "123456789012");
        assert_eq!(fmt_g(1234567890123.0), "1.23456789012e+12");
        assert_eq!(fmt_g(999999999999.9), "1e+12");
        assert_eq!(fmt_g(0.0), "0");
        assert_eq!(fmt_g(f64::NAN), "NaN");
    }

    #[test]
    fn failed_row_renders_nan() {
        let r = SweepRow::failed(0.5, 0.25);
        assert_eq!(r.csv(false), "0.5,0.25,NaN,NaN,FAIL,,,,NaN");
        assert_eq!(r.csv(true), "0.5,0.25,NaN,NaN,FAIL,,,,NaN,NaN");
    }

    #[test]
    fn parallel_matches_serial() {
        let tol = Tolerances::default();
        let d = [0.588, 0.271];
        let a: Vec<f64> = (1..=7).map(|i| 0.3 * i as f64).collect();
        let b: Vec<f64> = (1..=5).map(|i| 0.35 * i as f64).collect();
        let s = sweep(&d, &a, &b, false, false, &tol);
        let p = sweep(&d, &a, &b, false, true, &tol);
        let render = |rows: &[SweepRow]| rows.iter().map(|r| r.csv(false)).collect::<Vec<_>>();
        assert_eq!(render(&s), render(&p));
        assert_eq!(s.len(), 35);
        assert_eq!((s[1].delta1, s[1].delta2), (a[0], b[1]));
    }

    #[test]
    fn bits_are_nats_over_ln2() {
        let (row, _) = evaluate(&[0.588, 0.271], 1.3, 1.2, false, &Tolerances::default()).unwrap();
        assert_eq!(row.rate_bits, row.rate_nats / std::f64::consts::LN_2);
        assert!(row.oracle_gap.is_none());
    }
}
