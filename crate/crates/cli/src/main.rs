use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gjrdf::solver::in_region_m;
use gjrdf::{to_cvf, DistortionPair, Error, Tolerances};
use gjrdf_cli::input::{self, InputError};
use gjrdf_cli::{report, row};
use serde::Serialize;

const INPUT_ERROR: u8 = 2;
const SOLVER_FAILURE: u8 = 3;
const EXAMPLE_REGRESSION: u8 = 4;

/// Joint rate-distortion function of correlated Gaussian sources.
///
/// Tolerance defaults can be overridden with a JSON map in GJRDF_TOL_OVERRIDES.
#[derive(Parser)]
#[command(name = "gjrdf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical variable form of a source given as JSON.
    Transform {
        /// File holding {"Q": [[...]], "p1": k} or {"d": [...]}.
        input: PathBuf,
        /// Correlations at or above 1 - eps_one are identical components.
        #[arg(long)]
        eps_one: Option<f64>,
        /// Correlations at or below eps_zero are independent components.
        #[arg(long)]
        eps_zero: Option<f64>,
    },
    /// Joint RDF at one budget pair, printed as JSON.
    Rate(RateArgs),
    /// Same as `rate --verify`.
    Verify(RateArgs),
    /// Joint RDF over a grid of budget pairs, written as CSV.
    Sweep {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        d: Vec<f64>,
        /// d1min:d1max:steps,d2min:d2max:steps
        #[arg(long)]
        grid: String,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add an oracle_gap column.
        #[arg(long)]
        verify: bool,
        /// Spread grid rows over worker threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Reproduce the worked examples and compare with the printed values.
    Examples {
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        /// Also report the gap to the matrix oracle.
        #[arg(long)]
        verify: bool,
    },
}

#[derive(Args)]
struct RateArgs {
    /// Canonical correlations, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    d: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta1: f64,
    #[arg(long, allow_hyphen_values = true)]
    delta2: f64,
    /// Also run the matrix oracle and report the gap.
    #[arg(long)]
    verify: bool,
    /// Print the summary line on stderr in bits instead of nats.
    #[arg(long)]
    bits: bool,
    /// Refuse inputs that land in a region where only one budget binds.
    #[arg(long)]
    strict_paper: bool,
}

#[derive(Serialize)]
struct RateReport<'a> {
    #[serde(flatten)]
    row: &'a row::SweepRow,
    correlations: &'a [f64],
    components: &'a [gjrdf::ComponentAllocation],
}

fn fail(code: u8, name: &str, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {name}: {msg}");
    ExitCode::from(code)
}

fn model_failure(e: &Error) -> ExitCode {
    if let Error::NoFeasibleCase(report) = e {
        eprint!("{report}");
        if let Ok(json) = serde_json::to_string(report) {
            eprintln!("{json}");
        }
    }
    fail(row::exit_code(e) as u8, e.name(), e)
}

fn input_failure(e: &InputError) -> ExitCode {
    fail(INPUT_ERROR, e.name(), e)
}

fn transform(path: &PathBuf, eps_one: Option<f64>, eps_zero: Option<f64>, tol: &Tolerances) -> ExitCode {
    let src = match input::read_source(path, tol) {
        Ok(s) => s,
        Err(e) => return input_failure(&e),
    };
    let cf = match to_cvf(&src, eps_one.unwrap_or(tol.eps_one), eps_zero.unwrap_or(tol.eps_zero)) {
        Ok(c) => c,
        Err(e) => return model_failure(&e),
    };
    let p = cf.partition;
    println!("canonical correlations: {:?}", cf.d);
    println!("identical: p11={}, p21={}", p.p11, p.p21);
    println!("correlated: p12={}, p22={}", p.p12, p.p22);
    println!("independent: p13={}, p23={}", p.p13, p.p23);
    for (name, s) in [("S1", &cf.s1), ("S2", &cf.s2)] {
        println!("{name}:");
        for r in s.row_iter() {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:12.8}")).collect();
            println!("  [{}]", cells.join(" "));
        }
    }
    if !cf.transforms_orthogonal(1e-8) {
        log::warn!("S1, S2 are not orthogonal: trace budgets do not carry over to the canonical form");
    }
    ExitCode::SUCCESS
}

fn rate(args: &RateArgs, verify: bool, tol: &Tolerances) -> ExitCode {
    if args.strict_paper {
        match DistortionPair::new(args.delta1, args.delta2) {
            Ok(pair) => {
                for which in [1, 2] {
                    if in_region_m(&args.d, pair, which) {
                        return fail(
                            SOLVER_FAILURE,
                            "StrictPaper",
                            format!("(Δ1, Δ2) lies in M{which}, whose index set the printed text leaves ambiguous"),
                        );
                    }
                }
            }
            Err(e) => return model_failure(&e),
        }
    }
    let (r, alloc) = match row::evaluate(&args.d, args.delta1, args.delta2, verify, tol) {
        Ok(x) => x,
        Err(e) => return model_failure(&e),
    };
    let rep = RateReport {
        row: &r,
        correlations: &alloc.correlations,
        components: &alloc.components,
    };
    println!("{}", serde_json::to_string_pretty(&rep).expect("row serializes"));
    if args.bits {
        eprintln!("rate: {} bits", row::fmt_g(r.rate_bits));
    } else {
        eprintln!("rate: {} nats", row::fmt_g(r.rate_nats));
    }
    ExitCode::SUCCESS
}

fn sweep(d: &[f64], grid: &str, out: Option<&PathBuf>, verify: bool, parallel: bool, tol: &Tolerances) -> ExitCode {
    if let Err(e) = gjrdf::model::check_correlations(d) {
        return model_failure(&e);
    }
    let (a, b) = match input::parse_grid(grid) {
        Ok(g) => g,
        Err(e) => return fail(INPUT_ERROR, "BadGrid", e),
    };
    let rows = row::sweep(d, &a.values(), &b.values(), verify, parallel, tol);
    let written = match out {
        Some(path) => std::fs::File::create(path)
            .map(std::io::BufWriter::new)
            .and_then(|mut f| row::write_csv(&rows, verify, &mut f).and_then(|_| f.flush())),
        None => row::write_csv(&rows, verify, &mut std::io::stdout().lock()),
    };
    if let Err(e) = written {
        return fail(INPUT_ERROR, "Io", e);
    }
    let failed = rows.iter().filter(|r| r.is_failure()).count();
    if failed > 0 {
        log::warn!("{failed} of {} grid points failed", rows.len());
    }
    if failed == rows.len() {
        return fail(SOLVER_FAILURE, "AllRowsFailed", "no grid point could be solved");
    }
    ExitCode::SUCCESS
}

fn examples(tolerance: f64, verify: bool, tol: &Tolerances) -> ExitCode {
    let mut all_pass = true;
    for outcome in report::run(tolerance, verify, tol) {
        match outcome {
            Ok(o) => {
                println!("{}: {}", o.name, if o.pass { "PASS" } else { "FAIL" });
                for l in &o.lines {
                    println!("{l}");
                }
                all_pass &= o.pass;
            }
            Err(e) => {
                println!("example: FAIL ({}: {e})", e.name());
                all_pass = false;
            }
        }
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXAMPLE_REGRESSION)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let overrides = std::env::var("GJRDF_TOL_OVERRIDES").ok();
    let tol = match input::tolerances(overrides.as_deref()) {
        Ok(t) => t,
        Err(e) => return input_failure(&e),
    };
    match &cli.command {
        Command::Transform {
            input,
            eps_one,
            eps_zero,
        } => transform(input, *eps_one, *eps_zero, &tol),
        Command::Rate(args) => rate(args, args.verify, &tol),
        Command::Verify(args) => rate(args, true, &tol),
        Command::Sweep {
            d,
            grid,
            out,
            verify,
            parallel,
        } => sweep(d, grid, out.as_ref(), *verify, *parallel, &tol),
        Command::Examples { tolerance, verify } => examples(*tolerance, *verify, &tol),
    }
}
