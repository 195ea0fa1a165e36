//! `mpec`: value-function approximation, Algorithm runs, oracle queries and
//! epsilon fits for polynomial MPEC instances.
//!
//! Exit codes: 0 success, 2 unreadable input, 3 solver failure,
//! 4 precondition violated, 5 every perturbed set certified empty.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mpec_core::driver::{
    fit_eps_scaling, run_epsilon_ladder, stagnates_above, verify_trace, AlgoConfig, AlgorithmTrace, DriverError,
    EpsScalingFit, TerminationReason,
};
use mpec_core::jm::{compute_jk, l1_distance_estimate, lower_bound_check, GridComparison, JmError, ValueFunctionApprox};
use mpec_core::oracle::{solve_p_eps_ladder, JOracle, JValue, OracleConfig, OracleError, PEpsReference};
use mpec_core::problem::{load_bundled, load_problem_file, validate_assumptions, AssumptionReport, BUNDLED};
use mpec_core::{MpecProblem, SolverOptions};

#[derive(Parser)]
#[command(name = "mpec", version, about = "Global solution of polynomial MPECs via value-function approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the order-k value-function approximation with diagnostics.
    Approx(ApproxArgs),
    /// Run the outer algorithm at a fixed epsilon.
    Solve(SolveArgs),
    /// Query the brute-force oracle.
    Oracle(OracleArgs),
    /// Fit the power law of the perturbed optimal value in epsilon.
    FitEps(FitArgs),
    /// Load an instance and report degrees and sampled assumption checks.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ApproxArgs {
    /// Bundled instance name or path to an instance file.
    instance: String,
    #[arg(long)]
    k: u32,
    /// JSON report path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Plain-text coefficient table path.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Grid points per dimension for the oracle diagnostics (0 skips them).
    #[arg(long, default_value_t = 41)]
    grid: usize,
}

#[derive(Args)]
struct SolveArgs {
    instance: String,
    #[arg(long, allow_hyphen_values = true)]
    eps: f64,
    /// Order range `a..b` (inclusive) or a single order.
    #[arg(long, default_value = "")]
    k: String,
    /// Further decreasing epsilons, comma separated, reusing the approximations.
    #[arg(long, value_delimiter = ',')]
    ladder: Vec<f64>,
    #[arg(long, default_value_t = 1e-6)]
    stop_tol: f64,
    #[arg(long, default_value_t = 2)]
    stall: usize,
    /// Extra relaxation orders tried beyond the minimal one.
    #[arg(long, default_value_t = 2)]
    extra_orders: u32,
    /// JSON report path.
    #[arg(long)]
    output: Option<PathBuf>,
    /// CSV path for the `(k, running minimum)` series.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Compare against the oracle reference and flag stagnation above it.
    #[arg(long)]
    reference: bool,
}

#[derive(Args)]
struct OracleArgs {
    instance: String,
    /// Evaluate the value function at the point `x.. y..`.
    #[arg(long = "J", num_args = 1.., allow_hyphen_values = true, conflicts_with = "peps")]
    j: Option<Vec<f64>>,
    /// Reference solution of the perturbed problem at this epsilon.
    #[arg(long = "Peps", id = "peps", allow_hyphen_values = true)]
    peps: Option<f64>,
    #[arg(long)]
    inner_grid: Option<usize>,
    #[arg(long)]
    outer_grid: Option<usize>,
}

#[derive(Args)]
struct FitArgs {
    instance: String,
    /// Epsilon values, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    eps: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    fstar: f64,
    /// Use these values instead of oracle references (same order as `--eps`).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    values: Vec<f64>,
    /// CSV path for the `(eps, value)` samples.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    instance: String,
    #[arg(long, default_value_t = 4096)]
    samples: usize,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(m: impl Into<String>) -> Self {
        Self { code: 2, message: m.into() }
    }
    fn solver(m: impl Into<String>) -> Self {
        Self { code: 3, message: m.into() }
    }
    fn precondition(m: impl Into<String>) -> Self {
        Self { code: 4, message: m.into() }
    }
}

impl From<JmError> for Failure {
    fn from(e: JmError) -> Self {
        match e {
            JmError::OrderTooSmall { .. } => Failure::precondition(e.to_string()),
            JmError::Oracle(o) => o.into(),
            JmError::Table(_) => Failure::input(e.to_string()),
            _ => Failure::solver(e.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::precondition(e.to_string())
    }
}

impl From<DriverError> for Failure {
    fn from(e: DriverError) -> Self {
        Failure::precondition(e.to_string())
    }
}

fn load_instance(name: &str) -> Result<MpecProblem, Failure> {
    let path = Path::new(name);
    if path.exists() {
        return load_problem_file(path).map_err(|e| Failure::input(format!("{name}: {e}")));
    }
    if BUNDLED.contains(&name) {
        return load_bundled(name).map_err(|e| Failure::input(e.to_string()));
    }
    Err(Failure::input(format!(
        "`{name}` is neither a file nor a bundled instance ({})",
        BUNDLED.join(", ")
    )))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::input(format!("writing {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    write_file(path, &text)
}

fn fmt_point(p: &[f64]) -> String {
    p.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" ")
}

/// Report written by `approx`.
#[derive(Serialize, Deserialize)]
struct ApproxReport {
    instance: String,
    approximation: ValueFunctionApprox,
    lower_bound: Option<GridComparison>,
    l1_estimate: Option<f64>,
}

fn cmd_approx(a: ApproxArgs) -> Result<(), Failure> {
    let problem = load_instance(&a.instance)?;
    let approx = compute_jk(&problem, a.k, &SolverOptions::default())?;
    let config = OracleConfig::default();
    let (lower_bound, l1_estimate) = if a.grid > 0 && problem.n() + problem.m() <= mpec_core::oracle::MAX_DIMS {
        (
            Some(lower_bound_check(&approx, &problem, a.grid, &config)?),
            Some(l1_distance_estimate(&approx, &problem, a.grid, &config)?),
        )
    } else {
        (None, None)
    };
    println!("instance {}", problem.name);
    println!("k {}", approx.order_k);
    println!("rho_k {:.6}", approx.rho_k);
    println!("gap {:.6e}", approx.achieved_gap);
    println!("identity_residual {:.6e}", approx.identity_residual);
    if let Some(lb) = &lower_bound {
        println!("lower_bound_violation {:.6e}", lb.max_violation);
        if lb.skipped > 0 {
            println!("skipped_points {}", lb.skipped);
        }
    }
    if let Some(l1) = l1_estimate {
        println!("l1_estimate {l1:.6}");
    }
    println!("vars {}", approx.coefficients.vars.join(" "));
    for t in &approx.coefficients.terms {
        let exps = t.exponents.iter().map(u32::to_string).collect::<Vec<_>>().join(" ");
        println!("{exps} {:.6}", t.coefficient);
    }
    if let Some(path) = &a.table {
        write_file(path, &approx.coefficients.to_text())?;
    }
    if let Some(path) = &a.output {
        write_json(
            path,
            &ApproxReport {
                instance: problem.name.clone(),
                approximation: approx,
                lower_bound,
                l1_estimate,
            },
        )?;
    }
    Ok(())
}

fn parse_k_range(text: &str, problem: &MpecProblem) -> Result<(u32, u32), Failure> {
    let k_min = problem.k_min();
    if text.is_empty() {
        return Ok((k_min, k_min + 2));
    }
    let parse = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| Failure::input(format!("bad order `{s}` in `--k {text}`")))
    };
    match text.split_once("..") {
        Some((a, b)) => Ok((parse(a)?, parse(b.trim_start_matches('='))?)),
        None => {
            let k = parse(text)?;
            Ok((k, k))
        }
    }
}

/// Report written by `solve`: one trace per epsilon.
#[derive(Serialize, Deserialize)]
struct SolveReport {
    instance: String,
    traces: Vec<AlgorithmTrace>,
    reference: Option<PEpsReference>,
    stagnates_above_reference: Option<bool>,
}

fn cmd_solve(a: SolveArgs) -> Result<(), Failure> {
    let problem = load_instance(&a.instance)?;
    let (k0, k1) = parse_k_range(&a.k, &problem)?;
    let mut config = AlgoConfig::new(a.eps, k0, k1);
    config.stop_tol = a.stop_tol;
    config.stall_iterations = a.stall;
    config.extra_orders = a.extra_orders;
    if !a.ladder.is_empty() {
        config.epsilon_ladder = Some(a.ladder.clone());
    }
    let traces = run_epsilon_ladder(&problem, &config)?;
    let main = &traces[0];
    for t in &traces {
        println!("epsilon {}", t.config.epsilon);
        for r in &t.records {
            let val = r.val_pk_eps.map_or("-".into(), |v| format!("{v:.6}"));
            let run = r.v_eps_k.map_or("-".into(), |v| format!("{v:.6}"));
            let note = r.failure.as_deref().unwrap_or("");
            println!("  k {} sets {:?} value {val} running {run} {note}", r.k, r.sk_status);
        }
        match t.final_value {
            Some(v) => println!("  final_value {v:.6}"),
            None => println!("  final_value none"),
        }
        for p in &t.final_points {
            println!("  point {}", fmt_point(p));
        }
        println!("  termination {:?}", t.termination_reason);
    }
    let (reference, stagnation) = if a.reference {
        let r = mpec_core::oracle::solve_p_eps_reference(&problem, a.eps, &OracleConfig::default())?;
        let flag = r.value().map(|v| stagnates_above(main, v, 5e-3));
        if let Some(v) = r.value() {
            println!("reference {v:.6}");
        }
        if flag == Some(true) {
            println!("warning: final value stays above the oracle reference");
        }
        (Some(r), flag)
    } else {
        (None, None)
    };
    for t in &traces {
        for v in verify_trace(t, &problem) {
            eprintln!("invariant violated: {v}");
        }
    }
    if let Some(path) = &a.csv {
        write_file(path, &main.to_csv())?;
    }
    if let Some(path) = &a.output {
        write_json(
            path,
            &SolveReport {
                instance: problem.name.clone(),
                traces: traces.clone(),
                reference,
                stagnates_above_reference: stagnation,
            },
        )?;
    }
    if main.termination_reason == TerminationReason::AllEmpty {
        return Err(Failure {
            code: 5,
            message: "every perturbed set was certified empty".into(),
        });
    }
    if main.final_value.is_none() {
        return Err(Failure::solver("no iteration produced a certified solution"));
    }
    Ok(())
}

fn cmd_oracle(a: OracleArgs) -> Result<(), Failure> {
    let problem = load_instance(&a.instance)?;
    let config = OracleConfig {
        inner_grid: a.inner_grid,
        outer_grid: a.outer_grid,
        ..OracleConfig::default()
    };
    if let Some(point) = a.j {
        let dims = problem.n() + problem.m();
        if point.len() != dims {
            return Err(Failure::precondition(format!("--J expects {dims} coordinates, got {}", point.len())));
        }
        let oracle = JOracle::new(&problem, config)?;
        let (x, y) = point.split_at(problem.n());
        match oracle.eval_with_argmin(x, y) {
            (JValue::Value(v), argmin) => {
                println!("value {v:.6}");
                if let Some(v) = argmin {
                    println!("argmin {}", fmt_point(&v));
                }
            }
            (JValue::EmptyBx, _) => println!("value empty"),
        }
        return Ok(());
    }
    if let Some(eps) = a.peps {
        match mpec_core::oracle::solve_p_eps_reference(&problem, eps, &config)? {
            PEpsReference::Feasible { value, point } => {
                println!("value {value:.6}");
                println!("point {}", fmt_point(&point));
            }
            PEpsReference::Infeasible => println!("value infeasible"),
        }
        return Ok(());
    }
    Err(Failure::input("oracle needs --J or --Peps"))
}

fn cmd_fit(a: FitArgs) -> Result<(), Failure> {
    let problem = load_instance(&a.instance)?;
    let samples: Vec<(f64, f64)> = if a.values.is_empty() {
        if a.eps.len() < 3 {
            return Err(DriverError::TooFewSamples(a.eps.len()).into());
        }
        solve_p_eps_ladder(&problem, &a.eps, &OracleConfig::default())?
            .into_iter()
            .filter_map(|(e, r)| r.value().map(|v| (e, v)))
            .collect()
    } else {
        if a.values.len() != a.eps.len() {
            return Err(Failure::input("--values and --eps differ in length"));
        }
        a.eps.iter().copied().zip(a.values.iter().copied()).collect()
    };
    let fit: EpsScalingFit = fit_eps_scaling(&samples, a.fstar)?;
    for (e, v) in &fit.samples {
        println!("sample {e:e} {v:.6}");
    }
    println!("c {:.6}", fit.c);
    match fit.q {
        Some(q) => println!("q {q:.6}"),
        None => println!("q undefined (constant branch, c = 0)"),
    }
    println!("residual {:.6e}", fit.residual);
    if let Some(path) = &a.csv {
        let mut out = String::from("eps,value\n");
        for (e, v) in &fit.samples {
            out.push_str(&format!("{e:e},{v:e}\n"));
        }
        write_file(path, &out)?;
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    let problem = load_instance(&a.instance)?;
    let report: AssumptionReport = validate_assumptions(&problem, a.samples);
    println!("instance {}", problem.name);
    println!("variables x: {} y: {}", problem.x_vars.join(" "), problem.y_vars.join(" "));
    println!("box_squared_radii {}", fmt_point(problem.omega.bounds()));
    println!(
        "degrees objective {} g {:?} h {:?} phi {}",
        report.degrees.objective, report.degrees.g, report.degrees.h, report.degrees.phi
    );
    println!("k_min {}", report.degrees.k_min);
    println!("b_inside_box {}", report.b_inside_box);
    println!("bx_nonempty {} ({} of {} sampled x empty)", report.bx_nonempty, report.bx_empty_samples, report.x_samples);
    for w in &report.warnings {
        println!("warning {w}");
    }
    for n in &report.notes {
        println!("note {n}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Approx(a) => cmd_approx(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::FitEps(a) => cmd_fit(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
