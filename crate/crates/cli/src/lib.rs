//! Argument parsing and dispatch for the `lsam` binary.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use lsam::complexity::{run_sweep, sweep_csv, SweepConfig, SweepRow};
use lsam::dynamics::{exact_moment_recursion, oracle_covariance, simulate_mse, InitialCondition, MseSeries};
use lsam::output::{fmt_f64, provenance_header, series_csv, series_plot_data, TOOL_NAME, TOOL_VERSION};
use lsam::problem::{NoiseModel, ProblemSpec, QuadraticProblem};
use lsam::spectral::{spectral_report, MethodParams, MethodTag};
use lsam::theory::{bound_report, table1_params};
use lsam::verify::{margins_csv, run_suite, GridOverrides, Resolution, Suite, SuiteReport};
use lsam::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_VERIFICATION_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lsam", version, about = "Momentum methods for linear stochastic approximation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo estimate of the mean squared error
    Simulate(RunArgs),
    /// Exact mean squared error from the moment recursion
    Oracle(RunArgs),
    /// Companion-matrix spectrum and constants
    Spectral(RunArgs),
    /// Lower and upper sample-complexity bounds
    Bounds(RunArgs),
    /// Run verification suites and write a margins table
    Verify(VerifyArgs),
    /// Parameter sweep from a JSON configuration
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Sgd,
    Shb,
    Asg,
    Generic,
}

impl From<MethodArg> for MethodTag {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Sgd => MethodTag::Sgd,
            MethodArg::Shb => MethodTag::Shb,
            MethodArg::Asg => MethodTag::Asg,
            MethodArg::Generic => MethodTag::Generic,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Problem JSON: a file path or an inline object
    #[arg(long)]
    problem: String,
    #[arg(long, value_enum, default_value = "sgd")]
    method: MethodArg,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<f64>,
    /// Noise level: total variance of isotropic noise when the problem has no noise block
    #[arg(long = "K", allow_hyphen_values = true)]
    k: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Starting iterate as comma-separated values (default: origin)
    #[arg(long)]
    x0: Option<String>,
    /// Use x̃₋₁ = 0 instead of starting at rest
    #[arg(long)]
    legacy_init: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write long-format plot data to this path
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Suite name, or `all`
    #[arg(long, default_value = "all")]
    suite: String,
    /// `coarse`, `fine`, or a path to a JSON grid file
    #[arg(long, default_value = "fine")]
    grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    emit_plot_data: Option<PathBuf>,
}

/// A failure with its exit code and a one-line diagnostic.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure {
            code: EXIT_INVALID,
            message: err.to_string(),
        }
    }
}

fn invalid(field: &str, message: impl std::fmt::Display) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: format!("invalid {field}: {message}"),
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let rendered = e.to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("error: invalid arguments"));
            return EXIT_INVALID;
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return f.code;
    }
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("LSAM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| invalid("LSAM_THREADS", format!("expected a positive integer, got '{value}'")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(args) => cmd_series(args, true),
        Command::Oracle(args) => cmd_series(args, false),
        Command::Spectral(args) => cmd_spectral(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn read_text(path: &Path, field: &str) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| invalid(field, format!("cannot read {}: {e}", path.display())))
}

fn load_problem_spec(arg: &str) -> Result<ProblemSpec, Failure> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read_text(Path::new(arg), "problem")?
    };
    ProblemSpec::from_json(&text).map_err(|e| invalid("problem", e))
}

fn write_output(out: Option<&Path>, content: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| Failure {
            code: EXIT_INVALID,
            message: format!("cannot write {}: {e}", path.display()),
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure {
                    code: EXIT_INVALID,
                    message: format!("cannot write to stdout: {e}"),
                })
        }
    }
}

fn provenance_value(config: &Value, seed: u64) -> Value {
    json!({ "tool": TOOL_NAME, "version": TOOL_VERSION, "seed": seed, "config": config })
}

fn json_document<T: Serialize>(config: &Value, seed: u64, result: &T) -> Result<String, Failure> {
    let doc = json!({ "provenance": provenance_value(config, seed), "result": result });
    serde_json::to_string_pretty(&doc)
        .map(|s| s + "\n")
        .map_err(|e| Failure {
            code: EXIT_INVALID,
            message: format!("cannot serialise output: {e}"),
        })
}

/// Problem, parameters, start and noise resolved from the run arguments.
struct Resolved {
    spec: ProblemSpec,
    problem: QuadraticProblem,
    params: MethodParams,
    start: InitialCondition,
    noise: NoiseModel,
}

fn resolve(args: &RunArgs) -> Result<Resolved, Failure> {
    let spec = load_problem_spec(&args.problem)?;
    let problem = spec.build()?;
    let d = problem.dim();
    let x0 = match &args.x0 {
        None => vec![0.0; d],
        Some(text) => {
            let values: Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let values = values.map_err(|e| invalid("x0", e))?;
            if values.len() != d {
                return Err(invalid("x0", format!("expected {d} values, got {}", values.len())));
            }
            values
        }
    };
    let start = InitialCondition::new(problem.error_of(&DVector::from_vec(x0)), args.legacy_init);
    let params = resolve_params(args, &problem)?;
    let noise = match spec.build_noise(d)? {
        Some(n) => n,
        None => {
            let k = args.k.unwrap_or(1.0);
            if !(k >= 0.0) {
                return Err(invalid("K", format!("must be >= 0, got {k}")));
            }
            NoiseModel::isotropic(k / d as f64, d, args.seed)?
        }
    };
    Ok(Resolved {
        spec,
        problem,
        params,
        start,
        noise,
    })
}

fn resolve_params(args: &RunArgs, problem: &QuadraticProblem) -> Result<MethodParams, Failure> {
    let method: MethodTag = args.method.into();
    if args.alpha.is_none() && method != MethodTag::Generic {
        let epsilon = args
            .epsilon
            .ok_or_else(|| invalid("epsilon", "required for table parameters when --alpha is absent"))?;
        let k = args
            .k
            .ok_or_else(|| invalid("K", "required for table parameters when --alpha is absent"))?;
        return Ok(table1_params(method, problem, epsilon, k)?);
    }
    let alpha = args.alpha.ok_or_else(|| invalid("alpha", "required for the generic method"))?;
    let (beta, eta) = match method {
        MethodTag::Sgd => (args.beta.unwrap_or(0.0), args.eta.unwrap_or(0.0)),
        MethodTag::Shb => (args.beta.unwrap_or(0.0), required(args.eta, "eta")?),
        MethodTag::Asg => (args.beta.unwrap_or(1.0), required(args.eta, "eta")?),
        MethodTag::Generic => (args.beta.unwrap_or(0.0), args.eta.unwrap_or(0.0)),
    };
    Ok(MethodParams::new(alpha, beta, eta, method)?)
}

fn required(v: Option<f64>, field: &str) -> Result<f64, Failure> {
    v.ok_or_else(|| invalid(field, format!("--{field} is required with --alpha for this method")))
}

fn run_config(command: &str, args: &RunArgs, r: &Resolved) -> Value {
    json!({
        "command": command,
        "problem": r.spec,
        "params": r.params,
        "epsilon": args.epsilon,
        "K": args.k,
        "noise": {"kind": r.noise.kind, "dim": r.noise.dim},
        "trials": args.trials,
        "n": args.n,
        "seed": args.seed,
        "x0": args.x0,
        "legacy_init": args.legacy_init,
    })
}

fn cmd_series(args: RunArgs, monte_carlo: bool) -> Result<(), Failure> {
    let r = resolve(&args)?;
    if args.n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let series: MseSeries = if monte_carlo {
        if args.trials == 0 {
            return Err(invalid("trials", "must be >= 1"));
        }
        simulate_mse(&r.problem, &r.params, &r.noise, &r.start, args.n, args.trials, args.seed)?
    } else {
        let cov = oracle_covariance(&r.noise)?;
        exact_moment_recursion(&r.problem, &r.params, &cov, &r.start, args.n)?
    };
    let config = run_config(if monte_carlo { "simulate" } else { "oracle" }, &args, &r);
    let content = match args.format.unwrap_or(Format::Csv) {
        Format::Csv => provenance_header(&config, args.seed) + &series_csv(&series),
        Format::Json => json_document(&config, args.seed, &series)?,
    };
    write_output(args.out.as_deref(), &content)?;
    if let Some(path) = &args.emit_plot_data {
        let plot = provenance_header(&config, args.seed) + &series_plot_data(&series);
        write_output(Some(path), &plot)?;
    }
    Ok(())
}

fn cmd_spectral(args: RunArgs) -> Result<(), Failure> {
    let r = resolve(&args)?;
    let report = spectral_report(&r.problem, &r.params)?;
    let config = run_config("spectral", &args, &r);
    let content = match args.format.unwrap_or(Format::Json) {
        Format::Json => json_document(&config, args.seed, &report)?,
        Format::Csv => {
            let mut out = provenance_header(&config, args.seed);
            out.push_str("lambda,mu_plus_re,mu_plus_im,mu_minus_re,mu_minus_im,delta,branch\n");
            for b in &report.eigen {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    fmt_f64(b.lambda),
                    fmt_f64(b.mu_plus[0]),
                    fmt_f64(b.mu_plus[1]),
                    fmt_f64(b.mu_minus[0]),
                    fmt_f64(b.mu_minus[1]),
                    fmt_f64(b.delta),
                    serde_json::to_value(b.branch).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
                );
            }
            out
        }
    };
    write_output(args.out.as_deref(), &content)
}

fn cmd_bounds(args: RunArgs) -> Result<(), Failure> {
    let method: MethodTag = args.method.into();
    if method == MethodTag::Generic {
        return Err(invalid("method", "bounds are defined for sgd, shb and asg"));
    }
    let epsilon = args.epsilon.ok_or_else(|| invalid("epsilon", "required"))?;
    let k = args.k.ok_or_else(|| invalid("K", "required"))?;
    let r = resolve(&args)?;
    let explicit = args.alpha.is_some().then_some(r.params);
    let report = bound_report(method, &r.problem, epsilon, k, r.start.lambda(), explicit)?;
    let config = run_config("bounds", &args, &r);
    match args.format.unwrap_or(Format::Json) {
        Format::Json => write_output(args.out.as_deref(), &json_document(&config, args.seed, &report)?),
        Format::Csv => Err(invalid("format", "bounds are emitted as json")),
    }
}

fn resolution(grid: &str) -> Result<Resolution, Failure> {
    match grid {
        "coarse" => Ok(Resolution::Coarse),
        "fine" => Ok(Resolution::Fine),
        path => {
            let text = read_text(Path::new(path), "grid")?;
            Ok(Resolution::Custom(GridOverrides::from_json(&text).map_err(|e| invalid("grid", e))?))
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        args.suite
            .split(',')
            .map(|s| s.trim().parse::<Suite>())
            .collect::<Result<_, _>>()?
    };
    let res = resolution(&args.grid)?;
    let mut reports: Vec<SuiteReport> = Vec::new();
    for suite in suites {
        let report = run_suite(suite, &res)?;
        eprintln!("{}", report.summary());
        reports.push(report);
    }
    let config = json!({
        "command": "verify",
        "suites": reports.iter().map(|r| r.suite.name()).collect::<Vec<_>>(),
        "grid": args.grid,
    });
    let content = match args.format.unwrap_or(Format::Csv) {
        Format::Csv => provenance_header(&config, 0) + &margins_csv(&reports),
        Format::Json => json_document(&config, 0, &reports)?,
    };
    write_output(args.out.as_deref(), &content)?;
    let failed: Vec<&SuiteReport> = reports.iter().filter(|r| !r.passed).collect();
    if failed.is_empty() {
        return Ok(());
    }
    let mut message = String::from("verification failed");
    for r in failed {
        if let Some(w) = r.worst() {
            let _ = write!(
                message,
                "; {} worst row: {},{},{},{},{}",
                r.suite.name(),
                w.grid_point,
                w.quantity,
                fmt_f64(w.bound),
                fmt_f64(w.actual),
                fmt_f64(w.margin)
            );
        }
    }
    Err(Failure {
        code: EXIT_VERIFICATION_FAILED,
        message,
    })
}

fn sweep_plot_data(rows: &[SweepRow]) -> String {
    let mut out = String::from("row,method,epsilon,K,quantity,value\n");
    for (i, r) in rows.iter().enumerate() {
        let quantities = [
            ("rho_P", Some(r.rho_p)),
            ("n0_lower", r.n0_lower),
            ("n0_upper", r.n0_upper),
            ("n0_empirical", r.n0_empirical.map(|n| n as f64)),
        ];
        for (name, value) in quantities {
            if let Some(v) = value {
                let _ = writeln!(
                    out,
                    "{i},{},{},{},{name},{}",
                    r.method,
                    fmt_f64(r.epsilon),
                    fmt_f64(r.k),
                    fmt_f64(v)
                );
            }
        }
    }
    out
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let text = read_text(&args.config, "config")?;
    let config = SweepConfig::from_json(&text).map_err(|e| match e {
        Error::Validation { .. } => Failure::from(e),
        other => invalid("config", other),
    })?;
    let rows = run_sweep(&config)?;
    let content = match args.format.unwrap_or(Format::Csv) {
        Format::Csv => sweep_csv(&config, &rows),
        Format::Json => json_document(&serde_json::to_value(&config).unwrap_or(Value::Null), config.seed, &rows)?,
    };
    write_output(args.out.as_deref(), &content)?;
    if let Some(path) = &args.emit_plot_data {
        let plot = provenance_header(&config, config.seed) + &sweep_plot_data(&rows);
        write_output(Some(path), &plot)?;
    }
    Ok(())
}
