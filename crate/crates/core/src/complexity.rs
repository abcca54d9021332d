//! Empirical sample complexity and parameter sweeps.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    simulate_mse, stationary_covariance, InitialCondition, ModalOracle, MseSeries, OraclePoint,
    SeriesSource, DIVERGENCE_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::output::{fmt_f64, fmt_opt, provenance_header};
use crate::problem::{NoiseModel, ProblemSpec, QuadraticProblem};
use crate::rng::mix_seeds;
use crate::spectral::{block_eigenvalues, MethodParams, MethodTag};
use crate::theory::{epsilon_eligibility, lower_bound_n0, table1_params, upper_bound_n};

/// Horizons are capped at this many steps.
pub const MAX_HORIZON: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanStatus {
    /// `mse ≤ ε` from `n₀` to the horizon, and the limit is certified below `ε`.
    Certified,
    /// Below `ε` up to the horizon but the tail is not certified.
    Censored,
    NotReached,
    Diverged,
}

impl ScanStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ScanStatus::Certified => "certified",
            ScanStatus::Censored => "censored",
            ScanStatus::NotReached => "not_reached",
            ScanStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleComplexityResult {
    pub epsilon: f64,
    pub n0_empirical: Option<usize>,
    pub horizon: usize,
    pub method: MethodTag,
    pub source: SeriesSource,
    /// `ε − mse(n₀)`, or `ε − min mse` when not reached.
    pub margin_at_n0: f64,
    pub min_mse: f64,
    pub status: ScanStatus,
    /// Monte Carlo only: the estimate is within two standard errors of `ε` near `n₀`.
    pub ambiguous: bool,
}

impl SampleComplexityResult {
    pub fn reached(&self) -> bool {
        self.n0_empirical.is_some()
    }
}

/// Outcome of scanning `mse(0..=horizon)` against `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scan {
    /// First index after the last exceedance; `horizon + 1` if the last point exceeds.
    pub first_good: usize,
    pub mse_at_first_good: f64,
    pub min_mse: f64,
    pub horizon: usize,
    pub diverged: bool,
}

impl Scan {
    pub fn reached(&self) -> bool {
        self.first_good <= self.horizon
    }
}

/// Scans `(n, mse)` pairs in order.
pub fn scan_series(points: impl IntoIterator<Item = (usize, f64)>, epsilon: f64) -> Scan {
    let mut scan = Scan {
        first_good: 0,
        mse_at_first_good: f64::NAN,
        min_mse: f64::INFINITY,
        horizon: 0,
        diverged: false,
    };
    let mut fresh = true;
    for (n, mse) in points {
        scan.horizon = n;
        scan.min_mse = scan.min_mse.min(mse);
        if !(mse <= epsilon) {
            scan.first_good = n + 1;
            fresh = true;
            if !(mse <= DIVERGENCE_THRESHOLD) {
                scan.diverged = true;
                break;
            }
        } else if fresh {
            scan.mse_at_first_good = mse;
            fresh = false;
        }
    }
    scan
}

fn stationary_certificate(
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise_cov: Option<&DMatrix<f64>>,
    epsilon: f64,
) -> Option<bool> {
    let cov = noise_cov?;
    match stationary_covariance(problem, params, cov) {
        Ok(s) => Some(s.trace_mse <= epsilon),
        Err(_) => Some(false),
    }
}

fn finish(
    scan: Scan,
    epsilon: f64,
    method: MethodTag,
    source: SeriesSource,
    certificate: Option<bool>,
) -> SampleComplexityResult {
    let (n0, status, margin) = if scan.diverged {
        (None, ScanStatus::Diverged, epsilon - scan.min_mse)
    } else if certificate == Some(false) || !scan.reached() {
        // a limit above ε makes any dip below it transient
        (None, ScanStatus::NotReached, epsilon - scan.min_mse)
    } else {
        let status = if certificate == Some(true) {
            ScanStatus::Certified
        } else {
            ScanStatus::Censored
        };
        (Some(scan.first_good), status, epsilon - scan.mse_at_first_good)
    };
    SampleComplexityResult {
        epsilon,
        n0_empirical: n0,
        horizon: scan.horizon,
        method,
        source,
        margin_at_n0: margin,
        min_mse: scan.min_mse,
        status,
        ambiguous: false,
    }
}

/// Smallest `n₀` with `mse(n) ≤ ε` on `[n₀, horizon]`. The tail is
/// certified when `ρ(P) < 1` and the stationary MSE under `noise_cov` is at
/// most `ε`; without a covariance the result is marked censored.
pub fn empirical_sample_complexity(
    series: &MseSeries,
    epsilon: f64,
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise_cov: Option<&DMatrix<f64>>,
) -> Result<SampleComplexityResult> {
    if !(epsilon > 0.0) {
        return Err(Error::validation("epsilon", "must be > 0"));
    }
    let scan = scan_series(series.points.iter().map(|p| (p.n, p.mse)), epsilon);
    let certificate = stationary_certificate(problem, params, noise_cov, epsilon);
    let mut result = finish(scan, epsilon, params.method, series.source, certificate);
    if series.source == SeriesSource::MonteCarlo {
        if let Some(n0) = result.n0_empirical {
            let reach = (n0 / 10).max(5);
            let lo = n0.saturating_sub(reach);
            let hi = (n0 + reach).min(series.points.len() - 1);
            result.ambiguous = series.points[lo..=hi]
                .iter()
                .any(|p| (p.mse - epsilon).abs() < 2.0 * p.stderr);
        }
    }
    Ok(result)
}

/// Same scan, streaming the exact oracle up to `horizon` without storing the series.
pub fn oracle_sample_complexity(
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise_cov: &DMatrix<f64>,
    start: &InitialCondition,
    epsilon: f64,
    horizon: usize,
) -> Result<SampleComplexityResult> {
    if !(epsilon > 0.0) {
        return Err(Error::validation("epsilon", "must be > 0"));
    }
    let oracle = ModalOracle::new(problem, params, noise_cov, start)?;
    let scan = scan_series(oracle.take(horizon + 1).map(|p| (p.n, p.mse)), epsilon);
    let certificate = stationary_certificate(problem, params, Some(noise_cov), epsilon);
    Ok(finish(scan, epsilon, params.method, SeriesSource::ExactOracle, certificate))
}

/// Largest exact MSE over `[from, to]`.
pub fn oracle_window_max(
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise_cov: &DMatrix<f64>,
    start: &InitialCondition,
    from: usize,
    to: usize,
) -> Result<(usize, f64)> {
    let oracle = ModalOracle::new(problem, params, noise_cov, start)?;
    Ok(oracle
        .take(to + 1)
        .skip(from)
        .map(|p: OraclePoint| (p.n, p.mse))
        .fold((from, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedGrid {
    Table1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Named(NamedGrid),
    Explicit {
        alpha: Vec<f64>,
        #[serde(default = "zero_list")]
        beta: Vec<f64>,
        #[serde(default = "zero_list")]
        eta: Vec<f64>,
    },
}

fn zero_list() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSource {
    #[default]
    Oracle,
    MonteCarlo,
}

/// Sweep description. Noise is isotropic Gaussian with variance `K/d` per
/// coordinate, so that `Tr(Q) = K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub problem: ProblemSpec,
    pub methods: Vec<MethodTag>,
    pub epsilon: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub grid: GridSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_multiplier")]
    pub horizon_multiplier: f64,
    #[serde(default)]
    pub source: SweepSource,
    /// Starting iterate; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub legacy_init: bool,
    #[serde(default = "default_max_horizon")]
    pub max_horizon: usize,
}

fn default_trials() -> usize {
    10_000
}

fn default_multiplier() -> f64 {
    4.0
}

fn default_max_horizon() -> usize {
    MAX_HORIZON
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::validation("methods", "must be nonempty"));
        }
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::validation("epsilon", "must be a nonempty list of positive values"));
        }
        if self.k.is_empty() || self.k.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::validation("K", "must be a nonempty list of nonnegative values"));
        }
        if !(self.horizon_multiplier >= 1.0) {
            return Err(Error::validation("horizon_multiplier", "must be >= 1"));
        }
        if self.trials == 0 {
            return Err(Error::validation("trials", "must be >= 1"));
        }
        if let GridSpec::Explicit { alpha, beta, eta } = &self.grid {
            if alpha.is_empty() || beta.is_empty() || eta.is_empty() {
                return Err(Error::validation("grid", "alpha, beta and eta lists must be nonempty"));
            }
        }
        if self.grid == GridSpec::Named(NamedGrid::Table1) && self.methods.contains(&MethodTag::Generic) {
            return Err(Error::validation("methods", "table1 grid covers sgd, shb and asg"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub method: MethodTag,
    pub d: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub rho_p: f64,
    pub n0_lower: Option<f64>,
    pub n0_upper: Option<f64>,
    pub n0_empirical: Option<usize>,
    pub status: ScanStatus,
    pub margin: f64,
    pub eligible: bool,
    /// Parameters could not be formed (for instance a momentum above one).
    pub error: Option<String>,
}

struct Cell {
    method: MethodTag,
    k: f64,
    epsilon: f64,
    params: Result<MethodParams>,
    index: usize,
}

/// One row per `(method, ε, K, grid point)`, in that nesting order.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let problem = config.problem.build()?;
    let d = problem.dim();
    let x0 = match &config.x0 {
        Some(v) if v.len() != d => {
            return Err(Error::validation("x0", format!("expected {d} entries, got {}", v.len())));
        }
        Some(v) => DVector::from_column_slice(v),
        None => DVector::zeros(d),
    };
    let start = InitialCondition::new(problem.error_of(&x0), config.legacy_init);
    let lambda = start.lambda();

    let mut cells = Vec::new();
    for &method in &config.methods {
        for &epsilon in &config.epsilon {
            for &k in &config.k {
                match &config.grid {
                    GridSpec::Named(NamedGrid::Table1) => cells.push(Cell {
                        method,
                        k,
                        epsilon,
                        params: table1_params(method, &problem, epsilon, k),
                        index: cells.len(),
                    }),
                    GridSpec::Explicit { alpha, beta, eta } => {
                        for &a in alpha {
                            for &b in beta {
                                for &e in eta {
                                    cells.push(Cell {
                                        method,
                                        k,
                                        epsilon,
                                        params: MethodParams::new(a, b, e, method),
                                        index: cells.len(),
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    cells
        .par_iter()
        .map(|cell| sweep_cell(config, &problem, &start, lambda, cell))
        .collect()
}

fn sweep_cell(
    config: &SweepConfig,
    problem: &QuadraticProblem,
    start: &InitialCondition,
    lambda: f64,
    cell: &Cell,
) -> Result<SweepRow> {
    let d = problem.dim();
    let lmin = problem.lambda_min();
    let seed = mix_seeds(config.seed, cell.index as u64);
    let sigma2 = cell.k / d as f64;
    let n0_lower = lower_bound_n0(cell.epsilon, sigma2, lmin, lambda).ok();
    let mut row = SweepRow {
        method: cell.method,
        d,
        lambda_min: lmin,
        lambda_max: problem.lambda_max(),
        alpha: f64::NAN,
        beta: f64::NAN,
        eta: f64::NAN,
        k: cell.k,
        epsilon: cell.epsilon,
        seed,
        rho_p: f64::NAN,
        n0_lower,
        n0_upper: None,
        n0_empirical: None,
        status: ScanStatus::NotReached,
        margin: f64::NAN,
        eligible: epsilon_eligibility(cell.epsilon, sigma2, lmin),
        error: None,
    };
    let params = match &cell.params {
        Ok(p) => *p,
        Err(e) => {
            row.error = Some(e.to_string());
            return Ok(row);
        }
    };
    row.alpha = params.alpha;
    row.beta = params.beta;
    row.eta = params.eta;
    row.rho_p = problem
        .eigenvalues
        .iter()
        .map(|&l| block_eigenvalues(l, &params).rho())
        .fold(0.0, f64::max);
    row.n0_upper = match cell.method {
        MethodTag::Generic => None,
        m => upper_bound_n(m, problem, &params, cell.epsilon, lambda).ok(),
    };
    let reference = row.n0_upper.into_iter().chain(n0_lower).fold(1.0, f64::max);
    let horizon = ((config.horizon_multiplier * reference).ceil() as usize).clamp(1, config.max_horizon);

    let noise_cov = DMatrix::<f64>::identity(d, d) * sigma2;
    let result = match config.source {
        SweepSource::Oracle => {
            oracle_sample_complexity(problem, &params, &noise_cov, start, cell.epsilon, horizon)?
        }
        SweepSource::MonteCarlo => {
            let noise = NoiseModel::isotropic(sigma2, d, seed)?;
            match simulate_mse(problem, &params, &noise, start, horizon, config.trials, seed) {
                Ok(series) => {
                    empirical_sample_complexity(&series, cell.epsilon, problem, &params, Some(&noise_cov))?
                }
                Err(Error::Diverged { .. }) => {
                    row.status = ScanStatus::Diverged;
                    return Ok(row);
                }
                Err(e) => return Err(e),
            }
        }
    };
    row.n0_empirical = result.n0_empirical;
    row.status = result.status;
    row.margin = result.margin_at_n0;
    Ok(row)
}

pub const SWEEP_COLUMNS: &str = "method,d,lambda_min,lambda_max,alpha,beta,eta,K,epsilon,seed,rho_P,\
n0_lower,n0_upper,n0_empirical,censored,margin,eligible";

/// Sweep table with provenance header. The `censored` column carries the
/// scan status (`certified`, `censored`, `not_reached`, `diverged`, or
/// `invalid_params`).
pub fn sweep_csv(config: &SweepConfig, rows: &[SweepRow]) -> String {
    let mut out = provenance_header(config, config.seed);
    out.push_str(SWEEP_COLUMNS);
    out.push('\n');
    for r in rows {
        let status = if r.error.is_some() { "invalid_params" } else { r.status.as_str() };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method,
            r.d,
            fmt_f64(r.lambda_min),
            fmt_f64(r.lambda_max),
            fmt_f64(r.alpha),
            fmt_f64(r.beta),
            fmt_f64(r.eta),
            fmt_f64(r.k),
            fmt_f64(r.epsilon),
            r.seed,
            fmt_f64(r.rho_p),
            fmt_opt(r.n0_lower),
            fmt_opt(r.n0_upper),
            r.n0_empirical.map(|n| n.to_string()).unwrap_or_default(),
            status,
            fmt_f64(r.margin),
            r.eligible
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::exact_moment_recursion;
    use crate::problem::make_symmetric_problem;

    fn scalar() -> QuadraticProblem {
        make_symmetric_problem(&[1.0], 0, None).unwrap()
    }

    #[test]
    fn geometric_decay_reaches_at_one() {
        let p = scalar();
        let params = MethodParams::sgd(0.5).unwrap();
        let q = DMatrix::zeros(1, 1);
        let start = InitialCondition::new(DVector::from_element(1, 1.0), false);
        let series = exact_moment_recursion(&p, &params, &q, &start, 30).unwrap();
        let r = empirical_sample_complexity(&series, 0.25, &p, &params, Some(&q)).unwrap();
        assert_eq!(r.n0_empirical, Some(1));
        assert_eq!(r.status, ScanStatus::Certified);
        assert_eq!(r.margin_at_n0, 0.0);
    }

    #[test]
    fn stationary_above_epsilon_never_reached() {
        let p = scalar();
        let params = MethodParams::sgd(0.5).unwrap();
        let q = DMatrix::from_element(1, 1, 1.0);
        let start = InitialCondition::new(DVector::from_element(1, 0.0), true);
        let r = oracle_sample_complexity(&p, &params, &q, &start, 0.3, 1000).unwrap();
        // limit is 1/3 > 0.3, even though mse(1) = 0.25 dips below
        assert_eq!(r.n0_empirical, None);
        assert_eq!(r.status, ScanStatus::NotReached);
    }

    #[test]
    fn already_inside_ball() {
        let p = scalar();
        let params = MethodParams::sgd(0.5).unwrap();
        let q = DMatrix::from_element(1, 1, 0.1);
        let start = InitialCondition::new(DVector::from_element(1, 0.5), true);
        let r = oracle_sample_complexity(&p, &params, &q, &start, 0.3, 200).unwrap();
        assert_eq!(r.n0_empirical, Some(0));
        assert_eq!(r.status, ScanStatus::Certified);
    }

    #[test]
    fn missing_covariance_is_censored() {
        let p = scalar();
        let params = MethodParams::sgd(0.5).unwrap();
        let q = DMatrix::zeros(1, 1);
        let start = InitialCondition::new(DVector::from_element(1, 1.0), false);
        let series = exact_moment_recursion(&p, &params, &q, &start, 30).unwrap();
        let r = empirical_sample_complexity(&series, 0.25, &p, &params, None).unwrap();
        assert_eq!(r.status, ScanStatus::Censored);
    }

    #[test]
    fn scan_detects_divergence() {
        let s = scan_series([(0, 1.0), (1, 1e50), (2, 1e120), (3, 0.0)], 0.5);
        assert!(s.diverged);
        assert_eq!(s.horizon, 2);
    }

    #[test]
    fn streaming_matches_stored_scan() {
        let p = make_symmetric_problem(&[1.0, 5.0], 2, None).unwrap();
        let params = MethodParams::shb(0.05, 0.6).unwrap();
        let q = DMatrix::identity(2, 2) * 0.01;
        let start = InitialCondition::new(DVector::from_vec(vec![1.0, -1.0]), false);
        let series = exact_moment_recursion(&p, &params, &q, &start, 500).unwrap();
        let a = empirical_sample_complexity(&series, 0.01, &p, &params, Some(&q)).unwrap();
        let b = oracle_sample_complexity(&p, &params, &q, &start, 0.01, 500).unwrap();
        assert_eq!(a, b);
        assert!(a.reached());
    }

    #[test]
    fn sweep_config_parsing() {
        let text = r#"{
            "problem": {"eigenvalues": [1.0]},
            "methods": ["sgd", "shb"],
            "epsilon": [0.01],
            "K": [1.0],
            "grid": "table1"
        }"#;
        let cfg = SweepConfig::from_json(text).unwrap();
        assert_eq!(cfg.horizon_multiplier, 4.0);
        assert_eq!(cfg.grid, GridSpec::Named(NamedGrid::Table1));

        let text = r#"{
            "problem": {"eigenvalues": [1.0]},
            "methods": ["generic"],
            "epsilon": [0.01],
            "K": [1.0],
            "grid": {"alpha": [0.1, 0.2], "eta": [0.0, 0.5]}
        }"#;
        let cfg = SweepConfig::from_json(text).unwrap();
        assert!(matches!(cfg.grid, GridSpec::Explicit { ref beta, .. } if beta == &vec![0.0]));

        let bad = r#"{"problem": {"eigenvalues": [1.0]}, "methods": [], "epsilon": [0.1], "K": [1], "grid": "table1"}"#;
        assert!(SweepConfig::from_json(bad).is_err());
        let bad = r#"{"problem": {"eigenvalues": [1.0]}, "methods": ["sgd"], "epsilon": [0.1], "K": [1], "grid": "table1", "extra": 1}"#;
        assert!(matches!(SweepConfig::from_json(bad), Err(Error::Json(_))));
    }

    #[test]
    fn sweep_rows_and_csv() {
        let cfg = SweepConfig {
            problem: ProblemSpec::from_json(r#"{"eigenvalues": [1.0]}"#).unwrap(),
            methods: vec![MethodTag::Sgd, MethodTag::Shb],
            epsilon: vec![1.0 / 64.0],
            k: vec![1.0],
            grid: GridSpec::Named(NamedGrid::Table1),
            trials: 1,
            seed: 3,
            horizon_multiplier: 4.0,
            source: SweepSource::Oracle,
            x0: None,
            legacy_init: true,
            max_horizon: MAX_HORIZON,
        };
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            let n0 = r.n0_empirical.expect("reached") as f64;
            assert!(r.n0_lower.unwrap() <= n0 && n0 <= r.n0_upper.unwrap(), "{r:?}");
        }
        let csv = sweep_csv(&cfg, &rows);
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# {"));
        assert_eq!(lines.next().unwrap(), SWEEP_COLUMNS);
        assert_eq!(lines.count(), 2);
        assert_eq!(csv, sweep_csv(&cfg, &run_sweep(&cfg).unwrap()));
    }
}
