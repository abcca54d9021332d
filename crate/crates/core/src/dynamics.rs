//! Iterate dynamics: the momentum update, a seeded Monte Carlo estimator of
//! `E‖xₙ − x*‖²`, and exact second-moment recursions for Gaussian noise.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{NoiseModel, QuadraticProblem};
use crate::rng::stream_rng;
use crate::spectral::{block_eigenvalues, companion_block, stacked_matrix, MethodParams};

/// Squared error norm above which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e100;

const TRIAL_CHUNK: usize = 256;
const CHUNK_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub x_curr: DVector<f64>,
    pub x_prev: DVector<f64>,
    pub step_index: usize,
}

impl TrajectoryState {
    /// Starts at rest: `x₋₁ = x₀`.
    pub fn at_rest(x0: DVector<f64>) -> Self {
        TrajectoryState {
            x_prev: x0.clone(),
            x_curr: x0,
            step_index: 0,
        }
    }
}

/// `xₙ₊₁ = xₙ + α(b − Axₙ + M) + η(I − αβA)(xₙ − xₙ₋₁)`.
pub fn step(
    state: &TrajectoryState,
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise: &DVector<f64>,
) -> TrajectoryState {
    let velocity = &state.x_curr - &state.x_prev;
    let damped = &velocity - &problem.a * &velocity * (params.alpha * params.beta);
    let drift = &problem.b - &problem.a * &state.x_curr + noise;
    TrajectoryState {
        x_curr: &state.x_curr + drift * params.alpha + damped * params.eta,
        x_prev: state.x_curr.clone(),
        step_index: state.step_index + 1,
    }
}

/// Look-ahead form: the gradient is taken at `xₙ + ηβ(xₙ − xₙ₋₁)`.
pub fn step_lookahead(
    state: &TrajectoryState,
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise: &DVector<f64>,
) -> TrajectoryState {
    let velocity = &state.x_curr - &state.x_prev;
    let probe = &state.x_curr + &velocity * (params.eta * params.beta);
    let drift = &problem.b - &problem.a * probe + noise;
    TrajectoryState {
        x_curr: &state.x_curr + drift * params.alpha + velocity * params.eta,
        x_prev: state.x_curr.clone(),
        step_index: state.step_index + 1,
    }
}

/// Initial error `x̃₀` and the convention for `x̃₋₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub x_tilde0: DVector<f64>,
    /// `x̃₋₁ = 0` instead of `x̃₋₁ = x̃₀`.
    pub legacy: bool,
}

impl InitialCondition {
    pub fn new(x_tilde0: DVector<f64>, legacy: bool) -> Self {
        InitialCondition { x_tilde0, legacy }
    }

    pub fn dim(&self) -> usize {
        self.x_tilde0.len()
    }

    /// `Λ = ‖x̃₀‖²`.
    pub fn lambda(&self) -> f64 {
        self.x_tilde0.norm_squared()
    }

    pub fn x_tilde_prev(&self) -> DVector<f64> {
        if self.legacy {
            DVector::zeros(self.dim())
        } else {
            self.x_tilde0.clone()
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let d = self.dim();
        let mut v = DVector::zeros(2 * d);
        v.rows_mut(0, d).copy_from(&self.x_tilde0);
        v.rows_mut(d, d).copy_from(&self.x_tilde_prev());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesSource {
    MonteCarlo,
    ExactOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsePoint {
    pub n: usize,
    /// `E‖x̃ₙ‖²`.
    pub mse: f64,
    pub stderr: f64,
    /// `E‖X̃ₙ‖² = E‖x̃ₙ‖² + E‖x̃ₙ₋₁‖²`.
    pub stacked_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseSeries {
    pub source: SeriesSource,
    pub points: Vec<MsePoint>,
    /// `‖PⁿX̃₀‖²`.
    pub bias: Option<Vec<f64>>,
    /// `α²K·Σ_{j<n}‖Pʲe₁‖²` (univariate only).
    pub variance_lb: Option<Vec<f64>>,
}

impl MseSeries {
    pub fn horizon(&self) -> usize {
        self.points.last().map_or(0, |p| p.n)
    }

    pub fn mse(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.mse)
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = *other;
            return;
        }
        let total = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count / total;
        self.m2 += other.m2 + delta * delta * self.count * other.count / total;
        self.count = total;
    }

    fn stderr(&self) -> f64 {
        if self.count <= 1.0 {
            0.0
        } else {
            (self.m2.max(0.0) / self.count).sqrt() / self.count.sqrt()
        }
    }
}

/// Error-coordinate propagator over flat row-major storage.
struct Propagator {
    d: usize,
    a: Vec<f64>,
    alpha: f64,
    beta: f64,
    eta: f64,
}

impl Propagator {
    fn new(problem: &QuadraticProblem, params: &MethodParams) -> Self {
        let d = problem.dim();
        Propagator {
            d,
            a: (0..d * d).map(|k| problem.a[(k / d, k % d)]).collect(),
            alpha: params.alpha,
            beta: params.beta,
            eta: params.eta,
        }
    }

    fn matvec(&self, v: &[f64], i: usize) -> f64 {
        let row = &self.a[i * self.d..(i + 1) * self.d];
        row.iter().zip(v).map(|(a, x)| a * x).sum()
    }

    /// Advances `(cur, prev)` in place; `scratch` has length `2d`.
    fn advance(&self, cur: &mut [f64], prev: &mut [f64], noise: &[f64], scratch: &mut [f64]) {
        let d = self.d;
        let (next, vel) = scratch.split_at_mut(d);
        for i in 0..d {
            vel[i] = cur[i] - prev[i];
        }
        for i in 0..d {
            let ax = self.matvec(cur, i);
            let av = self.matvec(vel, i);
            next[i] = cur[i] - self.alpha * ax
                + self.alpha * noise[i]
                + self.eta * (vel[i] - self.alpha * self.beta * av);
        }
        prev.copy_from_slice(cur);
        cur.copy_from_slice(next);
    }
}

/// Monte Carlo estimate of `E‖x̃ₙ‖²` for `n = 0..=n_steps`. Trial `t` draws
/// from the stream `(seed, t)`; chunks are merged in index order so the
/// result does not depend on the number of worker threads.
pub fn simulate_mse(
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise: &NoiseModel,
    start: &InitialCondition,
    n_steps: usize,
    trials: usize,
    seed: u64,
) -> Result<MseSeries> {
    if trials == 0 {
        return Err(Error::validation("trials", "must be >= 1"));
    }
    if n_steps == 0 {
        return Err(Error::validation("n", "must be >= 1"));
    }
    let d = problem.dim();
    if start.dim() != d || noise.dim != d {
        return Err(Error::validation("x0", format!("dimension must be {d}")));
    }
    let prop = Propagator::new(problem, params);
    let chunks = trials.div_ceil(TRIAL_CHUNK);

    let run_chunk = |chunk: usize| -> std::result::Result<Vec<Moments>, usize> {
        let mut acc = vec![Moments::default(); n_steps + 1];
        let lo = chunk * TRIAL_CHUNK;
        let hi = (lo + TRIAL_CHUNK).min(trials);
        let mut cur = vec![0.0; d];
        let mut prev = vec![0.0; d];
        let mut draw = vec![0.0; d];
        let mut scratch = vec![0.0; 2 * d];
        for trial in lo..hi {
            let mut rng = stream_rng(seed, trial as u64);
            cur.copy_from_slice(start.x_tilde0.as_slice());
            prev.copy_from_slice(start.x_tilde_prev().as_slice());
            acc[0].push(start.lambda());
            for (n, slot) in acc.iter_mut().enumerate().skip(1) {
                noise.sample_into(&cur, &mut rng, &mut draw);
                prop.advance(&mut cur, &mut prev, &draw, &mut scratch);
                let e: f64 = cur.iter().map(|x| x * x).sum();
                if !(e <= DIVERGENCE_THRESHOLD) {
                    return Err(n);
                }
                slot.push(e);
            }
        }
        Ok(acc)
    };

    let mut total = vec![Moments::default(); n_steps + 1];
    let mut diverged_at: Option<usize> = None;
    for batch_start in (0..chunks).step_by(CHUNK_BATCH) {
        let batch_end = (batch_start + CHUNK_BATCH).min(chunks);
        let results: Vec<_> = (batch_start..batch_end).into_par_iter().map(run_chunk).collect();
        for r in results {
            match r {
                Ok(acc) => {
                    for (t, a) in total.iter_mut().zip(&acc) {
                        t.merge(a);
                    }
                }
                Err(n) => diverged_at = Some(diverged_at.map_or(n, |m| m.min(n))),
            }
        }
        if diverged_at.is_some() {
            break;
        }
    }
    if let Some(step) = diverged_at {
        return Err(Error::Diverged { step });
    }

    let prev_norm = start.x_tilde_prev().norm_squared();
    let points = total
        .iter()
        .enumerate()
        .map(|(n, m)| MsePoint {
            n,
            mse: m.mean,
            stderr: m.stderr(),
            stacked_mse: m.mean + if n == 0 { prev_norm } else { total[n - 1].mean },
        })
        .collect();
    let (bias, variance_lb) = decomposition_series(problem, params, noise.k_lower(), start, n_steps);
    Ok(MseSeries {
        source: SeriesSource::MonteCarlo,
        points,
        bias: Some(bias),
        variance_lb,
    })
}

/// `‖PⁿX̃₀‖²` for all `n`, and for `d = 1` the variance floor series.
fn decomposition_series(
    problem: &QuadraticProblem,
    params: &MethodParams,
    k: f64,
    start: &InitialCondition,
    n_steps: usize,
) -> (Vec<f64>, Option<Vec<f64>>) {
    let p = stacked_matrix(&problem.a, params);
    let mut mean = start.stacked();
    let mut bias = Vec::with_capacity(n_steps + 1);
    for _ in 0..=n_steps {
        bias.push(mean.norm_squared());
        mean = &p * mean;
    }
    let variance = (problem.dim() == 1).then(|| {
        let block = companion_block(problem.eigenvalues[0], params);
        let scale = params.alpha * params.alpha * k;
        let mut out = Vec::with_capacity(n_steps + 1);
        let mut v = Vector2::new(1.0, 0.0);
        let mut sum = 0.0;
        out.push(0.0);
        for _ in 0..n_steps {
            sum += v.norm_squared();
            out.push(scale * sum);
            v = block * v;
        }
        out
    });
    (bias, variance)
}

/// Covariance for the exact oracle; state-dependent noise has none.
pub fn oracle_covariance(noise: &NoiseModel) -> Result<DMatrix<f64>> {
    noise.covariance().ok_or_else(|| {
        Error::UnsupportedOracle(
            "state-dependent noise has no closed moment recursion; use Monte Carlo".into(),
        )
    })
}

fn check_covariance(q: &DMatrix<f64>, d: usize) -> Result<()> {
    if q.nrows() != d || q.ncols() != d {
        return Err(Error::validation("noise_cov", format!("must be {d}x{d}")));
    }
    let scale = q.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if (q - q.transpose()).iter().any(|x| x.abs() > 1e-12 * scale) {
        return Err(Error::validation("noise_cov", "must be symmetric"));
    }
    if (0..d).any(|i| q[(i, i)] < 0.0) {
        return Err(Error::validation("noise_cov", "diagonal must be nonnegative"));
    }
    Ok(())
}

/// Dense `E[X̃ₙX̃ₙᵀ]` and `E[X̃ₙ]` in the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub second_moment: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub step_index: usize,
}

impl MomentState {
    pub fn new(start: &InitialCondition) -> Self {
        let x = start.stacked();
        MomentState {
            second_moment: &x * x.transpose(),
            mean: x,
            step_index: 0,
        }
    }

    /// One step of `M ← PMPᵀ + α²·embed(Q)`; `injected` is the embedded term.
    pub fn advance(&mut self, p: &DMatrix<f64>, injected: &DMatrix<f64>) {
        self.second_moment = p * &self.second_moment * p.transpose() + injected;
        self.mean = p * &self.mean;
        self.step_index += 1;
    }

    pub fn mse(&self) -> f64 {
        let d = self.mean.len() / 2;
        (0..d).map(|i| self.second_moment[(i, i)]).sum()
    }

    pub fn stacked_mse(&self) -> f64 {
        self.second_moment.trace()
    }
}

/// Reference oracle iterating the full `2d×2d` second moment.
pub fn dense_moment_recursion(
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise_cov: &DMatrix<f64>,
    start: &InitialCondition,
    n_steps: usize,
) -> Result<MseSeries> {
    let d = problem.dim();
    check_covariance(noise_cov, d)?;
    let p = stacked_matrix(&problem.a, params);
    let mut injected = DMatrix::zeros(2 * d, 2 * d);
    injected
        .view_mut((0, 0), (d, d))
        .copy_from(&(noise_cov * (params.alpha * params.alpha)));
    let mut state = MomentState::new(start);
    let mut points = Vec::with_capacity(n_steps + 1);
    let mut bias = Vec::with_capacity(n_steps + 1);
    loop {
        points.push(MsePoint {
            n: state.step_index,
            mse: state.mse(),
            stderr: 0.0,
            stacked_mse: state.stacked_mse(),
        });
        bias.push(state.mean.norm_squared());
        if state.step_index == n_steps {
            break;
        }
        state.advance(&p, &injected);
    }
    Ok(MseSeries {
        source: SeriesSource::ExactOracle,
        points,
        bias: Some(bias),
        variance_lb: None,
    })
}

/// Exact moments at one step, from the modal oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePoint {
    pub n: usize,
    pub mse: f64,
    pub stacked_mse: f64,
    /// `‖E x̃ₙ‖²`.
    pub bias: f64,
    /// `‖E X̃ₙ‖²`.
    pub stacked_bias: f64,
}

/// Streaming exact oracle in the eigen-coordinates of `A`.
///
/// With `ŷ = S⁻¹x̃` each coordinate pair evolves by its `2×2` block, and
/// `Cᵢⱼ = E[ŶᵢŶⱼᵀ]` obeys `Cᵢⱼ ← BᵢCᵢⱼBⱼᵀ + α²Q̂ᵢⱼe₁e₁ᵀ` with `Q̂ = S⁻¹QS⁻ᵀ`.
/// The error norm is read out through the Gram matrix `G = SᵀS`; when `G`
/// is the identity only the diagonal blocks are tracked.
#[derive(Debug, Clone)]
pub struct ModalOracle {
    d: usize,
    blocks: Vec<Matrix2<f64>>,
    gram: Option<DMatrix<f64>>,
    injected: Vec<f64>,
    cov: Vec<Matrix2<f64>>,
    mean: Vec<Vector2<f64>>,
    n: usize,
}

impl ModalOracle {
    pub fn new(
        problem: &QuadraticProblem,
        params: &MethodParams,
        noise_cov: &DMatrix<f64>,
        start: &InitialCondition,
    ) -> Result<Self> {
        let d = problem.dim();
        check_covariance(noise_cov, d)?;
        if start.dim() != d {
            return Err(Error::validation("x0", format!("dimension must be {d}")));
        }
        let blocks: Vec<_> = problem
            .eigenvalues
            .iter()
            .map(|&l| companion_block(l, params))
            .collect();
        let q_hat = &problem.s_inv * noise_cov * problem.s_inv.transpose();
        let gram = problem.s.transpose() * &problem.s;
        let decoupled = (&gram - DMatrix::<f64>::identity(d, d))
            .iter()
            .all(|x| x.abs() < 1e-12);
        let y0 = &problem.s_inv * &start.x_tilde0;
        let y_prev = &problem.s_inv * start.x_tilde_prev();
        let mean: Vec<Vector2<f64>> = (0..d).map(|i| Vector2::new(y0[i], y_prev[i])).collect();
        let a2 = params.alpha * params.alpha;
        let (cov, injected) = if decoupled {
            (
                mean.iter().map(|m| m * m.transpose()).collect(),
                (0..d).map(|i| a2 * q_hat[(i, i)]).collect(),
            )
        } else {
            let mut cov = Vec::with_capacity(d * d);
            let mut inj = Vec::with_capacity(d * d);
            for i in 0..d {
                for j in 0..d {
                    cov.push(mean[i] * mean[j].transpose());
                    inj.push(a2 * q_hat[(i, j)]);
                }
            }
            (cov, inj)
        };
        Ok(ModalOracle {
            d,
            blocks,
            gram: (!decoupled).then_some(gram),
            injected,
            cov,
            mean,
            n: 0,
        })
    }

    pub fn is_decoupled(&self) -> bool {
        self.gram.is_none()
    }

    pub fn current(&self) -> OraclePoint {
        let (mut mse, mut stacked, mut bias, mut stacked_bias) = (0.0, 0.0, 0.0, 0.0);
        match &self.gram {
            None => {
                for (c, m) in self.cov.iter().zip(&self.mean) {
                    mse += c[(0, 0)];
                    stacked += c[(0, 0)] + c[(1, 1)];
                    bias += m[0] * m[0];
                    stacked_bias += m.norm_squared();
                }
            }
            Some(g) => {
                for i in 0..self.d {
                    for j in 0..self.d {
                        let c = &self.cov[i * self.d + j];
                        let w = g[(i, j)];
                        mse += w * c[(0, 0)];
                        stacked += w * (c[(0, 0)] + c[(1, 1)]);
                        let (mi, mj) = (&self.mean[i], &self.mean[j]);
                        bias += w * mi[0] * mj[0];
                        stacked_bias += w * mi.dot(mj);
                    }
                }
            }
        }
        OraclePoint {
            n: self.n,
            mse,
            stacked_mse: stacked,
            bias,
            stacked_bias,
        }
    }

    pub fn advance(&mut self) {
        match self.gram {
            None => {
                for ((c, b), q) in self.cov.iter_mut().zip(&self.blocks).zip(&self.injected) {
                    *c = b * *c * b.transpose();
                    c[(0, 0)] += q;
                }
            }
            Some(_) => {
                let d = self.d;
                for i in 0..d {
                    for j in 0..d {
                        let k = i * d + j;
                        let c = &mut self.cov[k];
                        *c = self.blocks[i] * *c * self.blocks[j].transpose();
                        c[(0, 0)] += self.injected[k];
                    }
                }
            }
        }
        for (m, b) in self.mean.iter_mut().zip(&self.blocks) {
            *m = b * *m;
        }
        self.n += 1;
    }
}

impl Iterator for ModalOracle {
    type Item = OraclePoint;

    /// Yields step `n` and then advances; never ends.
    fn next(&mut self) -> Option<OraclePoint> {
        let point = self.current();
        self.advance();
        Some(point)
    }
}

/// Exact `E‖x̃ₙ‖²` for `n = 0..=n_steps` under Gaussian noise with covariance `noise_cov`.
pub fn exact_moment_recursion(
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise_cov: &DMatrix<f64>,
    start: &InitialCondition,
    n_steps: usize,
) -> Result<MseSeries> {
    let oracle = ModalOracle::new(problem, params, noise_cov, start)?;
    let mut points = Vec::with_capacity(n_steps + 1);
    let mut bias = Vec::with_capacity(n_steps + 1);
    for pt in oracle.take(n_steps + 1) {
        points.push(MsePoint {
            n: pt.n,
            mse: pt.mse,
            stderr: 0.0,
            stacked_mse: pt.stacked_mse,
        });
        bias.push(pt.stacked_bias);
    }
    let variance_lb = (problem.dim() == 1).then(|| {
        let k = noise_cov[(0, 0)];
        decomposition_series(problem, params, k, start, n_steps)
            .1
            .expect("univariate")
    });
    Ok(MseSeries {
        source: SeriesSource::ExactOracle,
        points,
        bias: Some(bias),
        variance_lb,
    })
}

/// `Σ_{j<n}‖Pʲe₁‖²` for the scalar block of `lambda`. Stops early once two
/// consecutive terms fall below `1e-20` of the running sum, which can only
/// lower the result.
pub fn e1_power_sum(lambda: f64, params: &MethodParams, n: usize) -> f64 {
    let block = companion_block(lambda, params);
    let mut v = Vector2::new(1.0, 0.0);
    let mut sum = 0.0;
    let mut small = 0;
    for _ in 0..n {
        let term = v.norm_squared();
        sum += term;
        if term < 1e-20 * sum {
            small += 1;
            if small >= 2 {
                break;
            }
        } else {
            small = 0;
        }
        v = block * v;
    }
    sum
}

/// Univariate split of `E‖X̃ₙ‖²` into `‖PⁿX̃₀‖²` and `α²K·Σ_{j<n}‖Pʲe₁‖²`.
pub fn bias_variance_decomposition(
    problem: &QuadraticProblem,
    params: &MethodParams,
    k: f64,
    start: &InitialCondition,
    n: usize,
) -> Result<(f64, f64)> {
    if problem.dim() != 1 {
        return Err(Error::UnsupportedConfiguration(
            "bias/variance decomposition with e1 is univariate".into(),
        ));
    }
    if n == 0 {
        return Err(Error::validation("n", "must be >= 1"));
    }
    let block = companion_block(problem.eigenvalues[0], params);
    let x = start.stacked();
    let mut v = Vector2::new(x[0], x[1]);
    for _ in 0..n {
        v = block * v;
    }
    let variance = params.alpha * params.alpha * k * e1_power_sum_exact(&block, n);
    Ok((v.norm_squared(), variance))
}

fn e1_power_sum_exact(block: &Matrix2<f64>, n: usize) -> f64 {
    let mut v = Vector2::new(1.0, 0.0);
    let mut sum = 0.0;
    for _ in 0..n {
        sum += v.norm_squared();
        v = block * v;
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryMoments {
    pub matrix: DMatrix<f64>,
    pub trace_mse: f64,
}

/// Fixed point of `Σ = PΣPᵀ + α²·embed(Q)`: a direct Kronecker solve when
/// `2d ≤ 16`, otherwise the doubling iteration `Σ ← Σ + AΣAᵀ`, `A ← A²`.
pub fn stationary_covariance(
    problem: &QuadraticProblem,
    params: &MethodParams,
    noise_cov: &DMatrix<f64>,
) -> Result<StationaryMoments> {
    let d = problem.dim();
    check_covariance(noise_cov, d)?;
    let rho = problem
        .eigenvalues
        .iter()
        .map(|&l| block_eigenvalues(l, params).rho())
        .fold(0.0, f64::max);
    if rho >= 1.0 {
        return Err(Error::NoStationaryDistribution { rho });
    }
    let n = 2 * d;
    let p = stacked_matrix(&problem.a, params);
    let mut rhs = DMatrix::zeros(n, n);
    rhs.view_mut((0, 0), (d, d))
        .copy_from(&(noise_cov * (params.alpha * params.alpha)));

    let sigma = if n <= 16 {
        let kron = p.kronecker(&p);
        let system = DMatrix::<f64>::identity(n * n, n * n) - kron;
        // column-major vec: vec(PΣPᵀ) = (P ⊗ P) vec(Σ)
        let b = DVector::from_column_slice(rhs.as_slice());
        let v = system
            .lu()
            .solve(&b)
            .ok_or(Error::NoStationaryDistribution { rho })?;
        let s = DMatrix::from_column_slice(n, n, v.as_slice());
        (&s + s.transpose()) * 0.5
    } else {
        let mut s = rhs.clone();
        let mut a = p;
        for _ in 0..200 {
            let increment = &a * &s * a.transpose();
            let change = increment.norm();
            s += increment;
            a = &a * &a;
            if change <= 1e-12 * s.norm() {
                break;
            }
        }
        s
    };
    let trace_mse = (0..d).map(|i| sigma[(i, i)]).sum();
    Ok(StationaryMoments {
        matrix: sigma,
        trace_mse,
    })
}
