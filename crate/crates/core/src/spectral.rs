//! Companion-matrix analysis of the stacked error recursion.
//!
//! Writing `X̃ₙ = [x̃ₙ; x̃ₙ₋₁]`, the momentum iterate becomes
//! `X̃ₙ = P·X̃ₙ₋₁ + α·Wₙ` with
//!
//! ```text
//!     P = [ (1+η)I − αA − ηαβA    −η(I − αβA) ]
//!         [        I                   0      ]
//! ```
//!
//! In the eigenbasis of `A` the matrix splits into `d` two-by-two blocks
//! `Bᵢ = [[tᵢ, −pᵢ], [1, 0]]` with `tᵢ = 1 − αλᵢ + η(1 − αβλᵢ)` and
//! `pᵢ = η(1 − αβλᵢ)`, whose eigenvalues are the roots of `μ² − tᵢμ + pᵢ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::problem::QuadraticProblem;

/// `|Δ|` below this is treated as a double root.
pub const REPEATED_ROOT_TOL: f64 = 1e-12;

/// Eigenvalues closer than this (relative to `max(1, |μ|)`) are clustered
/// into one Jordan block when building a Jordan basis. Perturbing a
/// defective double eigenvalue moves it by roughly `√ε_mach ≈ 1e-8`.
const EIGEN_CLUSTER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodTag {
    Sgd,
    Shb,
    Asg,
    Generic,
}

impl MethodTag {
    pub const TABLE: [MethodTag; 3] = [MethodTag::Sgd, MethodTag::Shb, MethodTag::Asg];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Sgd => "sgd",
            MethodTag::Shb => "shb",
            MethodTag::Asg => "asg",
            MethodTag::Generic => "generic",
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(MethodTag::Sgd),
            "shb" => Ok(MethodTag::Shb),
            "asg" => Ok(MethodTag::Asg),
            "generic" => Ok(MethodTag::Generic),
            other => Err(Error::validation("method", format!("unknown method '{other}'"))),
        }
    }
}

/// Step size `alpha`, look-ahead weight `beta` and momentum `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub method: MethodTag,
}

impl MethodParams {
    pub fn new(alpha: f64, beta: f64, eta: f64, method: MethodTag) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::validation("alpha", format!("must be finite and > 0, got {alpha}")));
        }
        for (field, v) in [("beta", beta), ("eta", eta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(MethodParams { alpha, beta, eta, method })
    }

    pub fn sgd(alpha: f64) -> Result<Self> {
        Self::new(alpha, 0.0, 0.0, MethodTag::Sgd)
    }

    pub fn shb(alpha: f64, eta: f64) -> Result<Self> {
        Self::new(alpha, 0.0, eta, MethodTag::Shb)
    }

    pub fn asg(alpha: f64, eta: f64) -> Result<Self> {
        Self::new(alpha, 1.0, eta, MethodTag::Asg)
    }

    /// `(tᵢ, pᵢ)`: trace and determinant of the block for eigenvalue `lambda`.
    pub fn block_coefficients(&self, lambda: f64) -> (f64, f64) {
        let damp = 1.0 - self.alpha * self.beta * lambda;
        let p = self.eta * damp;
        (1.0 - self.alpha * lambda + p, p)
    }

    /// Univariate equivalent momentum with `β = 0`: `η′ = η(1 − αλβ)`.
    pub fn reduced_eta(&self, lambda: f64) -> f64 {
        self.eta * (1.0 - self.alpha * lambda * self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Real,
    Complex,
    Repeated,
}

/// Eigen-data of one companion block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSpectrum {
    pub lambda: f64,
    pub mu_plus: Complex64,
    pub mu_minus: Complex64,
    pub delta: f64,
    pub branch: Branch,
}

impl BlockSpectrum {
    pub fn rho(&self) -> f64 {
        self.mu_plus.norm().max(self.mu_minus.norm())
    }
}

/// Roots of `μ² − tμ + p = 0` for the block of eigenvalue `lambda`. `μ₊`
/// carries the `+√Δ` sign (the larger real root, or positive imaginary part).
pub fn block_eigenvalues(lambda: f64, params: &MethodParams) -> BlockSpectrum {
    let (t, p) = params.block_coefficients(lambda);
    let delta = t * t - 4.0 * p;
    let (mu_plus, mu_minus, branch) = if delta.abs() < REPEATED_ROOT_TOL {
        let mu = Complex64::new(t / 2.0, 0.0);
        (mu, mu, Branch::Repeated)
    } else if delta > 0.0 {
        let sq = delta.sqrt();
        // avoid cancellation in the smaller root
        let (hi, lo) = if t >= 0.0 {
            let hi = (t + sq) / 2.0;
            (hi, if hi != 0.0 { p / hi } else { 0.0 })
        } else {
            let lo = (t - sq) / 2.0;
            (if lo != 0.0 { p / lo } else { 0.0 }, lo)
        };
        (Complex64::new(hi, 0.0), Complex64::new(lo, 0.0), Branch::Real)
    } else {
        let im = (-delta).sqrt() / 2.0;
        (
            Complex64::new(t / 2.0, im),
            Complex64::new(t / 2.0, -im),
            Branch::Complex,
        )
    };
    BlockSpectrum {
        lambda,
        mu_plus,
        mu_minus,
        delta,
        branch,
    }
}

pub fn companion_block(lambda: f64, params: &MethodParams) -> Matrix2<f64> {
    let (t, p) = params.block_coefficients(lambda);
    Matrix2::new(t, -p, 1.0, 0.0)
}

/// Stacked `2d×2d` matrix in the original coordinates of `A`.
pub fn stacked_matrix(a: &DMatrix<f64>, params: &MethodParams) -> DMatrix<f64> {
    let d = a.nrows();
    let ident = DMatrix::<f64>::identity(d, d);
    let damp = &ident - a * (params.alpha * params.beta);
    let top_left = &ident - a * params.alpha + &damp * params.eta;
    let top_right = &damp * (-params.eta);
    let mut p = DMatrix::zeros(2 * d, 2 * d);
    p.view_mut((0, 0), (d, d)).copy_from(&top_left);
    p.view_mut((0, d), (d, d)).copy_from(&top_right);
    p.view_mut((d, 0), (d, d)).copy_from(&ident);
    p
}

#[derive(Debug, Clone)]
pub struct CompanionSystem {
    pub p: DMatrix<f64>,
    pub blocks: Vec<Matrix2<f64>>,
    pub spectra: Vec<BlockSpectrum>,
    pub rho_p: f64,
    pub params: MethodParams,
}

/// Builds `P` and its block spectra. For `d > 1` only `β ∈ {0, 1}` is
/// analysed; general `β` is reduced to `β = 0` in the scalar case.
pub fn companion_matrix(problem: &QuadraticProblem, params: &MethodParams) -> Result<CompanionSystem> {
    if problem.dim() > 1 && params.beta != 0.0 && params.beta != 1.0 {
        return Err(Error::UnsupportedConfiguration(format!(
            "beta = {} with d = {}: multivariate analysis covers beta in {{0, 1}}; \
             reduce scalar problems with eta' = eta(1 - alpha*lambda*beta)",
            params.beta,
            problem.dim()
        )));
    }
    let spectra: Vec<BlockSpectrum> = problem
        .eigenvalues
        .iter()
        .map(|&l| block_eigenvalues(l, params))
        .collect();
    let blocks = problem
        .eigenvalues
        .iter()
        .map(|&l| companion_block(l, params))
        .collect();
    let rho_p = spectra.iter().map(BlockSpectrum::rho).fold(0.0, f64::max);
    Ok(CompanionSystem {
        p: stacked_matrix(&problem.a, params),
        blocks,
        spectra,
        rho_p,
        params: *params,
    })
}

/// `ρ(P)` from the block formulas.
pub fn spectral_radius(system: &CompanionSystem) -> f64 {
    system.rho_p
}

/// `ρ(P)` from a dense eigen-solve of the full stacked matrix.
pub fn dense_spectral_radius(system: &CompanionSystem) -> f64 {
    linalg::spectral_radius(&system.p)
}

/// Closed interval `[lo, hi]`; empty when `lo > hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl EtaInterval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, eta: f64) -> bool {
        self.lo <= eta && eta <= self.hi
    }
}

/// Momentum values for which every block discriminant is `≤ 0`, so that
/// `|μ|` no longer depends on the eigenvalue.
pub fn eta_stability_interval(problem: &QuadraticProblem, alpha: f64, beta: f64) -> Result<EtaInterval> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::validation("alpha", format!("must be finite and >= 0, got {alpha}")));
    }
    let mut interval = EtaInterval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    for &lambda in &problem.eigenvalues {
        let s = (alpha * lambda).sqrt();
        let (lo, hi) = if beta == 0.0 {
            ((1.0 - s).powi(2), (1.0 + s).powi(2))
        } else if beta == 1.0 {
            if alpha * problem.lambda_max() > 1.0 {
                return Err(Error::Precondition(format!(
                    "beta = 1 requires alpha <= 1/lambda_max = {}, got {alpha}",
                    1.0 / problem.lambda_max()
                )));
            }
            // (1 ∓ s)²/(1 − s²) simplified to avoid 0/0 at s = 1
            let hi = if s < 1.0 { (1.0 + s) / (1.0 - s) } else { f64::INFINITY };
            ((1.0 - s) / (1.0 + s), hi)
        } else {
            return Err(Error::UnsupportedConfiguration(format!(
                "stability interval is defined for beta in {{0, 1}}, got {beta}"
            )));
        };
        interval.lo = interval.lo.max(lo);
        interval.hi = interval.hi.min(hi);
    }
    Ok(interval)
}

/// Jordan basis `S` with `M = S·J·S⁻¹`, together with the largest block size.
#[derive(Debug, Clone)]
pub struct JordanBasis {
    pub s: DMatrix<Complex64>,
    pub eigenvalues: Vec<Complex64>,
    pub max_block: usize,
}

/// Numerical Jordan basis for matrices whose eigenvalue clusters are either
/// semisimple or a single Jordan chain. Mixed structures are rejected.
pub fn jordan_basis(m: &DMatrix<f64>) -> Result<JordanBasis> {
    let n = m.nrows();
    if n == 0 || n != m.ncols() {
        return Err(Error::validation("matrix", "must be square and non-empty"));
    }
    let mut eigs = linalg::eigenvalues(m);
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));

    let mut clusters: Vec<Vec<Complex64>> = Vec::new();
    for z in eigs {
        match clusters
            .iter_mut()
            .find(|c| (c[0] - z).norm() <= EIGEN_CLUSTER_TOL * c[0].norm().max(1.0))
        {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }

    let mc = linalg::to_complex(m);
    let ident = DMatrix::<Complex64>::identity(n, n);
    let scale = linalg::norm2(m).max(1.0);
    let mut columns: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
    let mut eigenvalues = Vec::with_capacity(n);
    let mut max_block = 1;

    for cluster in clusters {
        let k = cluster.len();
        let mu = cluster.iter().sum::<Complex64>() / k as f64;
        let shifted = &mc - &ident * mu;
        if k == 1 {
            columns.push(linalg::null_vector(&shifted));
            eigenvalues.push(mu);
            continue;
        }
        let sv = linalg::complex_singular_values(&shifted);
        let geometric = sv.iter().filter(|s| **s <= 1e-6 * scale).count();
        if geometric >= k {
            let basis = linalg::null_basis(&shifted, k);
            for j in 0..k {
                columns.push(basis.column(j).into_owned());
                eigenvalues.push(mu);
            }
        } else if geometric == 1 {
            // Single chain: pick v in ker(N^k) maximising ‖N^(k−1) v‖, then v_{j} = N v_{j+1}.
            let mut n_pow = ident.clone();
            for _ in 0..k - 1 {
                n_pow = &n_pow * &shifted;
            }
            let n_full = &n_pow * &shifted;
            let ker = linalg::null_basis(&n_full, k);
            let image = &n_pow * &ker;
            let svd = image.svd(false, true);
            let v_t = svd.v_t.expect("requested V^T");
            let (top, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty");
            let w = nalgebra::DVector::from_fn(k, |i, _| v_t[(top, i)].conj());
            let mut chain = vec![&ker * w];
            for _ in 1..k {
                let next = &shifted * chain.last().expect("non-empty chain");
                chain.push(next);
            }
            chain.reverse();
            for v in chain {
                columns.push(v);
                eigenvalues.push(mu);
            }
            max_block = max_block.max(k);
        } else {
            return Err(Error::UnsupportedConfiguration(format!(
                "eigenvalue {mu} has algebraic multiplicity {k} and geometric multiplicity {geometric}"
            )));
        }
    }
    Ok(JordanBasis {
        s: DMatrix::from_columns(&columns),
        eigenvalues,
        max_block,
    })
}

/// `C_δ = √n / (δ^(r−1)·σ_min(S)·σ_min(S⁻¹))` from a Jordan basis of `m`,
/// so that `‖mⁿ‖ ≤ C_δ (ρ(m) + δ)ⁿ`. For `δ ≥ 1` the scaling factor is
/// `δ^(r−1)` instead. With distinct eigenvalues (`r = 1`) the constant does
/// not depend on `δ`, and `δ = 0` is accepted.
pub fn norm_growth_constant(m: &DMatrix<f64>, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::Domain(format!("delta must be finite and >= 0, got {delta}")));
    }
    let basis = jordan_basis(m)?;
    let r = basis.max_block;
    if r > 1 && delta == 0.0 {
        return Err(Error::DegenerateSpectrum(format!(
            "largest Jordan block has size {r}; a positive delta is required"
        )));
    }
    let sv = linalg::complex_singular_values(&basis.s);
    let (hi, lo) = (sv[0], *sv.last().expect("non-empty"));
    if lo <= 0.0 {
        return Err(Error::DegenerateSpectrum("Jordan basis is singular".into()));
    }
    // σ_min(S⁻¹) = 1/σ_max(S)
    let kappa_s = hi / lo;
    let scaling = if r == 1 {
        1.0
    } else {
        delta.max(delta.recip()).powi(r as i32 - 1)
    };
    Ok((m.nrows() as f64).sqrt() * kappa_s * scaling)
}

/// Residual of `1/(σ_d(M)σ_d(M⁻¹)) = σ₁(M)σ₁(M⁻¹)`, relative to the right side.
pub fn singular_value_identity_residual(m: &DMatrix<f64>) -> Result<f64> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateSpectrum("matrix is singular".into()))?;
    let s = linalg::singular_values(m);
    let si = linalg::singular_values(&inv);
    let lhs = 1.0 / (s.last().unwrap() * si.last().unwrap());
    let rhs = s[0] * si[0];
    Ok((lhs - rhs).abs() / rhs)
}

/// Eigenvector matrix of `P` assembled from the block diagonalisers:
/// the eigenvector for `μ` in block `i` is `[μ·sᵢ; sᵢ]`, with `sᵢ` the
/// `i`-th column of the diagonaliser of `A`.
pub fn modal_basis(problem: &QuadraticProblem, system: &CompanionSystem) -> Result<DMatrix<Complex64>> {
    let d = problem.dim();
    let mut t = DMatrix::<Complex64>::zeros(2 * d, 2 * d);
    for (i, spec) in system.spectra.iter().enumerate() {
        if spec.branch == Branch::Repeated {
            return Err(Error::DegenerateSpectrum(format!(
                "block {i} has a repeated root; P is not diagonalisable"
            )));
        }
        for (col, mu) in [(2 * i, spec.mu_plus), (2 * i + 1, spec.mu_minus)] {
            for r in 0..d {
                let s = Complex64::new(problem.s[(r, i)], 0.0);
                t[(r, col)] = mu * s;
                t[(d + r, col)] = s;
            }
        }
    }
    Ok(t)
}

/// `σ_max(T)·σ_max(T⁻¹)` for the modal basis `T`: the constant that
/// actually achieves `‖Pⁿ‖ ≤ Ĉ·ρ(P)ⁿ`.
pub fn modal_condition_number(problem: &QuadraticProblem, system: &CompanionSystem) -> Result<f64> {
    let t = modal_basis(problem, system)?;
    let sv = linalg::complex_singular_values(&t);
    Ok(sv[0] / sv.last().copied().unwrap_or(0.0))
}

/// `5C/√(αλ_min)`: the certified bound on the power-norm constant of `P`
/// at the table momentum (identical for `β = 0` and `β = 1`).
pub fn c_hat_bound(alpha: f64, lambda_min: f64, c: f64) -> Result<f64> {
    let al = alpha * lambda_min;
    if !(al > 0.0) {
        return Err(Error::Domain(format!("alpha*lambda_min must be > 0, got {al}")));
    }
    if al > 1.0 {
        return Err(Error::Precondition(format!("alpha*lambda_min must be <= 1, got {al}")));
    }
    Ok(5.0 * c / al.sqrt())
}

/// `(15/16)·αλ_min`, a floor on `|Δᵢ|` at the table momentum.
pub fn discriminant_floor(alpha: f64, lambda_min: f64) -> f64 {
    15.0 / 16.0 * alpha * lambda_min
}

/// Table momentum for `β = 0`: `(1 − √(αλ_min)/2)²`.
pub fn table_eta(alpha_lambda: f64) -> f64 {
    (1.0 - alpha_lambda.sqrt() / 2.0).powi(2)
}

/// Momentum at which the `β = 0` block has a double root: `(1 − √(αλ))²`.
pub fn critical_eta(alpha_lambda: f64) -> f64 {
    (1.0 - alpha_lambda.sqrt()).powi(2)
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockRecord {
    pub lambda: f64,
    pub mu_plus: [f64; 2],
    pub mu_minus: [f64; 2],
    pub delta: f64,
    pub branch: Branch,
}

/// JSON payload of the `spectral` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub params: MethodParams,
    pub eigen: Vec<BlockRecord>,
    pub rho_p: f64,
    pub rho_p_dense: f64,
    /// Constant used by the parameter table (1 for symmetric `A`).
    pub c: f64,
    /// `√d/(σ_min(S)σ_min(S⁻¹))`, the generic power-norm constant.
    pub c_diagonalizer: f64,
    pub c_hat_bound: Option<f64>,
    pub c_hat_exact: Option<f64>,
    pub eta_interval: Option<EtaInterval>,
}

pub fn spectral_report(problem: &QuadraticProblem, params: &MethodParams) -> Result<SpectralReport> {
    let system = companion_matrix(problem, params)?;
    let c = problem.table_constant();
    let eta_interval = if params.beta == 0.0 || params.beta == 1.0 {
        eta_stability_interval(problem, params.alpha, params.beta).ok()
    } else {
        None
    };
    Ok(SpectralReport {
        params: *params,
        eigen: system
            .spectra
            .iter()
            .map(|s| BlockRecord {
                lambda: s.lambda,
                mu_plus: [s.mu_plus.re, s.mu_plus.im],
                mu_minus: [s.mu_minus.re, s.mu_minus.im],
                delta: s.delta,
                branch: s.branch,
            })
            .collect(),
        rho_p: system.rho_p,
        rho_p_dense: dense_spectral_radius(&system),
        c,
        c_diagonalizer: problem.diagonalizer_constant(),
        c_hat_bound: c_hat_bound(params.alpha, problem.lambda_min(), c).ok(),
        c_hat_exact: modal_condition_number(problem, &system).ok(),
        eta_interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_nonsymmetric_problem, make_symmetric_problem};
    use crate::rng::stream_rng;
    use rand::Rng;

    fn scalar(lambda: f64) -> QuadraticProblem {
        make_symmetric_problem(&[lambda], 0, None).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn params_validation() {
        assert!(MethodParams::new(0.0, 0.0, 0.0, MethodTag::Generic).is_err());
        assert!(MethodParams::new(0.1, 1.5, 0.0, MethodTag::Generic).is_err());
        assert!(MethodParams::new(0.1, 0.0, -0.1, MethodTag::Generic).is_err());
        assert!(MethodParams::new(0.1, 0.5, 1.0, MethodTag::Generic).is_ok());
        assert_eq!("SHB".parse::<MethodTag>().unwrap(), MethodTag::Shb);
        assert!("adam".parse::<MethodTag>().is_err());
    }

    #[test]
    fn scalar_companion_without_momentum() {
        let sys = companion_matrix(&scalar(1.0), &MethodParams::shb(0.5, 0.0).unwrap()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 1.0, 0.0]);
        assert!(linalg::max_abs(&(&sys.p - expected)) < 1e-15);
        assert!(close(spectral_radius(&sys), 0.5, 1e-15));
    }

    #[test]
    fn critical_momentum_gives_repeated_root() {
        let params = MethodParams::shb(0.25, 0.25).unwrap();
        let sys = companion_matrix(&scalar(1.0), &params).unwrap();
        let spec = sys.spectra[0];
        assert_eq!(spec.branch, Branch::Repeated);
        assert!(close(spec.mu_plus.re, 0.5, 1e-15));
        assert!(close(sys.rho_p, 0.5, 1e-15));
    }

    #[test]
    fn unit_momentum_is_marginal() {
        let sys = companion_matrix(&scalar(1.0), &MethodParams::shb(0.25, 1.0).unwrap()).unwrap();
        assert_eq!(sys.spectra[0].branch, Branch::Complex);
        assert!(close(sys.spectra[0].mu_plus.norm(), 1.0, 1e-12));
        assert!(close(sys.rho_p, 1.0, 1e-12));
    }

    #[test]
    fn vanishing_contraction_double_zero() {
        let spec = block_eigenvalues(2.0, &MethodParams::shb(0.5, 0.0).unwrap());
        assert_eq!(spec.branch, Branch::Repeated);
        assert_eq!(spec.mu_plus, Complex64::new(0.0, 0.0));
        assert_eq!(spec.mu_minus, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn root_product_matches_momentum() {
        let spec = block_eigenvalues(1.0, &MethodParams::shb(0.04, 0.81).unwrap());
        let expected_delta = (1.0f64 - 0.04 + 0.81).powi(2) - 4.0 * 0.81;
        assert!(close(spec.delta, expected_delta, 1e-14));
        assert!(close((spec.mu_plus * spec.mu_minus).re, 0.81, 1e-12));
    }

    #[test]
    fn lookahead_root_modulus() {
        let spec = block_eigenvalues(1.0, &MethodParams::asg(0.25, 1.0).unwrap());
        assert!(close((spec.mu_plus * spec.mu_minus).re, 0.75, 1e-12));
        assert!(close(spec.mu_plus.norm(), 0.75f64.sqrt(), 1e-12));
        assert!(close(spec.mu_minus.norm(), 0.75f64.sqrt(), 1e-12));
    }

    #[test]
    fn table_momentum_radius() {
        for al in [0.01, 0.09, 0.25, 0.64] {
            let params = MethodParams::shb(al, table_eta(al)).unwrap();
            let sys = companion_matrix(&scalar(1.0), &params).unwrap();
            assert!(close(sys.rho_p, 1.0 - al.sqrt() / 2.0, 1e-12), "al={al}");
        }
    }

    #[test]
    fn multivariate_general_beta_rejected() {
        let p = make_symmetric_problem(&[1.0, 2.0], 0, None).unwrap();
        let params = MethodParams::new(0.1, 0.5, 0.3, MethodTag::Generic).unwrap();
        assert!(matches!(
            companion_matrix(&p, &params),
            Err(Error::UnsupportedConfiguration(_))
        ));
        assert!(companion_matrix(&scalar(1.0), &params).is_ok());
    }

    #[test]
    fn block_and_dense_radius_agree() {
        let mut rng = stream_rng(11, 0);
        for trial in 0..40 {
            let d = 1 + trial % 4;
            let eigs: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..5.0)).collect();
            let problem = if trial % 2 == 0 {
                make_symmetric_problem(&eigs, trial as u64, None).unwrap()
            } else {
                make_nonsymmetric_problem(&eigs, 3.0, trial as u64).unwrap()
            };
            let alpha = rng.random_range(0.01..0.5);
            let eta = rng.random_range(0.0..1.0);
            let beta = if trial % 3 == 0 { 1.0 } else { 0.0 };
            let params = MethodParams::new(alpha, beta, eta, MethodTag::Generic).unwrap();
            let sys = companion_matrix(&problem, &params).unwrap();
            // Defective blocks are only accurate to ~sqrt(eps); none occur here.
            assert!(
                close(sys.rho_p, dense_spectral_radius(&sys), 1e-9),
                "trial {trial}: {} vs {}",
                sys.rho_p,
                dense_spectral_radius(&sys)
            );
        }
    }

    #[test]
    fn stability_interval_examples() {
        let one = scalar(1.0);
        let iv = eta_stability_interval(&one, 0.25, 0.0).unwrap();
        assert!(close(iv.lo, 0.25, 1e-15) && close(iv.hi, 2.25, 1e-15));

        let two = make_symmetric_problem(&[1.0, 4.0], 0, None).unwrap();
        let alpha = (2.0f64 / 3.0).powi(2);
        let iv = eta_stability_interval(&two, alpha, 0.0).unwrap();
        assert!(close(iv.lo, 1.0 / 9.0, 1e-12));
        assert!(!iv.is_empty());
        // past the threshold the largest eigenvalue sets the lower endpoint
        let iv = eta_stability_interval(&two, alpha * 1.2, 0.0).unwrap();
        assert!(iv.lo > (1.0 - (alpha * 1.2f64).sqrt()).powi(2) + 1e-6);

        let iv = eta_stability_interval(&one, 0.0, 1.0).unwrap();
        assert_eq!((iv.lo, iv.hi), (1.0, 1.0));

        assert!(matches!(
            eta_stability_interval(&two, 0.3, 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn inside_interval_modulus_is_sqrt_eta() {
        let p = make_symmetric_problem(&[1.0, 2.0, 3.5], 2, None).unwrap();
        let alpha = (2.0 / (1.0 + 3.5f64.sqrt())).powi(2);
        let iv = eta_stability_interval(&p, alpha, 0.0).unwrap();
        for k in 0..=10 {
            let eta = (iv.lo + (iv.hi.min(1.0) - iv.lo) * k as f64 / 10.0).min(1.0);
            let params = MethodParams::shb(alpha, eta).unwrap();
            for &l in &p.eigenvalues {
                let s = block_eigenvalues(l, &params);
                assert!(close(s.mu_plus.norm(), eta.sqrt(), 1e-12));
                assert!(close(s.mu_minus.norm(), eta.sqrt(), 1e-12));
            }
        }
    }

    #[test]
    fn growth_constant_of_diagonal_matrix() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.9, -0.3, 0.5]));
        let c = norm_growth_constant(&m, 0.0).unwrap();
        assert!(close(c, 3f64.sqrt(), 1e-12));
    }

    #[test]
    fn growth_constant_of_jordan_block_scales_inverse_delta() {
        let m = DMatrix::from_row_slice(2, 2, &[0.8, 1.0, 0.0, 0.8]);
        assert!(matches!(norm_growth_constant(&m, 0.0), Err(Error::DegenerateSpectrum(_))));
        let c1 = norm_growth_constant(&m, 0.1).unwrap();
        let c2 = norm_growth_constant(&m, 0.05).unwrap();
        assert!(close(c2 / c1, 2.0, 1e-6), "ratio {}", c2 / c1);
        let mut pow = DMatrix::identity(2, 2);
        for n in 1..=200 {
            pow = &pow * &m;
            assert!(linalg::norm2(&pow) <= c1 * (0.8f64 + 0.1).powi(n) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn growth_constant_bounds_powers_with_distinct_spectrum() {
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let n = rng.random_range(2..6);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let c = norm_growth_constant(&m, 0.0).unwrap();
            let rho = linalg::spectral_radius(&m);
            let mut pow = DMatrix::identity(n, n);
            for k in 1..=200 {
                pow = &pow * &m;
                let lhs = linalg::norm2(&pow);
                assert!(lhs <= c * rho.powi(k) * (1.0 + 1e-8) + 1e-300, "k={k}");
            }
        }
    }

    #[test]
    fn c_hat_bound_values() {
        assert!(close(c_hat_bound(1.0, 1.0, 1.0).unwrap(), 5.0, 1e-15));
        assert!(close(c_hat_bound(0.04, 1.0, 1.0).unwrap(), 25.0, 1e-12));
        assert!(matches!(c_hat_bound(0.0, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn discriminant_floor_values() {
        assert!(close(discriminant_floor(0.16, 1.0), 0.15, 1e-15));
        assert!(close(discriminant_floor(1.0, 1.0), 15.0 / 16.0, 1e-15));
    }

    #[test]
    fn modal_basis_diagonalises_p() {
        let p = make_nonsymmetric_problem(&[1.0, 2.0, 5.0], 4.0, 3).unwrap();
        let al = 0.04;
        let params = MethodParams::shb(al, table_eta(al)).unwrap();
        let sys = companion_matrix(&p, &params).unwrap();
        let t = modal_basis(&p, &sys).unwrap();
        let pt = linalg::to_complex(&sys.p) * &t;
        for (i, s) in sys.spectra.iter().enumerate() {
            for (col, mu) in [(2 * i, s.mu_plus), (2 * i + 1, s.mu_minus)] {
                let r = pt.column(col) - t.column(col) * mu;
                assert!(r.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn report_serialises() {
        let p = make_symmetric_problem(&[1.0, 10.0], 0, None).unwrap();
        let params = MethodParams::shb(0.01, table_eta(0.01)).unwrap();
        let report = spectral_report(&p, &params).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["eigen"].as_array().unwrap().len(), 2);
        assert!(json["c_hat_bound"].as_f64().unwrap() >= json["c_hat_exact"].as_f64().unwrap());
    }

    proptest::proptest! {
        #[test]
        fn roots_reproduce_coefficients(
            lambda in 0.01f64..10.0,
            alpha in 0.001f64..1.0,
            beta in 0.0f64..=1.0,
            eta in 0.0f64..=1.0,
        ) {
            let params = MethodParams::new(alpha, beta, eta, MethodTag::Generic).unwrap();
            let s = block_eigenvalues(lambda, &params);
            let (t, p) = params.block_coefficients(lambda);
            let sum = s.mu_plus + s.mu_minus;
            let prod = s.mu_plus * s.mu_minus;
            let scale = 1.0 + t.abs() + p.abs();
            if s.branch != Branch::Repeated {
                proptest::prop_assert!((sum.re - t).abs() <= 1e-12 * scale);
                proptest::prop_assert!((prod.re - p).abs() <= 1e-12 * scale);
                proptest::prop_assert!(sum.im.abs() <= 1e-12 * scale && prod.im.abs() <= 1e-12 * scale);
            } else {
                proptest::prop_assert!((sum.re - t).abs() <= 1e-12 * scale);
                // the double root absorbs |Δ|/4 < 2.5e-13 into the product
                proptest::prop_assert!((prod.re - p).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn beta_reduces_to_shifted_momentum(
            al in 0.001f64..=1.0,
            beta in 0.0f64..=1.0,
            eta in 0.0f64..=1.0,
        ) {
            let full = MethodParams::new(al, beta, eta, MethodTag::Generic).unwrap();
            let reduced = MethodParams::shb(al, full.reduced_eta(1.0)).unwrap();
            let a = block_eigenvalues(1.0, &full);
            let b = block_eigenvalues(1.0, &reduced);
            proptest::prop_assert!((a.mu_plus - b.mu_plus).norm() <= 1e-12);
            proptest::prop_assert!((a.mu_minus - b.mu_minus).norm() <= 1e-12);
        }
    }
}
