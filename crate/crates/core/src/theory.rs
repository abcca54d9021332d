//! Closed-form parameter choices and sample-complexity bounds.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::QuadraticProblem;
use crate::spectral::{block_eigenvalues, c_hat_bound, Branch, MethodParams, MethodTag};

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and > 0, got {v}")))
    }
}

fn check_nonnegative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be finite and >= 0, got {v}")))
    }
}

/// Step size from the parameter table before the momentum is attached.
pub fn table1_alpha(method: MethodTag, problem: &QuadraticProblem, epsilon: f64, k: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    check_nonnegative("K", k)?;
    let l = problem.lambda_min();
    let lmax = problem.lambda_max();
    let c2k = problem.table_constant().powi(2) * k;
    let alpha = match method {
        MethodTag::Sgd => {
            let noise_cap = if c2k > 0.0 { epsilon * l / (4.0 * c2k) } else { f64::INFINITY };
            (l / (0.75 * l * l + c2k)).min(noise_cap).min(2.0 / (l + lmax))
        }
        MethodTag::Shb | MethodTag::Asg => {
            let l15 = l.powf(1.5);
            let first = (l15 / (0.375 * l * l + 25.0 * c2k)).powi(2);
            let noise_cap = if c2k > 0.0 {
                (epsilon * l15 / (200.0 * c2k)).powi(2)
            } else {
                f64::INFINITY
            };
            let third = if method == MethodTag::Shb {
                (2.0 / (l.sqrt() + lmax.sqrt())).powi(2)
            } else {
                1.0 / lmax
            };
            first.min(noise_cap).min(third)
        }
        MethodTag::Generic => {
            return Err(Error::validation("method", "the parameter table covers sgd, shb and asg"));
        }
    };
    Ok(alpha)
}

/// Table parameters for `method`.
///
/// The look-ahead momentum `(1 − √(αλ)/2)²/(1 − αλ)` exceeds one once
/// `αλ_min > 0.64`; such cases are reported as [`Error::UndefinedRegime`].
pub fn table1_params(method: MethodTag, problem: &QuadraticProblem, epsilon: f64, k: f64) -> Result<MethodParams> {
    let alpha = table1_alpha(method, problem, epsilon, k)?;
    let al = alpha * problem.lambda_min();
    match method {
        MethodTag::Sgd => MethodParams::sgd(alpha),
        MethodTag::Shb => MethodParams::shb(alpha, (1.0 - al.sqrt() / 2.0).powi(2)),
        MethodTag::Asg => {
            let eta = (1.0 - al.sqrt() / 2.0).powi(2) / (1.0 - al);
            if !(eta <= 1.0) {
                return Err(Error::UndefinedRegime(format!(
                    "look-ahead momentum {eta} exceeds 1 at alpha*lambda_min = {al}"
                )));
            }
            MethodParams::asg(alpha, eta)
        }
        MethodTag::Generic => unreachable!("rejected by table1_alpha"),
    }
}

/// `K/(64ελ²)·ln(Λ/ε)`: no step size or momentum reaches `ε` sooner.
pub fn lower_bound_n0(epsilon: f64, k: f64, lambda_min: f64, lambda: f64) -> Result<f64> {
    check_positive("epsilon", epsilon)?;
    check_nonnegative("K", k)?;
    check_positive("lambda_min", lambda_min)?;
    if !(lambda > epsilon) {
        return Err(Error::UndefinedRegime(format!(
            "initial error {lambda} does not exceed epsilon {epsilon}"
        )));
    }
    Ok(k / (64.0 * epsilon * lambda_min * lambda_min) * (lambda / epsilon).ln())
}

/// `ε ≤ K/(32λ²)`.
pub fn epsilon_eligibility(epsilon: f64, k: f64, lambda_min: f64) -> bool {
    epsilon <= k / (32.0 * lambda_min * lambda_min)
}

/// Horizon after which the table parameters guarantee `E‖x̃ₙ‖² ≤ ε`.
pub fn upper_bound_n(
    method: MethodTag,
    problem: &QuadraticProblem,
    params: &MethodParams,
    epsilon: f64,
    lambda: f64,
) -> Result<f64> {
    if !(params.alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {}", params.alpha)));
    }
    check_positive("epsilon", epsilon)?;
    let c2 = problem.table_constant().powi(2);
    let al = params.alpha * problem.lambda_min();
    let n = match method {
        MethodTag::Sgd => (2.0 * c2 * lambda / epsilon).ln() / al,
        MethodTag::Shb | MethodTag::Asg => {
            let scale = 4.0 / al.sqrt();
            (scale * (50.0 * c2 * lambda / epsilon).ln()).max(scale * (1.0 / al).ln())
        }
        MethodTag::Generic => {
            return Err(Error::validation("method", "upper bounds cover sgd, shb and asg"));
        }
    };
    Ok(n.max(0.0))
}

/// `(1 − μ₊²)(1 − μ₋²)`, real by conjugacy in the complex branch.
fn one_minus_squares(mu_plus: Complex64, mu_minus: Complex64) -> f64 {
    if mu_plus.im != 0.0 {
        // μ± = r·e^{±iθ}: |1 − μ₊²|² = 1 − 2r²cos 2θ + r⁴
        let r2 = mu_plus.norm_sqr();
        let cos2 = (mu_plus.re * mu_plus.re - mu_plus.im * mu_plus.im) / r2;
        1.0 - 2.0 * r2 * cos2 + r2 * r2
    } else {
        (1.0 - mu_plus.re * mu_plus.re) * (1.0 - mu_minus.re * mu_minus.re)
    }
}

/// `h(η, αλ) = (1 − μ₊²)(1 − μ₋²)(1 − η)/(αλ)²` for the heavy-ball block.
pub fn h_function(eta: f64, alpha_lambda: f64) -> Result<f64> {
    check_positive("alpha_lambda", alpha_lambda)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::validation("eta", format!("must lie in [0, 1], got {eta}")));
    }
    let params = MethodParams::shb(alpha_lambda, eta)?;
    let s = block_eigenvalues(1.0, &params);
    Ok(one_minus_squares(s.mu_plus, s.mu_minus) * (1.0 - eta) / (alpha_lambda * alpha_lambda))
}

/// `α²K / (2(1 − μ₊²)(1 − μ₋²)(1 − η))`; infinite when the variance does not settle.
pub fn lemma1_variance_floor(alpha: f64, eta: f64, k: f64, mu_plus: Complex64, mu_minus: Complex64) -> f64 {
    let rho = mu_plus.norm().max(mu_minus.norm());
    if eta >= 1.0 || rho >= 1.0 {
        return f64::INFINITY;
    }
    alpha * alpha * k / (2.0 * one_minus_squares(mu_plus, mu_minus) * (1.0 - eta))
}

/// `K(1 − ρ(P))/(16λ²)`.
pub fn lemma2_floor(k: f64, lambda: f64, rho_p: f64) -> f64 {
    k * (1.0 - rho_p) / (16.0 * lambda * lambda)
}

/// `16ελ²/K`.
pub fn lemma3_gap(epsilon: f64, k: f64, lambda: f64) -> f64 {
    16.0 * epsilon * lambda * lambda / k
}

/// `Σᵢ 2α(1 + m)/((1 − m)λᵢ(2 + 2m − αλᵢ))` with heavy-ball momentum `m`.
pub fn shb_asymptotic_trace(eigenvalues: &[f64], alpha: f64, momentum: f64) -> Result<f64> {
    check_positive("alpha", alpha)?;
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::Instability(format!("momentum must lie in [0, 1), got {momentum}")));
    }
    eigenvalues
        .iter()
        .map(|&l| {
            let denom = (1.0 - momentum) * l * (2.0 + 2.0 * momentum - alpha * l);
            if denom > 0.0 {
                Ok(2.0 * alpha * (1.0 + momentum) / denom)
            } else {
                Err(Error::Instability(format!(
                    "nonpositive denominator at lambda = {l}: alpha = {alpha}, momentum = {momentum}"
                )))
            }
        })
        .sum()
}

/// `2/(μ + L)`.
pub fn optimal_gd_alpha(lambda_min: f64, lambda_max: f64) -> f64 {
    2.0 / (lambda_min + lambda_max)
}

/// `(4/(√μ + √L)², ((√L − √μ)/(√L + √μ))²)`.
pub fn optimal_hb_params(lambda_min: f64, lambda_max: f64) -> (f64, f64) {
    let (a, b) = (lambda_min.sqrt(), lambda_max.sqrt());
    (4.0 / (a + b).powi(2), ((b - a) / (b + a)).powi(2))
}

/// Asymptotic trace of heavy ball over gradient descent, both at their
/// optimal deterministic parameters for the extremes of `eigenvalues`.
pub fn trace_ratio(eigenvalues: &[f64]) -> Result<f64> {
    let lmin = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let lmax = eigenvalues.iter().copied().fold(0.0, f64::max);
    let (alpha_hb, m) = optimal_hb_params(lmin, lmax);
    let hb = shb_asymptotic_trace(eigenvalues, alpha_hb, m)?;
    let gd = shb_asymptotic_trace(eigenvalues, optimal_gd_alpha(lmin, lmax), 0.0)?;
    Ok(hb / gd)
}

/// `½(√κ + 1/√κ)`.
pub fn acceleration_inflation(kappa: f64) -> f64 {
    0.5 * (kappa.sqrt() + 1.0 / kappa.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Eligibility {
    pub epsilon_small_enough: bool,
    pub alpha_in_table_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "C_hat")]
    pub c_hat: Option<f64>,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub method: MethodTag,
    pub params_used: MethodParams,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub n0_lower: Option<f64>,
    pub n0_upper: f64,
    pub eligibility: Eligibility,
    pub constants: BoundConstants,
}

/// Bounds for `method`; `params` defaults to the table choice.
pub fn bound_report(
    method: MethodTag,
    problem: &QuadraticProblem,
    epsilon: f64,
    k: f64,
    lambda: f64,
    params: Option<MethodParams>,
) -> Result<BoundReport> {
    let table_alpha = table1_alpha(method, problem, epsilon, k)?;
    let params = match params {
        Some(p) => p,
        None => table1_params(method, problem, epsilon, k)?,
    };
    let lmin = problem.lambda_min();
    let c = problem.table_constant();
    let c_hat = match method {
        MethodTag::Sgd => None,
        _ => c_hat_bound(params.alpha, lmin, c).ok(),
    };
    Ok(BoundReport {
        method,
        params_used: params,
        epsilon,
        k,
        n0_lower: lower_bound_n0(epsilon, k, lmin, lambda).ok(),
        n0_upper: upper_bound_n(method, problem, &params, epsilon, lambda)?,
        eligibility: Eligibility {
            epsilon_small_enough: epsilon_eligibility(epsilon, k, lmin),
            alpha_in_table_range: params.alpha <= table_alpha * (1.0 + 1e-12),
        },
        constants: BoundConstants { c, c_hat, lambda },
    })
}

/// `true` when the block has a double root (used to label grid points).
pub fn is_repeated(eta: f64, alpha_lambda: f64) -> bool {
    MethodParams::shb(alpha_lambda, eta)
        .map(|p| block_eigenvalues(1.0, &p).branch == Branch::Repeated)
        .unwrap_or(false)
}
