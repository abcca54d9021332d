//! Quadratic / linear stochastic approximation instances and their noise models.
//!
//! A [`QuadraticProblem`] carries a driving matrix `A` with real, strictly
//! positive spectrum together with a diagonaliser `S` (`S⁻¹AS` diagonal), the
//! target `x* = A⁻¹b`, and the singular-value data of `S` needed by the bound
//! constants. A [`NoiseModel`] produces conditionally zero-mean Gaussian
//! perturbations and exposes both the covariance floor (the persistent-noise
//! constant) and the second-moment ceiling (the growth constant).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{stream_rng, StreamRng};

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_GENERATION_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub x_star: DVector<f64>,
    /// Sorted ascending; column `i` of `s` is the matching eigenvector.
    pub eigenvalues: Vec<f64>,
    pub s: DMatrix<f64>,
    pub s_inv: DMatrix<f64>,
    pub sigma_min_s: f64,
    pub sigma_min_s_inv: f64,
    pub is_symmetric: bool,
}

impl QuadraticProblem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    pub fn condition_number(&self) -> f64 {
        self.lambda_max() / self.lambda_min()
    }

    /// `√d / (σ_min(S)·σ_min(S⁻¹))`, the generic power-norm constant for `I − αA`.
    pub fn diagonalizer_constant(&self) -> f64 {
        (self.dim() as f64).sqrt() / (self.sigma_min_s * self.sigma_min_s_inv)
    }

    /// Constant used when evaluating the parameter table: 1 for symmetric `A`,
    /// the diagonaliser constant otherwise.
    pub fn table_constant(&self) -> f64 {
        if self.is_symmetric {
            1.0
        } else {
            self.diagonalizer_constant()
        }
    }

    /// `x̃ = x − x*`.
    pub fn error_of(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.x_star
    }

    pub fn relative_residual(&self) -> f64 {
        let r = &self.a * &self.x_star - &self.b;
        let scale = self.b.norm().max(f64::MIN_POSITIVE);
        r.norm() / scale
    }

    /// Largest relative gap between the requested spectrum and a fresh
    /// numerical eigen-decomposition of `A`.
    pub fn spectrum_mismatch(&self) -> f64 {
        let mut computed: Vec<f64> = linalg::eigenvalues(&self.a).iter().map(|z| z.re).collect();
        computed.sort_by(f64::total_cmp);
        computed
            .iter()
            .zip(&self.eigenvalues)
            .map(|(c, e)| ((c - e) / e).abs())
            .fold(0.0, f64::max)
    }

    /// Off-diagonal mass of `S⁻¹AS`, relative to `λ_max`.
    pub fn diagonalization_error(&self) -> f64 {
        let mut d = &self.s_inv * &self.a * &self.s;
        for i in 0..self.dim() {
            d[(i, i)] = 0.0;
        }
        linalg::max_abs(&d) / self.lambda_max()
    }
}

fn validate_eigenvalues(eigenvalues: &[f64]) -> Result<Vec<f64>> {
    if eigenvalues.is_empty() {
        return Err(Error::validation("eigenvalues", "spectrum must be non-empty"));
    }
    if let Some(bad) = eigenvalues.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(Error::validation(
            "eigenvalues",
            format!("every eigenvalue must be finite and > 0, got {bad}"),
        ));
    }
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

fn finish_problem(
    a: DMatrix<f64>,
    b: Option<DVector<f64>>,
    eigenvalues: Vec<f64>,
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    is_symmetric: bool,
) -> Result<QuadraticProblem> {
    let d = eigenvalues.len();
    let b = match b {
        Some(b) if b.len() != d => {
            return Err(Error::validation(
                "b",
                format!("expected {d} entries, got {}", b.len()),
            ))
        }
        Some(b) => b,
        None => &a * DVector::from_element(d, 1.0),
    };
    let x_star = a
        .clone()
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Generation("driving matrix is singular".into()))?;
    let problem = QuadraticProblem {
        sigma_min_s: linalg::sigma_min(&s),
        sigma_min_s_inv: linalg::sigma_min(&s_inv),
        a,
        b,
        x_star,
        eigenvalues,
        s,
        s_inv,
        is_symmetric,
    };
    let residual = problem.relative_residual();
    if residual > RESIDUAL_TOL {
        return Err(Error::Generation(format!(
            "solution residual {residual:e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok(problem)
}

/// `A = Q·diag(λ)·Qᵀ` with a seeded Haar-random orthogonal `Q`. `b`
/// defaults to `A·1`, so `x*` is the all-ones vector.
pub fn make_symmetric_problem(
    eigenvalues: &[f64],
    rotation_seed: u64,
    b: Option<DVector<f64>>,
) -> Result<QuadraticProblem> {
    let eigenvalues = validate_eigenvalues(eigenvalues)?;
    let d = eigenvalues.len();
    let mut rng = stream_rng(rotation_seed, 0);
    let q = linalg::random_orthogonal(d, &mut rng);
    let diag = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone()));
    let mut a = &q * diag * q.transpose();
    // exact symmetry, not just up to rounding
    a = (&a + a.transpose()) * 0.5;
    let q_t = q.transpose();
    finish_problem(a, b, eigenvalues, q, q_t, true)
}

/// `A = S·diag(λ)·S⁻¹` with `S = Q₁·diag(ramp)·Q₂`, where the geometric
/// ramp runs from 1 to `similarity_condition` so that `cond(S)` hits the
/// target. For `d = 1` every `S` is a scalar and the target is irrelevant.
pub fn make_nonsymmetric_problem(
    eigenvalues: &[f64],
    similarity_condition: f64,
    seed: u64,
) -> Result<QuadraticProblem> {
    let eigenvalues = validate_eigenvalues(eigenvalues)?;
    if !(similarity_condition.is_finite() && similarity_condition >= 1.0) {
        return Err(Error::validation(
            "similarity_condition",
            format!("must be a finite real >= 1, got {similarity_condition}"),
        ));
    }
    let d = eigenvalues.len();
    let diag = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues.clone()));
    if d == 1 {
        let one = DMatrix::identity(1, 1);
        return finish_problem(diag, None, eigenvalues, one.clone(), one, false);
    }
    for attempt in 0..MAX_GENERATION_ATTEMPTS {
        let mut rng = stream_rng(seed, attempt);
        let q1 = linalg::random_orthogonal(d, &mut rng);
        let q2 = linalg::random_orthogonal(d, &mut rng);
        let ramp = DVector::from_fn(d, |k, _| similarity_condition.powf(k as f64 / (d - 1) as f64));
        let s = &q1 * DMatrix::from_diagonal(&ramp) * &q2;
        let cond = linalg::condition_number(&s);
        if ((cond - similarity_condition) / similarity_condition).abs() > 0.1 {
            continue;
        }
        let Some(s_inv) = s.clone().try_inverse() else {
            continue;
        };
        let a = &s * &diag * &s_inv;
        return finish_problem(a, None, eigenvalues, s, s_inv, false);
    }
    Err(Error::Generation(format!(
        "could not reach similarity condition {similarity_condition} in {MAX_GENERATION_ATTEMPTS} attempts"
    )))
}

/// Gaussian noise families. Each has closed-form second moments, which is
/// what the exact moment oracle needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    IsotropicGaussian { sigma2: f64 },
    AnisotropicGaussian { variances: Vec<f64> },
    /// Covariance `(σ² + c‖x̃‖²)·I/d`.
    StateScaledGaussian { sigma2: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub dim: usize,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, dim: usize, seed: u64) -> Result<Self> {
        let nonneg = |field: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::validation(field, format!("must be finite and >= 0, got {v}")))
            }
        };
        match &kind {
            NoiseKind::IsotropicGaussian { sigma2 } => nonneg("noise.sigma2", *sigma2)?,
            NoiseKind::AnisotropicGaussian { variances } => {
                if variances.len() != dim {
                    return Err(Error::validation(
                        "noise.variances",
                        format!("expected {dim} entries, got {}", variances.len()),
                    ));
                }
                for v in variances {
                    nonneg("noise.variances", *v)?;
                }
            }
            NoiseKind::StateScaledGaussian { sigma2, scale } => {
                nonneg("noise.sigma2", *sigma2)?;
                nonneg("noise.scale", *scale)?;
            }
        }
        Ok(NoiseModel { kind, dim, seed })
    }

    pub fn isotropic(sigma2: f64, dim: usize, seed: u64) -> Result<Self> {
        Self::new(NoiseKind::IsotropicGaussian { sigma2 }, dim, seed)
    }

    /// Largest `K` with `E[MMᵀ | F] ⪰ K·I`.
    pub fn k_lower(&self) -> f64 {
        match &self.kind {
            NoiseKind::IsotropicGaussian { sigma2 } => *sigma2,
            NoiseKind::AnisotropicGaussian { variances } => {
                variances.iter().copied().fold(f64::INFINITY, f64::min)
            }
            NoiseKind::StateScaledGaussian { sigma2, .. } => sigma2 / self.dim as f64,
        }
    }

    /// Smallest `K` with `E[‖M‖² | F] ≤ K(1 + ‖x̃‖²)`.
    pub fn k_upper(&self) -> f64 {
        match &self.kind {
            NoiseKind::IsotropicGaussian { sigma2 } => sigma2 * self.dim as f64,
            NoiseKind::AnisotropicGaussian { variances } => variances.iter().sum(),
            NoiseKind::StateScaledGaussian { sigma2, scale } => sigma2.max(*scale),
        }
    }

    /// Conditional covariance, when it does not depend on the state.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        match &self.kind {
            NoiseKind::IsotropicGaussian { sigma2 } => {
                Some(DMatrix::identity(self.dim, self.dim) * *sigma2)
            }
            NoiseKind::AnisotropicGaussian { variances } => {
                Some(DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
            }
            NoiseKind::StateScaledGaussian { .. } => None,
        }
    }

    pub fn is_state_dependent(&self) -> bool {
        matches!(self.kind, NoiseKind::StateScaledGaussian { .. })
    }

    /// Writes one draw into `out`. `x_tilde` is the current error `xₙ − x*`.
    pub fn sample_into(&self, x_tilde: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        match &self.kind {
            NoiseKind::IsotropicGaussian { sigma2 } => {
                let sd = sigma2.sqrt();
                for o in out.iter_mut() {
                    *o = sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            NoiseKind::AnisotropicGaussian { variances } => {
                for (o, v) in out.iter_mut().zip(variances) {
                    *o = v.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
            NoiseKind::StateScaledGaussian { sigma2, scale } => {
                let norm2: f64 = x_tilde.iter().map(|x| x * x).sum();
                let sd = ((sigma2 + scale * norm2) / self.dim as f64).sqrt();
                for o in out.iter_mut() {
                    *o = sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }

    pub fn sample(&self, x_tilde: &DVector<f64>, rng: &mut StreamRng) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.sample_into(x_tilde.as_slice(), rng, out.as_mut_slice());
        out
    }
}

/// JSON form of a noise model: `{"kind": "isotropic_gaussian", "sigma2": 1.0, "seed": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    #[serde(default)]
    pub seed: u64,
}

/// JSON form of a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub eigenvalues: Vec<f64>,
    #[serde(default = "default_similarity")]
    pub similarity_condition: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

fn default_similarity() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `similarity_condition == 1` selects the symmetric generator.
    pub fn build(&self) -> Result<QuadraticProblem> {
        if self.similarity_condition == 1.0 {
            make_symmetric_problem(
                &self.eigenvalues,
                self.seed,
                self.b.as_ref().map(|b| DVector::from_column_slice(b)),
            )
        } else {
            if self.b.is_some() {
                return Err(Error::validation(
                    "b",
                    "a custom b is only supported for symmetric problems",
                ));
            }
            make_nonsymmetric_problem(&self.eigenvalues, self.similarity_condition, self.seed)
        }
    }

    pub fn build_noise(&self, dim: usize) -> Result<Option<NoiseModel>> {
        self.noise
            .as_ref()
            .map(|n| NoiseModel::new(n.kind.clone(), dim, n.seed))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_identity_problem() {
        let p = make_symmetric_problem(&[1.0], 0, Some(DVector::from_element(1, 2.0))).unwrap();
        assert!((p.a[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((p.x_star[0] - 2.0).abs() < 1e-15);
        assert!(p.is_symmetric);
    }

    #[test]
    fn symmetric_problem_has_orthogonal_diagonalizer() {
        let p = make_symmetric_problem(&[10.0, 1.0], 4, None).unwrap();
        assert_eq!(p.condition_number(), 10.0);
        assert!((p.sigma_min_s * p.sigma_min_s_inv - 1.0).abs() < 1e-12);
        assert_eq!(p.table_constant(), 1.0);
        assert!((p.diagonalizer_constant() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn default_target_is_all_ones() {
        let p = make_symmetric_problem(&[1.0, 2.0, 4.0], 7, None).unwrap();
        assert!(p.relative_residual() <= 1e-10);
        for x in p.x_star.iter() {
            assert!((x - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_eigenvalue_rejected() {
        let err = make_symmetric_problem(&[1.0, 0.0], 0, None).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "eigenvalues"));
        assert!(make_symmetric_problem(&[], 0, None).is_err());
        assert!(make_nonsymmetric_problem(&[-1.0], 2.0, 0).is_err());
    }

    #[test]
    fn nonsymmetric_condition_one_is_symmetric() {
        let p = make_nonsymmetric_problem(&[1.0, 3.0], 1.0, 9).unwrap();
        let asym = linalg::max_abs(&(&p.a - p.a.transpose()));
        assert!(asym < 1e-10, "asymmetry {asym}");
        assert!(!p.is_symmetric);
    }

    #[test]
    fn nonsymmetric_problem_keeps_spectrum() {
        let p = make_nonsymmetric_problem(&[1.0, 3.0], 5.0, 1).unwrap();
        assert!(p.spectrum_mismatch() < 1e-8);
        let cond = p.sigma_min_s.recip() * linalg::sigma_max(&p.s);
        assert!((cond - 5.0).abs() / 5.0 <= 0.1);
        assert!(p.diagonalization_error() < 1e-10);
        assert!(linalg::max_abs(&(&p.a - p.a.transpose())) > 1e-3);
    }

    #[test]
    fn nonsymmetric_scalar() {
        let p = make_nonsymmetric_problem(&[2.0], 17.0, 3).unwrap();
        assert_eq!(p.a[(0, 0)], 2.0);
    }

    #[test]
    fn similarity_condition_below_one_rejected() {
        assert!(matches!(
            make_nonsymmetric_problem(&[1.0, 2.0], 0.5, 0),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn noise_constants() {
        let iso = NoiseModel::isotropic(0.5, 3, 0).unwrap();
        assert_eq!(iso.k_lower(), 0.5);
        assert_eq!(iso.k_upper(), 1.5);
        let st = NoiseModel::new(NoiseKind::StateScaledGaussian { sigma2: 1.0, scale: 3.0 }, 2, 0).unwrap();
        assert_eq!(st.k_upper(), 3.0);
        assert_eq!(st.k_lower(), 0.5);
        assert!(st.covariance().is_none());
        let an = NoiseModel::new(
            NoiseKind::AnisotropicGaussian { variances: vec![0.2, 0.7] },
            2,
            0,
        )
        .unwrap();
        assert_eq!(an.k_lower(), 0.2);
        assert!((an.k_upper() - 0.9).abs() < 1e-15);
        assert!(NoiseModel::new(NoiseKind::AnisotropicGaussian { variances: vec![1.0] }, 2, 0).is_err());
        assert!(NoiseModel::isotropic(-1.0, 1, 0).is_err());
    }

    #[test]
    fn zero_variance_noise_is_zero() {
        let m = NoiseModel::isotropic(0.0, 3, 0).unwrap();
        let mut rng = stream_rng(1, 1);
        for _ in 0..100 {
            assert!(m.sample(&DVector::from_element(3, 5.0), &mut rng).iter().all(|x| *x == 0.0));
        }
    }

    fn sample_variance(m: &NoiseModel, x: &DVector<f64>, n: usize) -> f64 {
        let mut rng = stream_rng(42, 0);
        let draws: Vec<f64> = (0..n).map(|_| m.sample(x, &mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    }

    #[test]
    fn unit_variance_within_chi_square_interval() {
        let m = NoiseModel::isotropic(1.0, 1, 0).unwrap();
        let v = sample_variance(&m, &DVector::zeros(1), 100_000);
        assert!((0.97..=1.03).contains(&v), "variance {v}");
    }

    #[test]
    fn state_scaled_at_origin_matches_isotropic() {
        let m = NoiseModel::new(NoiseKind::StateScaledGaussian { sigma2: 1.0, scale: 1.0 }, 1, 0).unwrap();
        let v = sample_variance(&m, &DVector::zeros(1), 100_000);
        assert!((0.97..=1.03).contains(&v), "variance {v}");
        // away from the origin the variance grows with ‖x̃‖²
        let v2 = sample_variance(&m, &DVector::from_element(1, 2.0), 100_000);
        assert!((4.85..=5.15).contains(&v2), "variance {v2}");
    }

    #[test]
    fn noise_is_conditionally_zero_mean() {
        let d = 3;
        let n = 100_000;
        for kind in [
            NoiseKind::IsotropicGaussian { sigma2: 2.0 },
            NoiseKind::StateScaledGaussian { sigma2: 1.0, scale: 0.5 },
        ] {
            let m = NoiseModel::new(kind, d, 0).unwrap();
            let x = DVector::from_vec(vec![1.0, -0.5, 2.0]);
            let mut rng = stream_rng(7, 3);
            let mut sum = DVector::zeros(d);
            for _ in 0..n {
                sum += m.sample(&x, &mut rng);
            }
            let mean = sum / n as f64;
            let per_coord_var = match m.kind {
                NoiseKind::IsotropicGaussian { sigma2 } => sigma2,
                NoiseKind::StateScaledGaussian { sigma2, scale } => (sigma2 + scale * x.norm_squared()) / d as f64,
                _ => unreachable!(),
            };
            let limit = 4.0 * (per_coord_var * d as f64 / n as f64).sqrt();
            assert!(mean.norm() <= limit, "mean norm {} > {limit}", mean.norm());
        }
    }

    #[test]
    fn problem_spec_json() {
        let spec = ProblemSpec::from_json(
            r#"{"eigenvalues":[1,4],"similarity_condition":1.0,"seed":0,"noise":{"kind":"isotropic_gaussian","sigma2":1.0,"seed":1}}"#,
        )
        .unwrap();
        let p = spec.build().unwrap();
        assert!(p.is_symmetric);
        let noise = spec.build_noise(p.dim()).unwrap().unwrap();
        assert_eq!(noise.kind, NoiseKind::IsotropicGaussian { sigma2: 1.0 });
        assert_eq!(noise.seed, 1);

        let ns = ProblemSpec::from_json(r#"{"eigenvalues":[1,4],"similarity_condition":3.0}"#).unwrap();
        assert!(!ns.build().unwrap().is_symmetric);

        assert!(matches!(
            ProblemSpec::from_json(r#"{"eigenvalues":[1],"bogus":2}"#),
            Err(Error::Json(_))
        ));
        assert!(ProblemSpec::from_json("{not json").is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn generated_spectra_match_request(
            eigs in proptest::collection::vec(0.05f64..50.0, 1..6),
            cond in 1.0f64..20.0,
            seed in 0u64..1000,
        ) {
            let sym = make_symmetric_problem(&eigs, seed, None).unwrap();
            proptest::prop_assert!(sym.spectrum_mismatch() < 1e-8);
            proptest::prop_assert!((sym.sigma_min_s * sym.sigma_min_s_inv - 1.0).abs() < 1e-12);
            let ns = make_nonsymmetric_problem(&eigs, cond, seed).unwrap();
            proptest::prop_assert!(ns.spectrum_mismatch() < 1e-8);
            proptest::prop_assert!(ns.diagonalization_error() < 1e-10);
        }
    }
}
