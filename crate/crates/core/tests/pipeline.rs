use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use lsam::complexity::oracle_sample_complexity;
use lsam::dynamics::{
    dense_moment_recursion, exact_moment_recursion, oracle_covariance, simulate_mse, stationary_covariance,
    InitialCondition,
};
use lsam::problem::{make_nonsymmetric_problem, make_symmetric_problem, NoiseModel};
use lsam::spectral::{MethodParams, MethodTag};
use lsam::theory::{lower_bound_n0, table1_params};

fn start_at(problem: &lsam::problem::QuadraticProblem, legacy: bool) -> InitialCondition {
    let x0 = DVector::zeros(problem.dim());
    InitialCondition::new(problem.error_of(&x0), legacy)
}

#[test]
fn modal_and_dense_oracles_agree_on_nonsymmetric_problem() {
    let problem = make_nonsymmetric_problem(&[1.0, 3.0, 7.0], 5.0, 2).unwrap();
    let params = MethodParams::asg(0.1, 0.5).unwrap();
    let q = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.4 } else { 0.1 });
    let start = start_at(&problem, true);
    let modal = exact_moment_recursion(&problem, &params, &q, &start, 60).unwrap();
    let dense = dense_moment_recursion(&problem, &params, &q, &start, 60).unwrap();
    for (m, d) in modal.points.iter().zip(&dense.points) {
        assert!((m.mse - d.mse).abs() <= 1e-9 * d.mse.max(1.0), "n={}: {} vs {}", m.n, m.mse, d.mse);
        assert!((m.stacked_mse - d.stacked_mse).abs() <= 1e-9 * d.stacked_mse.max(1.0));
    }
}

#[test]
fn oracle_settles_at_stationary_trace() {
    let problem = make_symmetric_problem(&[1.0, 4.0], 1, None).unwrap();
    let params = MethodParams::shb(0.05, 0.5).unwrap();
    let q = DMatrix::identity(2, 2) * 0.3;
    let series = exact_moment_recursion(&problem, &params, &q, &start_at(&problem, false), 4000).unwrap();
    let limit = stationary_covariance(&problem, &params, &q).unwrap().trace_mse;
    let last = series.points.last().unwrap().mse;
    assert!((last - limit).abs() <= 1e-8 * limit, "{last} vs {limit}");
}

#[test]
fn monte_carlo_tracks_oracle() {
    let problem = make_symmetric_problem(&[0.5, 2.0], 4, None).unwrap();
    let params = MethodParams::new(0.2, 0.5, 0.6, MethodTag::Generic).unwrap();
    let noise = NoiseModel::isotropic(0.25, 2, 9).unwrap();
    let start = start_at(&problem, false);
    let mc = simulate_mse(&problem, &params, &noise, &start, 40, 20_000, 17).unwrap();
    let q = oracle_covariance(&noise).unwrap();
    let exact = exact_moment_recursion(&problem, &params, &q, &start, 40).unwrap();
    for (m, e) in mc.points.iter().zip(&exact.points).skip(1) {
        let z = (m.mse - e.mse).abs() / m.stderr;
        assert!(z < 5.0, "n={}: mc {} oracle {} ({z:.2} se)", m.n, m.mse, e.mse);
    }
}

#[test]
fn table_sgd_needs_at_least_the_lower_bound() {
    let problem = make_symmetric_problem(&[1.0, 5.0], 0, None).unwrap();
    let (eps, k) = (0.01, 1.0);
    let params = table1_params(MethodTag::Sgd, &problem, eps, k).unwrap();
    let q = DMatrix::identity(2, 2) * (k / 2.0);
    let start = start_at(&problem, false);
    let found = oracle_sample_complexity(&problem, &params, &q, &start, eps, 200_000).unwrap();
    let n0 = found.n0_empirical.expect("reaches epsilon") as f64;
    let floor = lower_bound_n0(eps, k, problem.lambda_min(), start.lambda()).unwrap();
    assert!(n0 >= floor, "{n0} < {floor}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulation_is_a_function_of_seed(seed in 0u64..1000, eta in 0.0f64..0.9, beta in prop::sample::select(vec![0.0, 1.0])) {
        let problem = make_symmetric_problem(&[1.0, 2.0], seed, None).unwrap();
        let params = MethodParams::new(0.1, beta, eta, MethodTag::Generic).unwrap();
        let noise = NoiseModel::isotropic(0.5, 2, seed).unwrap();
        let start = start_at(&problem, false);
        let a = simulate_mse(&problem, &params, &noise, &start, 15, 300, seed).unwrap();
        let b = simulate_mse(&problem, &params, &noise, &start, 15, 300, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn oracle_moments_are_consistent(alpha in 0.01f64..0.4, eta in 0.0f64..0.95, beta in 0.0f64..=1.0) {
        let problem = make_symmetric_problem(&[1.0, 2.5], 3, None).unwrap();
        let params = MethodParams::new(alpha, beta, eta, MethodTag::Generic).unwrap();
        let q = DMatrix::identity(2, 2) * 0.2;
        let series = exact_moment_recursion(&problem, &params, &q, &start_at(&problem, true), 50).unwrap();
        let bias = series.bias.as_ref().unwrap();
        for (p, b) in series.points.iter().zip(bias) {
            prop_assert!(p.mse >= 0.0);
            prop_assert!(p.stacked_mse + 1e-12 >= p.mse);
            prop_assert!(p.stacked_mse + 1e-9 * p.stacked_mse.max(1.0) >= *b);
        }
    }
}
