use mcarma::kalman::quasi_log_likelihood;
use mcarma::levy::{exact_gaussian_sample, simulate_sample, stream, DriverSpec, Purpose, Sample, SimulationSettings};
use mcarma::model::{KroneckerIndex, ParameterSpace};
use mcarma::qmle::{estimate_h, estimate_i, fit, newey_west, sandwich_covariance, FitOptions};
use mcarma::{linalg, scenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn car1_space() -> ParameterSpace {
    ParameterSpace::new(KroneckerIndex::new(vec![1]).unwrap(), 0).unwrap()
}

fn car1_sample(theta: &DVector<f64>, n: usize, rep: u64) -> Sample {
    let model = car1_space().build(theta).unwrap();
    let spec = DriverSpec::brownian(model.sigma_l().clone()).unwrap();
    exact_gaussian_sample(&model, &spec, 1.0, n, &mut stream(31, rep, Purpose::ExactSampler)).unwrap()
}

fn fast_options() -> FitOptions {
    FitOptions { n_starts: 3, max_evals: 5_000, ..FitOptions::default() }
}

#[test]
fn car1_estimate_is_close_to_the_truth() {
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let space = car1_space();
    let y = car1_sample(&truth, 2000, 0);
    let result = fit(&space, &y, &fast_options()).unwrap();
    assert!(result.converged);
    assert!(space.contains(&result.theta_hat));
    assert!((&result.theta_hat - &truth).amax() < 0.15, "θ̂ = {}", result.theta_hat);
    let h = result.h_hat.as_ref().unwrap();
    let i = result.i_hat.as_ref().unwrap();
    assert!(linalg::max_abs_diff(h, &h.transpose()) <= 1e-8 * h.amax());
    assert!(linalg::min_sym_eigenvalue(h) > 0.0, "Ĥ = {h}");
    assert!(linalg::min_sym_eigenvalue(i) >= -1e-10);
    assert!(result.sandwich.is_some());
    assert_eq!(result.n_obs, 2000);
}

#[test]
fn objective_never_exceeds_any_start() {
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let y = car1_sample(&truth, 1000, 1);
    let result = fit(&car1_space(), &y, &fast_options().with_warm_start(&DVector::from_vec(vec![-0.5, 0.7]))).unwrap();
    assert_eq!(result.initial_values.len(), result.starts_used);
    assert!(result.initial_values.iter().all(|v| result.objective <= *v));
    assert!(result.terminal_values.iter().all(|v| result.objective <= *v));
}

#[test]
fn more_starts_never_hurt() {
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let y = car1_sample(&truth, 1000, 2);
    let space = car1_space();
    let few = fit(&space, &y, &FitOptions { n_starts: 1, covariance: false, ..fast_options() }).unwrap();
    let many = fit(&space, &y, &FitOptions { n_starts: 4, covariance: false, ..fast_options() }).unwrap();
    assert!(many.objective <= few.objective);
}

#[test]
fn fit_is_reproducible() {
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let y = car1_sample(&truth, 500, 3);
    let a = fit(&car1_space(), &y, &fast_options()).unwrap();
    let b = fit(&car1_space(), &y, &fast_options()).unwrap();
    assert_eq!(a.theta_hat, b.theta_hat);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.h_hat, b.h_hat);
    assert_eq!(a.i_hat, b.i_hat);
}

#[test]
fn fit_is_invariant_to_the_sign_of_the_data() {
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let y = car1_sample(&truth, 500, 4);
    let flipped = Sample::new(1.0, -y.values()).unwrap();
    let space = car1_space();
    let theta = DVector::from_vec(vec![-0.8, 1.2]);
    let (l, lf) = (quasi_log_likelihood(&space, &theta, &y).unwrap(), quasi_log_likelihood(&space, &theta, &flipped).unwrap());
    assert!((l - lf).abs() < 1e-12);
    let a = fit(&space, &y, &fast_options()).unwrap();
    let b = fit(&space, &flipped, &fast_options()).unwrap();
    assert!((a.objective - b.objective).abs() < 1e-10);
    assert!((&a.theta_hat - &b.theta_hat).amax() < 1e-6);
}

#[test]
fn estimate_stays_in_the_box_for_a_corner_truth() {
    let space = car1_space().with_bounds(DVector::from_vec(vec![-3.0, 0.5]), DVector::from_vec(vec![-0.5, 2.0])).unwrap();
    let corner = DVector::from_vec(vec![-0.5, 2.0]);
    let y = car1_sample(&corner, 1000, 5);
    let result = fit(&space, &y, &fast_options()).unwrap();
    assert!(space.contains(&result.theta_hat), "θ̂ = {}", result.theta_hat);
}

#[test]
fn benchmark_fit_does_not_exceed_the_truth() {
    let space = scenario::ar_space();
    let truth = scenario::theta_ar();
    let model = space.build(&truth).unwrap();
    let y = simulate_sample(&model, &scenario::brownian_driver(), &SimulationSettings::new(2000.0, 0.01, 1.0), None, &mut stream(32, 0, Purpose::Driver))
        .unwrap();
    let opts = FitOptions { n_starts: 0, covariance: false, max_evals: 20_000, ..FitOptions::default() }.with_warm_start(&truth);
    let result = fit(&space, &y, &opts).unwrap();
    assert!(result.objective <= quasi_log_likelihood(&space, &truth, &y).unwrap() + 1e-6);
}

#[test]
fn hessian_spread_shrinks_with_the_sample_size() {
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let space = car1_space();
    let spread = |n: usize| {
        let entries: Vec<f64> = (0..20)
            .map(|rep| estimate_h(&space, &truth, &car1_sample(&truth, n, 100 + rep), 1.0).unwrap()[(0, 0)])
            .collect();
        let mean = entries.iter().sum::<f64>() / 20.0;
        entries.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0
    };
    let ratio = spread(4000) / spread(2000);
    // the ratio of two 19-degree-of-freedom variance estimates around 1/2
    assert!((0.15..1.7).contains(&ratio), "variance ratio {ratio}");
}

#[test]
fn information_matches_twice_the_hessian_for_gaussian_car1() {
    let truth = DVector::from_vec(vec![-1.0, 1.0]);
    let space = car1_space();
    let y = car1_sample(&truth, 4000, 6);
    let h = estimate_h(&space, &truth, &y, 1.0).unwrap();
    let i = estimate_i(&space, &truth, &y, 1.0, None).unwrap();
    let rel = (&i - &h * 2.0).norm() / (&h * 2.0).norm();
    assert!(rel < 0.2, "‖Î − 2Ĥ‖/‖2Ĥ‖ = {rel}");
    let sandwich = sandwich_covariance(&h, &i).unwrap();
    assert!(linalg::min_sym_eigenvalue(&sandwich) > 0.0);
}

/// Root-mean-square of `‖NW − Γ₀‖_F / ‖Γ₀‖_F` for white scores with diagonal
/// covariance `S`: each lag contributes `w_j² (4 Σ S_aa² + 4 S_11 S_22) / n`.
fn white_deviation_rms(s: [f64; 2], n: usize, lag: usize) -> f64 {
    let w2: f64 = (1..=lag).map(|j| (1.0 - j as f64 / (lag + 1) as f64).powi(2)).sum();
    let per_lag = 4.0 * (s[0] * s[0] + s[1] * s[1]) + 4.0 * s[0] * s[1];
    (w2 * per_lag / n as f64).sqrt() / (s[0] * s[0] + s[1] * s[1]).sqrt()
}

#[test]
fn newey_west_on_white_scores_is_close_to_the_sample_covariance() {
    let n = 10_000;
    let lag = (n as f64).cbrt().floor() as usize;
    let mut mean_sq = 0.0;
    for rep in 0..10 {
        let mut rng = stream(33, rep, Purpose::Misc);
        let scores = DMatrix::from_fn(n, 2, |_, j| rng.sample::<f64, _>(StandardNormal) * (j + 1) as f64);
        let lr = newey_west(&scores, lag);
        assert!(linalg::min_sym_eigenvalue(&lr) >= -1e-10);
        let mean = DVector::from_fn(2, |j, _| scores.column(j).mean());
        let centered = DMatrix::from_fn(n, 2, |k, j| scores[(k, j)] - mean[j]);
        let gamma0 = centered.transpose() * &centered / n as f64;
        assert!(linalg::max_abs_diff(&newey_west(&scores, 0), &gamma0) < 1e-10);
        mean_sq += ((&lr - &gamma0).norm() / gamma0.norm()).powi(2) / 10.0;
    }
    let theory = white_deviation_rms([1.0, 4.0], n, lag);
    let rms = mean_sq.sqrt();
    assert!(rms < 1.5 * theory, "rms relative deviation {rms}, white-noise value {theory}");
}
