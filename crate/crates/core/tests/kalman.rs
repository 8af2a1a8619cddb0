use mcarma::kalman::{
    filter, matrix_exponential, noise_covariance, quasi_log_likelihood, riccati_residual, DiscretizedModel, PENALTY,
};
use mcarma::levy::{exact_gaussian_sample, stream, Purpose, Sample};
use mcarma::model::StateSpaceModel;
use mcarma::{linalg, scenario};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const LOG_2PI: f64 = 1.8378770664093453;

fn benchmark() -> StateSpaceModel {
    scenario::ar_space().build(&scenario::theta_ar()).unwrap()
}

fn gaussian_sample(model: &StateSpaceModel, n: usize, seed: u64, rep: u64) -> Sample {
    exact_gaussian_sample(model, &scenario::brownian_driver(), 1.0, n, &mut stream(seed, rep, Purpose::ExactSampler))
        .unwrap()
}

/// Adaptive Simpson quadrature of a scalar function.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

#[test]
fn exponential_inverse_identity() {
    let mut rng = stream(21, 0, Purpose::Misc);
    for _ in 0..10 {
        let m = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let prod = matrix_exponential(&m) * matrix_exponential(&(-&m));
        assert!(linalg::max_abs_diff(&prod, &DMatrix::identity(3, 3)) < 1e-10);
    }
}

#[test]
fn noise_covariance_matches_quadrature() {
    let mut rng = stream(22, 0, Purpose::Misc);
    let mut tested = 0;
    while tested < 5 {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.5..1.0)) - DMatrix::identity(3, 3);
        if linalg::eigenvalues(&a).iter().any(|(re, _)| *re >= -0.05) {
            continue;
        }
        tested += 1;
        let b = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let sigma = scenario::driver_covariance();
        let q = &b * &sigma * b.transpose();
        let h = 0.7;
        let block = noise_covariance(&a, &b, &sigma, h);
        for i in 0..3 {
            for j in 0..3 {
                let f = |u: f64| {
                    let e = matrix_exponential(&(&a * u));
                    (&e * &q * e.transpose())[(i, j)]
                };
                let quad = simpson(&f, 0.0, h, 1e-13);
                assert!((block[(i, j)] - quad).abs() < 1e-9, "({i},{j}): {} vs {quad}", block[(i, j)]);
            }
        }
    }
}

#[test]
fn noise_covariance_small_step_ratio() {
    let model = benchmark();
    let q = model.b() * model.sigma_l() * model.b().transpose();
    let h = 1e-6;
    let ratio = noise_covariance(model.a(), model.b(), model.sigma_l(), h) / h;
    assert!(linalg::max_abs_diff(&ratio, &q) < 1e-4 * q.amax());
    let scalar = noise_covariance(&DMatrix::from_element(1, 1, -1.0), &DMatrix::identity(1, 1), &DMatrix::identity(1, 1), 1.0);
    assert!((scalar[(0, 0)] - (1.0 - (-2f64).exp()) / 2.0).abs() < 1e-14);
}

#[test]
fn benchmark_filter_satisfies_its_contract() {
    let disc = DiscretizedModel::new(&benchmark(), 1.0).unwrap();
    let omega = disc.omega();
    assert!(riccati_residual(disc.phi(), disc.sigma_h(), disc.c(), omega) < 1e-9 * (1.0 + omega.norm()));
    let v = disc.innovation_cov();
    assert!(linalg::max_abs_diff(v, &v.transpose()) < 1e-12);
    assert!(linalg::min_sym_eigenvalue(v) > 0.0);
    assert!(disc.closed_loop_radius() < 1.0);
    assert!(linalg::max_abs_diff(disc.gain(), &(disc.phi() * omega * disc.c().transpose() * v.clone().try_inverse().unwrap())) < 1e-10);
}

#[test]
fn innovations_are_white_with_covariance_v() {
    let model = benchmark();
    let disc = DiscretizedModel::new(&model, 1.0).unwrap();
    let v = disc.innovation_cov().clone();
    let constant = 2.0 * LOG_2PI + disc.log_det_v();
    let (mut cov_err, mut lag1_max, mut mean_l, mut var_l) = (0.0, 0.0f64, 0.0, 0.0);
    let n = 2000;
    for rep in 0..20 {
        let y = gaussian_sample(&model, n, 23, rep);
        let out = filter(&disc, &y, None).unwrap();
        let e = &out.innovations;
        let cov = e.transpose() * e / n as f64;
        cov_err += (&cov - &v).norm() / v.norm() / 20.0;
        let lag1 = DMatrix::from_fn(2, 2, |i, j| (1..n).map(|k| e[(k, i)] * e[(k - 1, j)]).sum::<f64>() / n as f64);
        let s = DMatrix::from_fn(2, 2, |i, j| (v[(i, i)] * v[(j, j)]).sqrt());
        lag1_max = lag1_max.max(lag1.component_div(&s).amax() * (n as f64).sqrt());
        assert!(out.per_step.iter().all(|l| *l >= constant - 1e-12));
        mean_l += out.value / 20.0;
        var_l += out.per_step.variance() / 20.0;
    }
    assert!(cov_err < 0.1, "relative covariance error {cov_err}");
    // normalized lag-1 autocorrelations are approximately N(0, 1)
    assert!(lag1_max < 4.0, "max normalized lag-1 autocorrelation {lag1_max}");
    let expected = constant + 2.0;
    let se = (var_l / (20.0 * n as f64)).sqrt();
    assert!((mean_l - expected).abs() < 3.0 * se, "mean {mean_l} vs {expected} (se {se})");
}

#[test]
fn likelihood_matches_dense_gaussian_oracle() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let ou = StateSpaceModel::new(-one.clone(), one.clone(), one.clone(), one.clone()).unwrap();
    let spec = mcarma::levy::DriverSpec::brownian(one).unwrap();
    let n = 200;
    let y = exact_gaussian_sample(&ou, &spec, 1.0, n, &mut stream(24, 0, Purpose::ExactSampler)).unwrap();
    let disc = DiscretizedModel::new(&ou, 1.0).unwrap();
    let approx = disc.objective(&y).unwrap();
    let gamma = DMatrix::from_fn(n, n, |i, j| (-(i as f64 - j as f64).abs()).exp() / 2.0);
    let chol = gamma.cholesky().unwrap();
    let x = DVector::from_column_slice(y.values().as_slice());
    let quad = x.dot(&chol.solve(&x));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let exact = (n as f64 * LOG_2PI + log_det + quad) / n as f64;
    assert!((approx - exact).abs() < 0.02 * exact.abs(), "{approx} vs {exact}");
}

#[test]
fn initial_state_is_forgotten() {
    let model = benchmark();
    let disc = DiscretizedModel::new(&model, 1.0).unwrap();
    let y = gaussian_sample(&model, 4000, 25, 0);
    let start = DVector::from_element(3, 10.0);
    let zero = filter(&disc, &y, None).unwrap();
    let far = filter(&disc, &y, Some(&start)).unwrap();
    assert!((zero.value - disc.objective(&y).unwrap()).abs() < 1e-12);
    let gap: Vec<f64> = zero.per_step.iter().zip(far.per_step.iter()).map(|(a, b)| (a - b).abs()).collect();
    assert!(gap[200..].iter().all(|g| *g < 1e-6), "late per-step gap {}", gap[200..].iter().fold(0.0f64, |m, g| m.max(*g)));
    // the accumulated gap is fixed by the early terms, so the mean gap decays like 1/n
    let total: f64 = zero.per_step.iter().zip(far.per_step.iter()).map(|(a, b)| b - a).sum();
    let short = y.truncated(2000).unwrap();
    let n_gap = 2000.0 * (filter(&disc, &short, Some(&start)).unwrap().value - filter(&disc, &short, None).unwrap().value);
    assert!((n_gap - total).abs() < 1e-6 * total.abs().max(1.0), "{n_gap} vs {total}");
}

#[test]
fn unstable_parameter_is_penalized() {
    let space = scenario::ar_space();
    let mut theta = scenario::theta_ar();
    theta[0] = 5.0;
    let y = gaussian_sample(&benchmark(), 100, 26, 0);
    assert!(quasi_log_likelihood(&space, &theta, &y).unwrap() >= PENALTY);
}

#[test]
fn wrong_parameter_has_larger_mean_likelihood() {
    let space = scenario::ar_space();
    let truth = scenario::theta_ar();
    let mut wrong = truth.clone();
    wrong[2] += 0.3;
    wrong[4] -= 0.3;
    let model = benchmark();
    let (mut at_truth, mut at_wrong) = (0.0, 0.0);
    for rep in 0..50 {
        let y = gaussian_sample(&model, 2000, 27, rep);
        at_truth += quasi_log_likelihood(&space, &truth, &y).unwrap() / 50.0;
        at_wrong += quasi_log_likelihood(&space, &wrong, &y).unwrap() / 50.0;
    }
    assert!(at_wrong < PENALTY && at_wrong > at_truth, "{at_wrong} vs {at_truth}");
}
