use mcarma::model::{
    companion_realization, echelon_polynomials, is_stable_minimal, nesting_map, KroneckerIndex, ParameterSpace,
    PolynomialPair, StateSpaceModel,
};
use mcarma::{linalg, scenario};
use nalgebra::{Complex, DMatrix, DVector};
use proptest::prelude::*;

fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

fn test_points() -> [Complex<f64>; 3] {
    [Complex::new(1.0, 1.0), Complex::new(2.0, 0.0), Complex::new(0.0, 5.0)]
}

fn max_rel_diff(a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>) -> f64 {
    let scale = a.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

#[test]
fn companion_first_order() {
    let poly = PolynomialPair::new(vec![m(1, 1, &[2.0])], vec![m(1, 1, &[1.0])]).unwrap();
    let model = companion_realization(&poly);
    assert_eq!(model.a(), &m(1, 1, &[-2.0]));
    assert_eq!(model.b(), &m(1, 1, &[1.0]));
    assert_eq!(model.c(), &m(1, 1, &[1.0]));
}

#[test]
fn companion_second_order_without_ma() {
    let (a1, a2, b0) = (0.7, 0.3, 1.5);
    let poly = PolynomialPair::new(vec![m(1, 1, &[a1]), m(1, 1, &[a2])], vec![m(1, 1, &[b0])]).unwrap();
    let model = companion_realization(&poly);
    assert_eq!(model.a(), &m(2, 2, &[0.0, 1.0, -a2, -a1]));
    assert_eq!(model.b(), &m(2, 1, &[0.0, b0]));
    assert_eq!(model.c(), &m(1, 2, &[1.0, 0.0]));
}

#[test]
fn companion_second_order_with_ma() {
    let (a1, a2, b0, b1) = (0.7, 0.3, 1.5, -0.4);
    let poly = PolynomialPair::new(
        vec![m(1, 1, &[a1]), m(1, 1, &[a2])],
        vec![m(1, 1, &[b0]), m(1, 1, &[b1])],
    )
    .unwrap();
    let model = companion_realization(&poly);
    // β₁ = B₀, β₂ = −A₁β₁ + B₁
    assert_eq!(model.b(), &m(2, 1, &[b0, -a1 * b0 + b1]));
    // transfer function (b0 z + b1) / (z² + a1 z + a2)
    for z in test_points() {
        let tf = model.transfer_function(z).unwrap()[(0, 0)];
        let expected = (z * b0 + b1) / (z * z + z * a1 + a2);
        assert!((tf - expected).norm() < 1e-12 * expected.norm());
    }
}

#[test]
fn echelon_b_solves_t_b_equals_k() {
    let space = scenario::arma_space();
    let e = space.echelon_matrices(&scenario::theta_arma()).unwrap();
    assert!(linalg::max_abs_diff(&(&e.t * &e.b), &e.k) < 1e-13);
    assert_eq!(e.a.shape(), (3, 3));
    assert_eq!(e.c, m(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));
}

#[test]
fn echelon_polynomials_reproduce_the_transfer_function() {
    for (space, theta) in [(scenario::ar_space(), scenario::theta_ar()), (scenario::arma_space(), scenario::theta_arma())] {
        let model = space.build(&theta).unwrap();
        let polys = echelon_polynomials(&model, space.kronecker()).unwrap();
        let pair = polys.to_polynomial_pair(1e-12).unwrap();
        let companion = companion_realization(&pair);
        assert_eq!(companion.state_dim(), pair.ar_degree() * pair.dim());
        for z in test_points() {
            let direct = model.transfer_function(z).unwrap();
            assert!(max_rel_diff(&direct, &polys.transfer_function(z).unwrap()) < 1e-10);
            assert!(max_rel_diff(&direct, &companion.transfer_function(z).unwrap()) < 1e-10);
        }
    }
}

#[test]
fn ma_free_truth_has_vanishing_ma_coefficients() {
    let model = scenario::ar_space().build(&scenario::theta_ar()).unwrap();
    let polys = echelon_polynomials(&model, &KroneckerIndex::new(vec![1, 2]).unwrap()).unwrap();
    assert_eq!(polys.ma_degree(1e-12), 0);
}

#[test]
fn echelon_polynomials_reject_wrong_index() {
    let model = scenario::ar_space().build(&scenario::theta_ar()).unwrap();
    assert!(echelon_polynomials(&model, &KroneckerIndex::new(vec![2, 2]).unwrap()).is_err());
}

#[test]
fn stability_and_minimality_examples() {
    let sigma = m(1, 1, &[1.0]);
    let ok = StateSpaceModel::new(m(1, 1, &[-1.0]), m(1, 1, &[1.0]), m(1, 1, &[1.0]), sigma.clone()).unwrap();
    assert!(is_stable_minimal(&ok, 1.0).ok());
    let uncontrollable = StateSpaceModel::new(m(1, 1, &[-1.0]), m(1, 1, &[0.0]), m(1, 1, &[1.0]), sigma).unwrap();
    let report = is_stable_minimal(&uncontrollable, 1.0);
    assert!(report.stable && !report.minimal);
    assert_eq!(report.controllability_rank, 0);
    let truth = scenario::ar_space().build(&scenario::theta_ar()).unwrap();
    assert!(is_stable_minimal(&truth, 1.0).ok());
}

#[test]
fn build_is_bitwise_deterministic() {
    let space = scenario::arma_space();
    let a = space.build(&scenario::theta_arma()).unwrap();
    let b = space.build(&scenario::theta_arma()).unwrap();
    for (x, y) in [(a.a(), b.a()), (a.b(), b.b()), (a.c(), b.c()), (a.sigma_l(), b.sigma_l())] {
        assert!(x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn nested_builds_agree_for_random_parameters() {
    let inner = scenario::ar_space();
    let outer = scenario::arma_space();
    let nest = nesting_map(&inner, &outer).unwrap();
    assert!(linalg::max_abs_diff(&(nest.f().transpose() * nest.f()), &DMatrix::identity(8, 8)) == 0.0);
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    let mut uniform = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..100 {
        let theta = DVector::from_fn(8, |i, _| {
            let (lo, hi) = (inner.lower()[i], inner.upper()[i]);
            lo + uniform() * (hi - lo)
        });
        let a = inner.build(&theta);
        let b = outer.build(&nest.embed(&theta));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                assert!(linalg::max_abs_diff(a.a(), b.a()) < 1e-14);
                assert!(linalg::max_abs_diff(a.b(), b.b()) < 1e-14);
                assert!(linalg::max_abs_diff(a.c(), b.c()) < 1e-14);
                assert!(linalg::max_abs_diff(a.sigma_l(), b.sigma_l()) < 1e-14);
            }
            (Err(_), Err(_)) => {}
            (a, b) => panic!("builds disagree on validity: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }
}

fn perturbed(space: &ParameterSpace, base: &DVector<f64>, shifts: &[f64]) -> DVector<f64> {
    let cut = space.n_params() - space.n_chol();
    DVector::from_fn(base.len(), |i, _| if i < cut { base[i] + shifts[i % shifts.len()] } else { base[i] })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transfer_function_round_trip(shifts in prop::collection::vec(-0.3f64..0.3, 7)) {
        for (space, base) in [(scenario::ar_space(), scenario::theta_ar()), (scenario::arma_space(), scenario::theta_arma())] {
            let theta = perturbed(&space, &base, &shifts);
            let model = space.build(&theta).unwrap();
            prop_assume!(is_stable_minimal(&model, 1.0).ok());
            let polys = echelon_polynomials(&model, space.kronecker()).unwrap();
            let companion = companion_realization(&polys.to_polynomial_pair(1e-12).unwrap());
            for z in test_points() {
                let direct = model.transfer_function(z).unwrap();
                prop_assert!(max_rel_diff(&direct, &polys.transfer_function(z).unwrap()) < 1e-8);
                prop_assert!(max_rel_diff(&direct, &companion.transfer_function(z).unwrap()) < 1e-8);
            }
        }
    }

    #[test]
    fn companion_has_state_dimension_pd(coeffs in prop::collection::vec(-2.0f64..2.0, 12)) {
        let d = 2;
        let ar = vec![m(d, d, &coeffs[0..4]), m(d, d, &coeffs[4..8])];
        let mut b0 = m(d, d, &coeffs[8..12]);
        b0[(0, 0)] += 3.0;
        let poly = PolynomialPair::new(ar, vec![b0]).unwrap();
        let model = companion_realization(&poly);
        prop_assert_eq!(model.state_dim(), 4);
        prop_assert_eq!(model.c(), &m(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
    }
}
