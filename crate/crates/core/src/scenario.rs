//! The two-dimensional benchmark: an MCARMA model with Kronecker index
//! (1, 2), driven by correlated Brownian motion or an NIG process, and the
//! eight Echelon candidate spaces it is compared against.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::levy::{driver_moments, DriverSpec, NigParams};
use crate::linalg;
use crate::model::{KroneckerIndex, ParameterSpace};

/// Autoregressive (α) part shared by both true parameters.
pub const TRUE_ALPHA: [f64; 5] = [-1.0, -2.0, 1.0, -2.0, -3.0];
/// Moving-average coordinates of the MA(1) true parameter.
pub const TRUE_MA: [f64; 2] = [1.0, 2.0];

/// `(id, Kronecker index, MA cap)` of the eight candidate spaces.
pub const CANDIDATES: [(&str, [usize; 2], usize); 7] = [
    ("1", [1, 1], 0),
    ("2", [1, 2], 1),
    ("3", [1, 2], 0),
    ("4", [2, 1], 1),
    ("5", [2, 1], 0),
    ("6", [2, 2], 1),
    ("7", [2, 2], 0),
];

/// The eighth candidate, `m = (3, 2)` with MA cap 2.
pub const LARGEST: (&str, [usize; 2], usize) = ("8", [3, 2], 2);

/// NIG parameters of the benchmark driver.
pub fn nig_params() -> NigParams {
    let s31 = 31f64.sqrt();
    NigParams::new(
        DVector::from_vec(vec![-3.0 / (2.0 * s31), -2.0 / (2.0 * s31)]),
        3.0,
        DVector::from_vec(vec![1.0, 1.0]),
        1.0,
        DMatrix::from_row_slice(2, 2, &[1.25, -0.5, -0.5, 1.0]),
    )
    .expect("benchmark NIG parameters are valid")
}

/// Driver covariance, identical for both drivers.
pub fn driver_covariance() -> DMatrix<f64> {
    driver_moments(&DriverSpec::Nig(nig_params()))
        .expect("benchmark NIG parameters are valid")
        .1
}

pub fn nig_driver() -> DriverSpec {
    DriverSpec::Nig(nig_params())
}

pub fn brownian_driver() -> DriverSpec {
    DriverSpec::Brownian { sigma: driver_covariance() }
}

/// Lower triangle (row-major) of the Cholesky factor of the driver covariance.
pub fn true_chol() -> Vec<f64> {
    let l = linalg::cholesky_lower(&driver_covariance()).expect("covariance is positive definite");
    vec![l[(0, 0)], l[(1, 0)], l[(1, 1)]]
}

pub fn space(m: [usize; 2], ma_cap: usize) -> Result<ParameterSpace> {
    ParameterSpace::new(KroneckerIndex::new(m.to_vec())?, ma_cap)
}

/// All eight candidates in table order.
pub fn candidate_spaces() -> Result<Vec<(String, ParameterSpace)>> {
    CANDIDATES
        .iter()
        .chain(std::iter::once(&LARGEST))
        .map(|(id, m, q)| Ok((id.to_string(), space(*m, *q)?)))
        .collect()
}

/// Space "3": `m = (1, 2)`, MA degree 0, eight parameters.
pub fn ar_space() -> ParameterSpace {
    space([1, 2], 0).expect("valid space")
}

/// Space "2": `m = (1, 2)`, MA degree up to 1, ten parameters.
pub fn arma_space() -> ParameterSpace {
    space([1, 2], 1).expect("valid space")
}

/// True parameter of the MA-degree-0 model, in the coordinates of [`ar_space`].
pub fn theta_ar() -> DVector<f64> {
    DVector::from_iterator(8, TRUE_ALPHA.iter().copied().chain(true_chol()))
}

/// True parameter of the MA-degree-1 model, in the coordinates of [`arma_space`].
pub fn theta_arma() -> DVector<f64> {
    DVector::from_iterator(
        10,
        TRUE_ALPHA.iter().copied().chain(TRUE_MA).chain(true_chol()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::is_stable_minimal;

    #[test]
    fn parameter_counts() {
        let counts: Vec<usize> = candidate_spaces().unwrap().iter().map(|(_, s)| s.n_params()).collect();
        assert_eq!(counts, vec![7, 10, 8, 11, 9, 15, 11, 19]);
    }

    #[test]
    fn true_models_are_valid() {
        for (space, theta) in [(ar_space(), theta_ar()), (arma_space(), theta_arma())] {
            let model = space.build(&theta).unwrap();
            assert!(is_stable_minimal(&model, 1.0).ok());
            assert!(linalg::max_abs_diff(model.sigma_l(), &driver_covariance()) < 1e-14);
        }
    }

    #[test]
    fn ar_parameter_embeds_into_arma_space() {
        let outer = arma_space().transfer_from(&ar_space(), &theta_ar()).unwrap();
        assert_eq!(outer.as_slice()[5..7], [0.0, 0.0]);
    }
}
