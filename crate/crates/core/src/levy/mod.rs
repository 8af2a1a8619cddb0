//! Lévy drivers (Brownian motion and normal inverse Gaussian), Euler–Maruyama
//! integration of the state equation and equidistant sampling of the output.

mod rng;
mod sample;
mod simulate;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;

pub use rng::{stream, Purpose};
pub use sample::Sample;
pub(crate) use sample::fmt_num;
pub use simulate::{
    euler_maruyama, exact_gaussian_sample, observe, simulate_sample, EulerPath, SimulationSettings,
};

/// Parameters of a multivariate NIG Lévy process at time 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NigParams {
    pub mu: DVector<f64>,
    pub alpha: f64,
    pub beta: DVector<f64>,
    pub delta: f64,
    /// Dependence matrix Δ (symmetric positive definite, det Δ = 1).
    pub dependence: DMatrix<f64>,
}

impl NigParams {
    pub fn new(
        mu: DVector<f64>,
        alpha: f64,
        beta: DVector<f64>,
        delta: f64,
        dependence: DMatrix<f64>,
    ) -> Result<Self> {
        let s = mu.len();
        if beta.len() != s || dependence.shape() != (s, s) {
            return Err(Error::InvalidParameter("NIG parameter dimensions differ".into()));
        }
        if !(alpha >= 0.0) || !(delta >= 0.0) {
            return Err(Error::InvalidParameter("NIG α and δ must be nonnegative".into()));
        }
        if linalg::max_abs_diff(&dependence, &dependence.transpose()) > 1e-12
            || linalg::min_sym_eigenvalue(&dependence) <= 0.0
        {
            return Err(Error::InvalidParameter("Δ must be symmetric positive definite".into()));
        }
        let det = dependence.determinant();
        if (det - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("det Δ must be 1, got {det}")));
        }
        let params = Self { mu, alpha, beta, delta, dependence };
        let k2 = params.kappa_squared();
        if !(k2 > 0.0) {
            return Err(Error::InvalidParameter(format!("κ² = α² − βᵀΔβ must be positive, got {k2}")));
        }
        Ok(params)
    }

    pub fn kappa_squared(&self) -> f64 {
        self.alpha * self.alpha - self.beta.dot(&(&self.dependence * &self.beta))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_squared().sqrt()
    }
}

/// Law of the driving Lévy process.
#[derive(Debug, Clone, PartialEq)]
pub enum DriverSpec {
    /// Brownian motion with covariance Σ per unit time.
    Brownian { sigma: DMatrix<f64> },
    Nig(NigParams),
}

impl DriverSpec {
    pub fn brownian(sigma: DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square()
            || linalg::max_abs_diff(&sigma, &sigma.transpose()) > 1e-12
            || linalg::min_sym_eigenvalue(&sigma) <= 0.0
        {
            return Err(Error::InvalidParameter(
                "Brownian covariance must be symmetric positive definite".into(),
            ));
        }
        Ok(DriverSpec::Brownian { sigma })
    }

    pub fn dim(&self) -> usize {
        match self {
            DriverSpec::Brownian { sigma } => sigma.nrows(),
            DriverSpec::Nig(p) => p.mu.len(),
        }
    }

    pub fn is_brownian(&self) -> bool {
        matches!(self, DriverSpec::Brownian { .. })
    }
}

/// Mean and covariance of `L(1)`.
///
/// NIG: mean `μ + δΔβ/κ`, covariance `δΔ/κ + δ(Δβ)(Δβ)ᵀ/κ³`.
pub fn driver_moments(spec: &DriverSpec) -> Result<(DVector<f64>, DMatrix<f64>)> {
    match spec {
        DriverSpec::Brownian { sigma } => Ok((DVector::zeros(sigma.nrows()), sigma.clone())),
        DriverSpec::Nig(p) => {
            let k2 = p.kappa_squared();
            if !(k2 > 0.0) {
                return Err(Error::InvalidParameter(format!("κ² must be positive, got {k2}")));
            }
            let kappa = k2.sqrt();
            let db = &p.dependence * &p.beta;
            let mean = &p.mu + &db * (p.delta / kappa);
            let cov = &p.dependence * (p.delta / kappa) + &db * db.transpose() * (p.delta / (kappa * k2));
            Ok((mean, cov))
        }
    }
}

/// Draws increments `L(t + dt) − L(t)` without per-draw allocation.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    dim: usize,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Brownian {
        /// lower Cholesky factor of Σ·dt, row-major
        factor: Vec<f64>,
    },
    Nig {
        drift: Vec<f64>,
        skew: Vec<f64>,
        /// Δ^{1/2}, row-major
        root: Vec<f64>,
        ig_mean: f64,
        ig_shape: f64,
    },
}

impl IncrementSampler {
    pub fn new(spec: &DriverSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let dim = spec.dim();
        let row_major = |m: &DMatrix<f64>| -> Vec<f64> {
            (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j))).map(|ij| m[ij]).collect()
        };
        let kind = match spec {
            DriverSpec::Brownian { sigma } => {
                let l = linalg::cholesky_lower(&(sigma * dt)).ok_or_else(|| {
                    Error::InvalidParameter("Brownian covariance is not positive definite".into())
                })?;
                SamplerKind::Brownian { factor: row_major(&l) }
            }
            DriverSpec::Nig(p) => {
                let kappa = p.kappa();
                if !(kappa > 0.0) {
                    return Err(Error::InvalidParameter("κ² must be positive".into()));
                }
                let scale = p.delta * dt;
                SamplerKind::Nig {
                    drift: (&p.mu * dt).as_slice().to_vec(),
                    skew: (&p.dependence * &p.beta).as_slice().to_vec(),
                    root: row_major(&linalg::sym_sqrt(&p.dependence)),
                    ig_mean: scale / kappa,
                    ig_shape: scale * scale,
                }
            }
        };
        Ok(Self { dim, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes one increment into `out` (length `dim`). `scratch` needs the same length.
    pub fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64], scratch: &mut [f64]) {
        let s = self.dim;
        for z in scratch.iter_mut().take(s) {
            *z = rng.sample(StandardNormal);
        }
        match &self.kind {
            SamplerKind::Brownian { factor } => {
                for i in 0..s {
                    out[i] = (0..=i).map(|j| factor[i * s + j] * scratch[j]).sum();
                }
            }
            SamplerKind::Nig { drift, skew, root, ig_mean, ig_shape } => {
                let z = inverse_gaussian(rng, *ig_mean, *ig_shape);
                let sz = z.sqrt();
                for i in 0..s {
                    let mixed: f64 = (0..s).map(|j| root[i * s + j] * scratch[j]).sum();
                    out[i] = drift[i] + z * skew[i] + sz * mixed;
                }
            }
        }
    }
}

/// Inverse Gaussian draw with mean `mean` and shape `shape` by the
/// Michael–Schucany–Haas transformation.
pub fn inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, shape: f64) -> f64 {
    let nu: f64 = rng.sample(StandardNormal);
    let t = mean * nu * nu / (2.0 * shape);
    // smaller root of the defining quadratic, written without cancellation
    let x = mean / (1.0 + t + (t * (t + 2.0)).sqrt());
    let u: f64 = rng.random();
    if u * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}

/// `count × s` matrix of i.i.d. increments over a step `dt`.
pub fn sample_increments<R: Rng + ?Sized>(
    spec: &DriverSpec,
    dt: f64,
    count: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let sampler = IncrementSampler::new(spec, dt)?;
    let s = sampler.dim();
    let mut out = DMatrix::zeros(count, s);
    let mut row = vec![0.0; s];
    let mut scratch = vec![0.0; s];
    for k in 0..count {
        sampler.draw_into(rng, &mut row, &mut scratch);
        for j in 0..s {
            out[(k, j)] = row[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_moments_are_trivial() {
        let spec = DriverSpec::brownian(DMatrix::identity(2, 2)).unwrap();
        let (m, c) = driver_moments(&spec).unwrap();
        assert_eq!(m, DVector::zeros(2));
        assert_eq!(c, DMatrix::identity(2, 2));
    }

    #[test]
    fn nig_rejects_bad_parameters() {
        let d = DMatrix::identity(2, 2);
        let z = DVector::zeros(2);
        // κ² = 1 − 2 < 0
        assert!(NigParams::new(z.clone(), 1.0, DVector::from_vec(vec![1.0, 1.0]), 1.0, d.clone()).is_err());
        // det Δ = 4
        assert!(NigParams::new(z.clone(), 3.0, z.clone(), 1.0, d * 2.0).is_err());
    }

    #[test]
    fn inverse_gaussian_mean() {
        let mut rng = stream(1, 0, Purpose::Misc);
        let n = 200_000;
        let (mean, shape) = (0.4, 0.3);
        let draws: Vec<f64> = (0..n).map(|_| inverse_gaussian(&mut rng, mean, shape)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
        // Var = mean³ / shape
        let se = (mean.powi(3) / shape / n as f64).sqrt();
        assert!((m - mean).abs() < 4.0 * se, "mean {m}");
        assert!((var / (mean.powi(3) / shape) - 1.0).abs() < 0.05, "var {var}");
        assert!(draws.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn increments_reject_bad_step() {
        let spec = DriverSpec::brownian(DMatrix::identity(1, 1)).unwrap();
        let mut rng = stream(1, 0, Purpose::Misc);
        assert!(sample_increments(&spec, 0.0, 10, &mut rng).is_err());
        assert!(sample_increments(&spec, -1.0, 10, &mut rng).is_err());
    }
}
