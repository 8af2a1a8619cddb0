//! Sampling at spacing `h`, the steady-state Kalman filter and the Gaussian
//! quasi log-likelihood built from its innovations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy::Sample;
use crate::linalg;
use crate::model::{is_stable_minimal, ParameterSpace, StateSpaceModel};

/// Value returned for parameters outside the feasible region (plus a
/// violation magnitude).
pub const PENALTY: f64 = 1e10;

const RICCATI_TOL: f64 = 1e-12;
const RICCATI_MAX_ITER: usize = 100_000;
const RICCATI_POLISH: usize = 200;
const RICCATI_REG: f64 = 1e-10;
const MIN_INNOVATION_EIG: f64 = 1e-10;
const NEWTON_CHECKPOINTS: [usize; 5] = [200, 1_000, 5_000, 20_000, 50_000];
const NEWTON_MAX_ITER: usize = 60;

/// `e^M` by scaling and squaring with a Padé approximant.
pub fn matrix_exponential(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// `Σ_h = ∫₀^h e^{Au} B Σᴸ Bᵀ e^{Aᵀu} du` via one exponential of the
/// block matrix `[[−A, BΣᴸBᵀ], [0, Aᵀ]]`.
pub fn noise_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma_l: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let q = b * sigma_l * b.transpose();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a));
    block.view_mut((0, n), (n, n)).copy_from(&q);
    block.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = matrix_exponential(&(block * h));
    let g12 = e.view((0, n), (n, n)).clone_owned();
    let f22 = e.view((n, n), (n, n)).clone_owned();
    linalg::symmetrize(&(f22.transpose() * g12))
}

/// Steady-state solution of the filtering Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub omega: DMatrix<f64>,
    /// Kalman gain `K = ΦΩCᵀ V⁻¹`.
    pub gain: DMatrix<f64>,
    /// Innovation covariance `V = CΩCᵀ`.
    pub innovation_cov: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `‖Ω − [ΦΩΦᵀ + Σ_h − (ΦΩCᵀ)(CΩCᵀ)⁻¹(ΦΩCᵀ)ᵀ]‖_F`, or `∞` if `CΩCᵀ` is singular.
pub fn riccati_residual(phi: &DMatrix<f64>, sigma_h: &DMatrix<f64>, c: &DMatrix<f64>, omega: &DMatrix<f64>) -> f64 {
    match riccati_map(phi, sigma_h, c, omega) {
        Ok(next) => (omega - next).norm(),
        Err(_) => f64::INFINITY,
    }
}

fn riccati_map(
    phi: &DMatrix<f64>,
    sigma_h: &DMatrix<f64>,
    c: &DMatrix<f64>,
    omega: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let g = phi * omega * c.transpose();
    let v = c * omega * c.transpose();
    let chol = innovation_cholesky(&v)?;
    let vinv_gt = chol.solve(&g.transpose());
    Ok(linalg::symmetrize(&(phi * omega * phi.transpose() + sigma_h - g * vinv_gt)))
}

fn innovation_cholesky(v: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularInnovation { min_eigenvalue: f64::NAN });
    }
    let min_eig = linalg::min_sym_eigenvalue(v);
    if !(min_eig >= MIN_INNOVATION_EIG) {
        return Err(Error::SingularInnovation { min_eigenvalue: min_eig });
    }
    let v = linalg::symmetrize(v);
    if let Some(chol) = nalgebra::Cholesky::new(v.clone()) {
        return Ok(chol);
    }
    let d = v.nrows();
    let bump = 1e-12 * v.trace() / d as f64;
    nalgebra::Cholesky::new(&v + DMatrix::identity(d, d) * bump)
        .ok_or(Error::SingularInnovation { min_eigenvalue: min_eig })
}

/// Solves `Ω = F Ω Fᵀ + Q` (discrete Stein equation) by vectorization.
pub fn solve_stein(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = f.nrows();
    let lhs = DMatrix::identity(n * n, n * n) - f.kronecker(f);
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = lhs.lu().solve(&rhs)?;
    Some(linalg::symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

fn gain_of(phi: &DMatrix<f64>, c: &DMatrix<f64>, omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let v = c * omega * c.transpose();
    let chol = innovation_cholesky(&v)?;
    Ok(chol.solve(&(c * omega * phi.transpose())).transpose())
}

/// Newton (Hewer) steps from the gain of `omega`: with `F = Φ − K C`, solve
/// `Ω = F Ω Fᵀ + Σ_h`, update `K`, repeat. The result is accepted only if it
/// meets the fixed-point stopping rule, is positive semidefinite and its gain
/// is stabilizing.
fn newton_refine(
    phi: &DMatrix<f64>,
    sigma_h: &DMatrix<f64>,
    c: &DMatrix<f64>,
    omega: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, usize)> {
    let mut omega = omega.clone();
    for it in 1..=NEWTON_MAX_ITER {
        let k = gain_of(phi, c, &omega).ok()?;
        let next = solve_stein(&(phi - &k * c), sigma_h)?;
        if !next.iter().all(|v| v.is_finite()) {
            return None;
        }
        omega = next;
        let step = (riccati_map(phi, sigma_h, c, &omega).ok()? - &omega).norm();
        if step < RICCATI_TOL * (1.0 + omega.norm()) {
            let k = gain_of(phi, c, &omega).ok()?;
            let stable = linalg::spectral_radius(&(phi - &k * c)) < 1.0;
            let psd = linalg::min_sym_eigenvalue(&omega) >= -1e-10 * (1.0 + omega.norm());
            return (stable && psd).then_some((omega, it));
        }
    }
    None
}

/// Fixed-point iteration of the Riccati map from `Ω₀ = Σ_h + 1e-10·I` until
/// successive iterates differ by less than `1e-12·(1 + ‖Ω‖)`; a few extra
/// iterations are taken while the step keeps shrinking.
///
/// When the contraction is slow (closed-loop spectral radius near one), the
/// iteration is accelerated by Newton steps on the same equation; the result
/// still satisfies the fixed-point stopping rule above.
pub fn riccati_solve(phi: &DMatrix<f64>, sigma_h: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<RiccatiSolution> {
    let n = phi.nrows();
    if phi.ncols() != n || sigma_h.shape() != (n, n) || c.ncols() != n {
        return Err(Error::InvalidInput("Riccati inputs have inconsistent shapes".into()));
    }
    let mut omega = sigma_h + DMatrix::identity(n, n) * RICCATI_REG;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    let mut converged = false;
    while iterations < RICCATI_MAX_ITER {
        let next = riccati_map(phi, sigma_h, c, &omega)?;
        iterations += 1;
        let step = (&next - &omega).norm();
        if !step.is_finite() {
            return Err(Error::RiccatiDivergence { iterations, last_step: step });
        }
        omega = next;
        last_step = step;
        if step < RICCATI_TOL * (1.0 + omega.norm()) {
            converged = true;
            break;
        }
        if NEWTON_CHECKPOINTS.contains(&iterations) {
            // the stationary state covariance lies above the stabilizing
            // solution, which keeps Newton on the right branch
            let attempt = (iterations == NEWTON_CHECKPOINTS[0])
                .then(|| solve_stein(phi, sigma_h))
                .flatten()
                .and_then(|start| newton_refine(phi, sigma_h, c, &start))
                .or_else(|| newton_refine(phi, sigma_h, c, &omega));
            if let Some((refined, steps)) = attempt {
                iterations += steps;
                last_step = (riccati_map(phi, sigma_h, c, &refined)? - &refined).norm();
                omega = refined;
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::RiccatiDivergence { iterations, last_step });
    }
    // rounding-level refinement; helps finite differences of the likelihood
    for _ in 0..RICCATI_POLISH {
        if last_step == 0.0 {
            break;
        }
        let next = riccati_map(phi, sigma_h, c, &omega)?;
        let step = (&next - &omega).norm();
        if !(step < last_step) {
            break;
        }
        omega = next;
        last_step = step;
        iterations += 1;
    }
    let v = linalg::symmetrize(&(c * &omega * c.transpose()));
    let chol = innovation_cholesky(&v)?;
    let g = phi * &omega * c.transpose();
    let gain = chol.solve(&g.transpose()).transpose();
    let residual = riccati_residual(phi, sigma_h, c, &omega);
    Ok(RiccatiSolution { omega, gain, innovation_cov: v, iterations, residual })
}

/// A model sampled at spacing `h` together with its steady-state filter.
#[derive(Debug, Clone)]
pub struct DiscretizedModel {
    h: f64,
    phi: DMatrix<f64>,
    sigma_h: DMatrix<f64>,
    c: DMatrix<f64>,
    riccati: RiccatiSolution,
    closed_loop_radius: f64,
    log_det_v: f64,
    // flat row-major copies for the filter loop
    phi_rm: Vec<f64>,
    gain_rm: Vec<f64>,
    c_rm: Vec<f64>,
    /// inverse of the lower Cholesky factor of V, row-major
    l_inv_rm: Vec<f64>,
}

impl DiscretizedModel {
    pub fn new(model: &StateSpaceModel, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("sampling distance must be positive, got {h}")));
        }
        let phi = matrix_exponential(&(model.a() * h));
        let sigma_h = noise_covariance(model.a(), model.b(), model.sigma_l(), h);
        Self::from_parts(h, phi, sigma_h, model.c().clone())
    }

    pub fn from_parts(h: f64, phi: DMatrix<f64>, sigma_h: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let riccati = riccati_solve(&phi, &sigma_h, &c)?;
        let closed = &phi - &riccati.gain * &c;
        let closed_loop_radius = linalg::spectral_radius(&closed);
        if !(closed_loop_radius < 1.0) {
            return Err(Error::UnstableFilter { spectral_radius: closed_loop_radius });
        }
        let chol = innovation_cholesky(&riccati.innovation_cov)?;
        let l = chol.l();
        let log_det_v = 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let d = l.nrows();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or(Error::SingularInnovation { min_eigenvalue: 0.0 })?;
        let rm = |m: &DMatrix<f64>| -> Vec<f64> { m.transpose().as_slice().to_vec() };
        Ok(Self {
            h,
            phi_rm: rm(&phi),
            gain_rm: rm(&riccati.gain),
            c_rm: rm(&c),
            l_inv_rm: rm(&l_inv),
            phi,
            sigma_h,
            c,
            riccati,
            closed_loop_radius,
            log_det_v,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn sigma_h(&self) -> &DMatrix<f64> {
        &self.sigma_h
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.riccati.omega
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.riccati.gain
    }

    pub fn innovation_cov(&self) -> &DMatrix<f64> {
        &self.riccati.innovation_cov
    }

    pub fn riccati(&self) -> &RiccatiSolution {
        &self.riccati
    }

    pub fn closed_loop_radius(&self) -> f64 {
        self.closed_loop_radius
    }

    pub fn log_det_v(&self) -> f64 {
        self.log_det_v
    }

    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `d log 2π + log det V`, the data-free part of every per-step term.
    pub fn constant_term(&self) -> f64 {
        self.output_dim() as f64 * (2.0 * PI).ln() + self.log_det_v
    }

    fn check_sample(&self, sample: &Sample, x_init: Option<&DVector<f64>>) -> Result<()> {
        if sample.dim() != self.output_dim() {
            return Err(Error::InvalidInput(format!(
                "sample has dimension {}, model output has {}",
                sample.dim(),
                self.output_dim()
            )));
        }
        if let Some(x) = x_init {
            if x.len() != self.state_dim() {
                return Err(Error::InvalidInput("initial state estimate has the wrong length".into()));
            }
        }
        Ok(())
    }

    /// Runs the prediction-error recursion, calling `visit(k, ε_k, q_k)` with
    /// the quadratic form `q_k = ε_kᵀV⁻¹ε_k`.
    fn run<F: FnMut(usize, &[f64], f64)>(&self, sample: &Sample, x_init: Option<&DVector<f64>>, mut visit: F) {
        let n = self.state_dim();
        let d = self.output_dim();
        let mut x: Vec<f64> = match x_init {
            Some(v) => v.as_slice().to_vec(),
            None => vec![0.0; n],
        };
        let mut next = vec![0.0; n];
        let mut eps = vec![0.0; d];
        let (phi, gain, c, l_inv) = (&self.phi_rm, &self.gain_rm, &self.c_rm, &self.l_inv_rm);
        for k in 0..sample.len() {
            for i in 0..d {
                let mut pred = 0.0;
                for j in 0..n {
                    pred += c[i * n + j] * x[j];
                }
                eps[i] = sample.get(k, i) - pred;
            }
            let mut quad = 0.0;
            for i in 0..d {
                let mut w = 0.0;
                for j in 0..=i {
                    w += l_inv[i * d + j] * eps[j];
                }
                quad += w * w;
            }
            visit(k, &eps, quad);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += phi[i * n + j] * x[j];
                }
                for j in 0..d {
                    acc += gain[i * d + j] * eps[j];
                }
                next[i] = acc;
            }
            std::mem::swap(&mut x, &mut next);
        }
    }

    /// Mean of the per-step terms, without storing innovations.
    pub fn objective(&self, sample: &Sample) -> Result<f64> {
        self.check_sample(sample, None)?;
        let mut total = 0.0;
        self.run(sample, None, |_, _, q| total += q);
        Ok(self.constant_term() + total / sample.len() as f64)
    }

    /// Per-step terms `l_k` only.
    pub fn per_step_terms(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.check_sample(sample, None)?;
        let c0 = self.constant_term();
        let mut out = Vec::with_capacity(sample.len());
        self.run(sample, None, |_, _, q| out.push(c0 + q));
        Ok(out)
    }

    pub fn dump(&self) -> FilterDump {
        FilterDump {
            h: self.h,
            omega: linalg::to_rows(self.omega()),
            gain: linalg::to_rows(self.gain()),
            innovation_cov: linalg::to_rows(self.innovation_cov()),
            riccati_residual: self.riccati.residual,
            riccati_iterations: self.riccati.iterations,
            closed_loop_spectral_radius: self.closed_loop_radius,
        }
    }
}

/// Steady-state filter quantities, serialized for diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FilterDump {
    pub h: f64,
    pub omega: Vec<Vec<f64>>,
    pub gain: Vec<Vec<f64>>,
    pub innovation_cov: Vec<Vec<f64>>,
    pub riccati_residual: f64,
    pub riccati_iterations: usize,
    pub closed_loop_spectral_radius: f64,
}

/// Output of [`filter`].
#[derive(Debug, Clone)]
pub struct LikelihoodValue {
    /// `L̂ = mean(per_step)`.
    pub value: f64,
    /// Row `k` is the innovation of observation `k`.
    pub innovations: DMatrix<f64>,
    pub per_step: DVector<f64>,
}

/// Innovation filter started at `x̂₁ = x_init` (zero by default).
pub fn filter(disc: &DiscretizedModel, sample: &Sample, x_init: Option<&DVector<f64>>) -> Result<LikelihoodValue> {
    disc.check_sample(sample, x_init)?;
    let n = sample.len();
    let d = disc.output_dim();
    let c0 = disc.constant_term();
    let mut innovations = DMatrix::zeros(n, d);
    let mut per_step = DVector::zeros(n);
    disc.run(sample, x_init, |k, eps, q| {
        for (i, e) in eps.iter().enumerate() {
            innovations[(k, i)] = *e;
        }
        per_step[k] = c0 + q;
    });
    Ok(LikelihoodValue { value: per_step.mean(), innovations, per_step })
}

/// Why a parameter was assigned a penalty instead of a likelihood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Infeasibility {
    OutsideBox,
    Unstable,
    NotMinimal,
    Numerical(String),
}

/// One objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub infeasible: Option<Infeasibility>,
}

impl Evaluation {
    pub fn is_feasible(&self) -> bool {
        self.infeasible.is_none()
    }
}

/// The map `θ ↦ L̂(θ, Yⁿ)` over one candidate space, with penalties.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    space: &'a ParameterSpace,
    sample: &'a Sample,
}

impl<'a> Objective<'a> {
    pub fn new(space: &'a ParameterSpace, sample: &'a Sample) -> Result<Self> {
        if sample.dim() != space.kronecker().dim() {
            return Err(Error::InvalidInput(format!(
                "sample dimension {} does not match the space ({})",
                sample.dim(),
                space.kronecker().dim()
            )));
        }
        Ok(Self { space, sample })
    }

    pub fn space(&self) -> &'a ParameterSpace {
        self.space
    }

    pub fn sample(&self) -> &'a Sample {
        self.sample
    }

    /// Discretized model at θ, or the reason θ is infeasible and its penalty.
    pub fn discretize(&self, theta: &DVector<f64>) -> std::result::Result<DiscretizedModel, Evaluation> {
        let penalty = |extra: f64, why: Infeasibility| Evaluation { value: PENALTY + extra, infeasible: Some(why) };
        if theta.len() != self.space.n_params() || theta.iter().any(|v| !v.is_finite()) {
            return Err(penalty(1.0, Infeasibility::Numerical("malformed parameter".into())));
        }
        let viol = self.space.box_violation(theta);
        if viol > 0.0 {
            return Err(penalty(viol, Infeasibility::OutsideBox));
        }
        let model = self
            .space
            .build_unchecked(theta)
            .map_err(|e| penalty(1.0, Infeasibility::Numerical(e.to_string())))?;
        let report = is_stable_minimal(&model, self.sample.h());
        if !report.stable {
            return Err(penalty(report.violation.max(f64::MIN_POSITIVE), Infeasibility::Unstable));
        }
        if !report.minimal {
            return Err(penalty(1.0, Infeasibility::NotMinimal));
        }
        DiscretizedModel::new(&model, self.sample.h())
            .map_err(|e| penalty(1.0, Infeasibility::Numerical(e.to_string())))
    }

    pub fn evaluate(&self, theta: &DVector<f64>) -> Evaluation {
        match self.discretize(theta) {
            Ok(disc) => match disc.objective(self.sample) {
                Ok(v) if v.is_finite() => Evaluation { value: v, infeasible: None },
                Ok(_) => Evaluation {
                    value: PENALTY + 1.0,
                    infeasible: Some(Infeasibility::Numerical("non-finite likelihood".into())),
                },
                Err(e) => Evaluation {
                    value: PENALTY + 1.0,
                    infeasible: Some(Infeasibility::Numerical(e.to_string())),
                },
            },
            Err(eval) => eval,
        }
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        self.evaluate(theta).value
    }

    /// Per-step terms at a feasible θ.
    pub fn per_step(&self, theta: &DVector<f64>) -> Option<Vec<f64>> {
        self.discretize(theta).ok()?.per_step_terms(self.sample).ok()
    }
}

/// `L̂(θ, Yⁿ)`, or a value of at least [`PENALTY`] when θ is infeasible.
pub fn quasi_log_likelihood(space: &ParameterSpace, theta: &DVector<f64>, sample: &Sample) -> Result<f64> {
    Ok(Objective::new(space, sample)?.value(theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_of_zero_and_diagonal() {
        assert_eq!(matrix_exponential(&DMatrix::zeros(3, 3)), DMatrix::identity(3, 3));
        let e = matrix_exponential(&DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0])));
        assert!((e[(0, 0)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((e[(1, 1)] - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn scalar_noise_covariance() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let s = noise_covariance(&(-&one), &one, &one, 1.0);
        assert!((s[(0, 0)] - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-14);
        let small = noise_covariance(&(-&one), &one, &one, 1e-6);
        assert!((small[(0, 0)] / 1e-6 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn scalar_riccati() {
        let phi = DMatrix::from_element(1, 1, 0.6);
        let q = DMatrix::from_element(1, 1, 0.8);
        let c = DMatrix::identity(1, 1);
        let sol = riccati_solve(&phi, &q, &c).unwrap();
        assert!((sol.omega[(0, 0)] - 0.8).abs() < 1e-12);
        assert!((sol.gain[(0, 0)] - 0.6).abs() < 1e-12);
        assert!(sol.residual < 1e-9);
    }

    #[test]
    fn zero_transition_riccati() {
        let phi = DMatrix::zeros(2, 2);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let sol = riccati_solve(&phi, &q, &c).unwrap();
        assert!(linalg::max_abs_diff(&sol.omega, &q) < 1e-12);
        assert!(sol.gain.norm() < 1e-14);
        assert!((sol.innovation_cov[(0, 0)] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn slow_contraction_is_accelerated() {
        // the noise is nearly rank one along a direction whose transfer
        // function has a zero near the unit circle, so plain iteration
        // contracts very slowly
        let phi = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.5]));
        let b = DMatrix::from_column_slice(2, 1, &[1.0, -1.0 / 3.0]);
        let q = &b * b.transpose() + DMatrix::identity(2, 2) * 1e-6;
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let sol = riccati_solve(&phi, &q, &c).unwrap();
        assert!(sol.iterations < 1000, "{}", sol.iterations);
        let radius = linalg::spectral_radius(&(&phi - &sol.gain * &c));
        assert!(radius > 0.99 && radius < 1.0, "{radius}");

        let mut omega = &q + DMatrix::identity(2, 2) * RICCATI_REG;
        let mut plain = 0;
        loop {
            let next = riccati_map(&phi, &q, &c, &omega).unwrap();
            plain += 1;
            let step = (&next - &omega).norm();
            omega = next;
            if step < RICCATI_TOL * (1.0 + omega.norm()) {
                break;
            }
        }
        assert!(plain > 2000, "{plain}");
        assert!((&omega - &sol.omega).norm() < 1e-8 * (1.0 + omega.norm()));
    }

    #[test]
    fn stein_solution() {
        let f = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]);
        let x = solve_stein(&f, &q).unwrap();
        assert!((&f * &x * f.transpose() + &q - &x).norm() < 1e-13);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let phi = DMatrix::identity(2, 2) * 0.5;
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(matches!(riccati_solve(&phi, &q, &c), Err(Error::SingularInnovation { .. })));
    }

    #[test]
    fn zero_gain_filter_returns_observations() {
        let phi = DMatrix::zeros(1, 1);
        let q = DMatrix::from_element(1, 1, 2.0);
        let disc = DiscretizedModel::from_parts(1.0, phi, q, DMatrix::identity(1, 1)).unwrap();
        let values = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let sample = Sample::new(1.0, values.clone()).unwrap();
        let lik = filter(&disc, &sample, None).unwrap();
        assert_eq!(lik.innovations, values);
        let expect = (2.0 * PI).ln() + 2.0f64.ln() + (1.0 + 4.0 + 0.25) / 3.0 / 2.0;
        assert!((lik.value - expect).abs() < 1e-14);
        assert!((disc.objective(&sample).unwrap() - lik.value).abs() < 1e-14);
    }
}
