use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DriverSpec, IncrementSampler, Sample};
use crate::error::{Error, Result};
use crate::kalman;
use crate::linalg;
use crate::model::StateSpaceModel;

/// Integer ratio `num / den`, accepting rounding up to a relative 1e-9.
fn grid_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    if !(num > 0.0 && num.is_finite() && den > 0.0 && den.is_finite()) {
        return Err(Error::InvalidInput(format!("{what}: values must be positive and finite")));
    }
    let r = (num / den).round();
    if r < 1.0 || (r * den - num).abs() > 1e-9 * num.max(den) {
        return Err(Error::InvalidInput(format!(
            "{what}: {num} is not an integer multiple of {den}"
        )));
    }
    Ok(r as usize)
}

/// State path on the Euler grid, `X(0), X(step), …, X(T)`, stored row-major.
#[derive(Debug, Clone)]
pub struct EulerPath {
    step: f64,
    state_dim: usize,
    states: Vec<f64>,
    /// False when the drift matrix had an eigenvalue with nonnegative real part.
    pub stable: bool,
}

impl EulerPath {
    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of grid points including the initial state.
    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.state_dim..(k + 1) * self.state_dim]
    }

    pub fn horizon(&self) -> f64 {
        (self.len() - 1) as f64 * self.step
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.state_dim, &self.states)
    }
}

/// One Euler–Maruyama step `x ← x + A x·step + B ΔL`, in place.
struct EulerStepper {
    n: usize,
    s: usize,
    a_step: Vec<f64>,
    b: Vec<f64>,
    sampler: IncrementSampler,
    inc: Vec<f64>,
    scratch: Vec<f64>,
    next: Vec<f64>,
}

impl EulerStepper {
    fn new(model: &StateSpaceModel, spec: &DriverSpec, step: f64) -> Result<Self> {
        let (n, s) = (model.state_dim(), model.driver_dim());
        if spec.dim() != s {
            return Err(Error::InvalidInput(format!(
                "driver dimension {} does not match B with {} columns",
                spec.dim(),
                s
            )));
        }
        let a = model.a();
        let b = model.b();
        Ok(Self {
            n,
            s,
            a_step: (0..n * n).map(|idx| a[(idx / n, idx % n)] * step).collect(),
            b: (0..n * s).map(|idx| b[(idx / s, idx % s)]).collect(),
            sampler: IncrementSampler::new(spec, step)?,
            inc: vec![0.0; s],
            scratch: vec![0.0; s],
            next: vec![0.0; n],
        })
    }

    fn advance<R: Rng + ?Sized>(&mut self, x: &mut [f64], rng: &mut R) {
        let (n, s) = (self.n, self.s);
        self.sampler.draw_into(rng, &mut self.inc, &mut self.scratch);
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..n {
                acc += self.a_step[i * n + j] * x[j];
            }
            for j in 0..s {
                acc += self.b[i * s + j] * self.inc[j];
            }
            self.next[i] = acc;
        }
        x.copy_from_slice(&self.next);
    }
}

fn initial_state(model: &StateSpaceModel, x0: Option<&DVector<f64>>) -> Result<Vec<f64>> {
    match x0 {
        None => Ok(vec![0.0; model.state_dim()]),
        Some(v) if v.len() == model.state_dim() => Ok(v.as_slice().to_vec()),
        Some(v) => Err(Error::InvalidInput(format!(
            "initial state has length {}, expected {}",
            v.len(),
            model.state_dim()
        ))),
    }
}

/// Integrates `dX = A X dt + B dL` on `[0, horizon]` with the given Euler step.
/// `x0 = None` starts at the origin.
pub fn euler_maruyama<R: Rng + ?Sized>(
    model: &StateSpaceModel,
    spec: &DriverSpec,
    horizon: f64,
    step: f64,
    x0: Option<&DVector<f64>>,
    rng: &mut R,
) -> Result<EulerPath> {
    let steps = grid_ratio(horizon, step, "horizon")?;
    let mut stepper = EulerStepper::new(model, spec, step)?;
    let n = model.state_dim();
    let mut x = initial_state(model, x0)?;
    let mut states = Vec::with_capacity((steps + 1) * n);
    states.extend_from_slice(&x);
    for _ in 0..steps {
        stepper.advance(&mut x, rng);
        states.extend_from_slice(&x);
    }
    Ok(EulerPath {
        step,
        state_dim: n,
        states,
        stable: model.is_stable(),
    })
}

/// Reads `Y(kh) = C X(kh)` for `k = 1..floor(T/h)` off an Euler path.
pub fn observe(model: &StateSpaceModel, path: &EulerPath, h: f64) -> Result<Sample> {
    if path.state_dim() != model.state_dim() {
        return Err(Error::InvalidInput("path and model state dimensions differ".into()));
    }
    let ratio = grid_ratio(h, path.step(), "sampling distance")?;
    let n_obs = (path.len() - 1) / ratio;
    if n_obs == 0 {
        return Err(Error::InvalidInput(format!(
            "horizon {} is shorter than the sampling distance {h}",
            path.horizon()
        )));
    }
    let c = model.c();
    let d = c.nrows();
    let mut values = DMatrix::zeros(n_obs, d);
    for k in 1..=n_obs {
        let x = path.state(k * ratio);
        for i in 0..d {
            values[(k - 1, i)] = (0..x.len()).map(|j| c[(i, j)] * x[j]).sum();
        }
    }
    Sample::new(h, values)
}

/// Simulation grid for [`simulate_sample`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Fraction of the horizon whose observations are discarded.
    #[serde(default)]
    pub burn_in: f64,
}

fn default_step() -> f64 {
    0.01
}

fn default_h() -> f64 {
    1.0
}

impl SimulationSettings {
    pub fn new(horizon: f64, step: f64, h: f64) -> Self {
        Self { horizon, step, h, burn_in: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        grid_ratio(self.horizon, self.step, "horizon")?;
        grid_ratio(self.h, self.step, "sampling distance")?;
        if !(0.0..1.0).contains(&self.burn_in) {
            return Err(Error::InvalidInput(format!(
                "burn-in fraction must lie in [0, 1), got {}",
                self.burn_in
            )));
        }
        if self.horizon < self.h {
            return Err(Error::InvalidInput("horizon is shorter than the sampling distance".into()));
        }
        Ok(())
    }

    /// Number of observations kept after burn-in.
    pub fn n_obs(&self) -> usize {
        let total = (self.horizon / self.h + 1e-9).floor() as usize;
        total - self.burned(total)
    }

    fn burned(&self, total: usize) -> usize {
        ((self.burn_in * total as f64) + 1e-9).floor() as usize
    }
}

/// Euler–Maruyama simulation followed by sampling, without storing the dense
/// path. Produces the same draws as `observe(euler_maruyama(..))`.
pub fn simulate_sample<R: Rng + ?Sized>(
    model: &StateSpaceModel,
    spec: &DriverSpec,
    settings: &SimulationSettings,
    x0: Option<&DVector<f64>>,
    rng: &mut R,
) -> Result<Sample> {
    settings.validate()?;
    let steps = grid_ratio(settings.horizon, settings.step, "horizon")?;
    let ratio = grid_ratio(settings.h, settings.step, "sampling distance")?;
    let total = steps / ratio;
    let skip = settings.burned(total);
    let mut stepper = EulerStepper::new(model, spec, settings.step)?;
    let mut x = initial_state(model, x0)?;
    let c = model.c();
    let d = c.nrows();
    let mut values = DMatrix::zeros(total - skip, d);
    for k in 1..=total {
        for _ in 0..ratio {
            stepper.advance(&mut x, rng);
        }
        if k > skip {
            for i in 0..d {
                values[(k - skip - 1, i)] = (0..x.len()).map(|j| c[(i, j)] * x[j]).sum();
            }
        }
    }
    Sample::new(settings.h, values)
}

/// Exact sampling of a Brownian-driven model: `X(0)` from the stationary law,
/// then `X(kh) = e^{Ah} X((k−1)h) + N_k` with `N_k ~ N(0, Σ_h)`.
pub fn exact_gaussian_sample<R: Rng + ?Sized>(
    model: &StateSpaceModel,
    spec: &DriverSpec,
    h: f64,
    n: usize,
    rng: &mut R,
) -> Result<Sample> {
    let sigma = match spec {
        DriverSpec::Brownian { sigma } => sigma,
        DriverSpec::Nig(_) => {
            return Err(Error::Unsupported("exact sampling needs a Brownian driver".into()))
        }
    };
    if !(h > 0.0) || n == 0 {
        return Err(Error::InvalidInput("exact sampler needs h > 0 and n ≥ 1".into()));
    }
    if !model.is_stable() {
        return Err(Error::InvalidInput("exact sampler needs a stable model".into()));
    }
    let a = model.a();
    let b = model.b();
    let bsb = b * sigma * b.transpose();
    let stationary = linalg::solve_continuous_lyapunov(a, &bsb)?;
    let phi = kalman::matrix_exponential(&(a * h));
    let sigma_h = kalman::noise_covariance(a, b, sigma, h);
    let root0 = linalg::sym_sqrt(&stationary);
    let root_h = linalg::sym_sqrt(&sigma_h);
    let dim = a.nrows();
    let normal = |rng: &mut R| DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut x = &root0 * normal(rng);
    let c = model.c();
    let mut values = DMatrix::zeros(n, c.nrows());
    for k in 0..n {
        x = &phi * x + &root_h * normal(rng);
        values.set_row(k, &(c * &x).transpose());
    }
    Sample::new(h, values)
}
