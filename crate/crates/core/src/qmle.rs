//! Quasi maximum likelihood estimation: multi-start bounded Nelder–Mead on
//! the Kalman objective, plus finite-difference estimates of the Hessian `H`
//! and the long-run score covariance `I`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{Objective, PENALTY};
use crate::levy::Sample;
use crate::linalg;
use crate::model::ParameterSpace;

/// Optimizer and estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Starts besides the warm starts: the box center, then Halton points.
    pub n_starts: usize,
    /// Evaluation budget per start (restart included).
    pub max_evals: usize,
    pub tol_obj: f64,
    pub tol_simplex: f64,
    /// Newey–West truncation lag; `floor(n^{1/3})` when absent.
    pub hac_lag_override: Option<usize>,
    /// Multiplier on the default finite-difference steps.
    pub fd_step_scale: f64,
    pub warm_starts: Vec<Vec<f64>>,
    /// Restarts of the simplex from the terminal point of each start.
    pub restarts: usize,
    /// Whether to estimate `H`, `I` and the sandwich after optimizing.
    pub covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_evals: 50_000,
            tol_obj: 1e-8,
            tol_simplex: 1e-8,
            hac_lag_override: None,
            fd_step_scale: 1.0,
            warm_starts: Vec::new(),
            restarts: 1,
            covariance: true,
        }
    }
}

impl FitOptions {
    pub fn with_warm_start(mut self, theta: &DVector<f64>) -> Self {
        self.warm_starts.push(theta.as_slice().to_vec());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 {
            return Err(Error::InvalidInput("max_evals must be positive".into()));
        }
        if !(self.tol_obj > 0.0 && self.tol_simplex > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.fd_step_scale > 0.0 && self.fd_step_scale.is_finite()) {
            return Err(Error::InvalidInput("fd_step_scale must be positive".into()));
        }
        if self.n_starts == 0 && self.warm_starts.is_empty() {
            return Err(Error::InvalidInput("no starting points: n_starts is 0 and no warm start".into()));
        }
        Ok(())
    }
}

/// Outcome of [`fit`].
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: DVector<f64>,
    pub objective: f64,
    pub h_hat: Option<DMatrix<f64>>,
    pub i_hat: Option<DMatrix<f64>>,
    pub sandwich: Option<DMatrix<f64>>,
    pub converged: bool,
    pub n_evals: usize,
    pub starts_used: usize,
    /// Objective at every start's terminal point, in start order.
    pub terminal_values: Vec<f64>,
    /// Objective at every start's initial point, in start order.
    pub initial_values: Vec<f64>,
    pub n_obs: usize,
    pub diagnostics: Vec<String>,
}

/// JSON form of a [`FitResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    pub h_hat: Option<Vec<Vec<f64>>>,
    pub i_hat: Option<Vec<Vec<f64>>>,
    pub sandwich: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub n_evals: usize,
    pub starts_used: usize,
    pub terminal_values: Vec<f64>,
    pub n_obs: usize,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn report(&self) -> FitReport {
        let rows = |m: &Option<DMatrix<f64>>| m.as_ref().map(linalg::to_rows);
        FitReport {
            schema_version: 1,
            theta_hat: self.theta_hat.as_slice().to_vec(),
            objective: self.objective,
            h_hat: rows(&self.h_hat),
            i_hat: rows(&self.i_hat),
            sandwich: rows(&self.sandwich),
            converged: self.converged,
            n_evals: self.n_evals,
            starts_used: self.starts_used,
            terminal_values: self.terminal_values.clone(),
            n_obs: self.n_obs,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// Terminal state of one simplex run.
#[derive(Debug, Clone)]
pub struct SimplexOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn lex_less(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    false
}

/// `(value, x)` strictly better than the incumbent: lower value, or equal value
/// and lexicographically smaller point.
fn better(v: f64, x: &DVector<f64>, best_v: f64, best_x: &DVector<f64>) -> bool {
    v < best_v || (v == best_v && lex_less(x, best_x))
}

/// Nelder–Mead with dimension-adaptive coefficients; every trial point is
/// clamped into `[lower, upper]`. Stops when the spread of simplex values is
/// at most `tol_obj` and every vertex lies within `tol_simplex` (max norm) of
/// the best, or after `max_evals` evaluations.
pub fn nelder_mead<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    start: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    tol_obj: f64,
    tol_simplex: f64,
    max_evals: usize,
) -> SimplexOutcome {
    let n = start.len();
    let project = |x: DVector<f64>| -> DVector<f64> {
        DVector::from_fn(n, |i, _| x[i].clamp(lower[i], upper[i]))
    };
    let nf = n.max(2) as f64;
    let (rho, chi, gamma, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);

    let x0 = project(start.clone());
    let mut evals = 0usize;
    let mut eval = |x: &DVector<f64>, evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(DVector<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), f0));
    for i in 0..n {
        let delta = if x0[i] != 0.0 { 0.05 * x0[i] } else { 0.00025 };
        let mut x = x0.clone();
        x[i] += delta;
        if x[i] > upper[i] || x[i] < lower[i] {
            x[i] = x0[i] - delta;
        }
        let x = project(x);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| {
            a.1.total_cmp(&b.1).then_with(|| {
                if lex_less(&a.0, &b.0) {
                    std::cmp::Ordering::Less
                } else if lex_less(&b.0, &a.0) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
        });
        let best = &simplex[0];
        let spread = simplex.iter().map(|v| (v.1 - best.1).abs()).fold(0.0, f64::max);
        let diameter = simplex
            .iter()
            .map(|v| (&v.0 - &best.0).amax())
            .fold(0.0, f64::max);
        if spread <= tol_obj && diameter <= tol_simplex {
            converged = true;
            break;
        }
        if evals >= max_evals {
            break;
        }
        let mut centroid = DVector::zeros(n);
        for v in &simplex[..n] {
            centroid += &v.0;
        }
        centroid /= n as f64;
        let (worst_x, worst_f) = simplex[n].clone();
        let second_worst = simplex[n - 1].1;

        let xr = project(&centroid + (&centroid - &worst_x) * rho);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = project(&centroid + (&xr - &centroid) * chi);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[n] = (xr, fr);
            continue;
        }
        let accepted = if fr < worst_f {
            let xc = project(&centroid + (&xr - &centroid) * gamma);
            let fc = eval(&xc, &mut evals);
            (fc <= fr).then_some((xc, fc))
        } else {
            let xcc = project(&centroid + (&worst_x - &centroid) * gamma);
            let fcc = eval(&xcc, &mut evals);
            (fcc < worst_f).then_some((xcc, fcc))
        };
        match accepted {
            Some(v) => simplex[n] = v,
            None => {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x = project(&x_best + (&v.0 - &x_best) * sigma);
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
    }
    let (x, value) = simplex.swap_remove(0);
    SimplexOutcome { x, value, evals, converged }
}

/// The `index`-th point (1-based) of the Halton sequence in `dim` dimensions.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    primes(dim)
        .into_iter()
        .map(|base| {
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

fn primes(count: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(count);
    let mut c = 2;
    while out.len() < count {
        if out.iter().all(|p| c % p != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Starting points in order: warm starts, box center, Halton points.
pub fn starting_points(space: &ParameterSpace, opts: &FitOptions) -> Result<Vec<DVector<f64>>> {
    let n = space.n_params();
    let mut starts = Vec::new();
    for w in &opts.warm_starts {
        if w.len() != n {
            return Err(Error::InvalidInput(format!(
                "warm start has {} coordinates, the space has {n}",
                w.len()
            )));
        }
        starts.push(space.project(&DVector::from_column_slice(w)));
    }
    if opts.n_starts > 0 {
        starts.push(space.center());
    }
    let (lo, hi) = (space.lower(), space.upper());
    for k in 1..opts.n_starts {
        let u = halton(k, n);
        starts.push(DVector::from_fn(n, |i, _| lo[i] + u[i] * (hi[i] - lo[i])));
    }
    Ok(starts)
}

/// Minimizes `L̂(·, sample)` over `space` and estimates `H`, `I` and the
/// sandwich covariance at the minimizer.
pub fn fit(space: &ParameterSpace, sample: &Sample, opts: &FitOptions) -> Result<FitResult> {
    opts.validate()?;
    let objective = Objective::new(space, sample)?;
    let starts = starting_points(space, opts)?;
    let mut n_evals = 0;
    let mut terminal_values = Vec::with_capacity(starts.len());
    let mut initial_values = Vec::with_capacity(starts.len());
    let mut best: Option<SimplexOutcome> = None;
    for start in &starts {
        let f = |x: &DVector<f64>| objective.value(x);
        initial_values.push(f(start));
        n_evals += 1;
        let mut run = nelder_mead(f, start, space.lower(), space.upper(), opts.tol_obj, opts.tol_simplex, opts.max_evals);
        let mut used = run.evals;
        for _ in 0..opts.restarts {
            if used >= opts.max_evals {
                break;
            }
            let again = nelder_mead(
                f,
                &run.x,
                space.lower(),
                space.upper(),
                opts.tol_obj,
                opts.tol_simplex,
                opts.max_evals - used,
            );
            used += again.evals;
            if again.value <= run.value {
                run = SimplexOutcome { evals: used, ..again };
            } else {
                run.evals = used;
                run.converged &= again.converged;
            }
        }
        n_evals += used;
        terminal_values.push(run.value);
        let replace = match &best {
            None => true,
            Some(b) => better(run.value, &run.x, b.value, &b.x),
        };
        if replace {
            best = Some(run);
        }
    }
    let best = best.ok_or(Error::NoFeasiblePoint { starts: 0 })?;
    if best.value >= PENALTY {
        return Err(Error::NoFeasiblePoint { starts: starts.len() });
    }
    let mut result = FitResult {
        theta_hat: best.x,
        objective: best.value,
        h_hat: None,
        i_hat: None,
        sandwich: None,
        converged: best.converged,
        n_evals,
        starts_used: starts.len(),
        terminal_values,
        initial_values,
        n_obs: sample.len(),
        diagnostics: Vec::new(),
    };
    if !result.converged {
        result.diagnostics.push("simplex stopped at the evaluation budget".into());
    }
    if opts.covariance {
        attach_covariance(&mut result, space, sample, opts);
    }
    Ok(result)
}

/// Fills `h_hat`, `i_hat` and `sandwich`, recording failures as diagnostics.
pub fn attach_covariance(result: &mut FitResult, space: &ParameterSpace, sample: &Sample, opts: &FitOptions) {
    match estimate_h(space, &result.theta_hat, sample, opts.fd_step_scale) {
        Ok(h) => result.h_hat = Some(h),
        Err(e) => result.diagnostics.push(format!("H estimate: {e}")),
    }
    match estimate_i(space, &result.theta_hat, sample, opts.fd_step_scale, opts.hac_lag_override) {
        Ok(i) => result.i_hat = Some(i),
        Err(e) => result.diagnostics.push(format!("I estimate: {e}")),
    }
    if let (Some(h), Some(i)) = (&result.h_hat, &result.i_hat) {
        match sandwich_covariance(h, i) {
            Ok(s) => result.sandwich = Some(s),
            Err(e) => result.diagnostics.push(format!("sandwich: {e}")),
        }
    }
}

/// Difference nodes `(lo, hi)` around `x` with half-width `step`: central
/// when both fit in the box, otherwise shifted to one side.
fn stencil_nodes(x: f64, step: f64, lower: f64, upper: f64) -> (f64, f64) {
    if x - step >= lower && x + step <= upper {
        (x - step, x + step)
    } else if x + 2.0 * step <= upper {
        (x, x + 2.0 * step)
    } else {
        (x - 2.0 * step, x)
    }
}

/// Finite-difference Hessian of `f` at `x`; per-coordinate half-widths `steps`.
/// Returns `None` as soon as `f` returns a non-finite value or one at least `cap`.
pub fn hessian_fd<F: FnMut(&DVector<f64>) -> f64>(
    mut f: F,
    x: &DVector<f64>,
    steps: &[f64],
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    cap: f64,
) -> std::result::Result<DMatrix<f64>, usize> {
    let n = x.len();
    let nodes: Vec<(f64, f64)> = (0..n).map(|i| stencil_nodes(x[i], steps[i], lower[i], upper[i])).collect();
    let mut eval = |p: &DVector<f64>, coord: usize| -> std::result::Result<f64, usize> {
        let v = f(p);
        if v.is_finite() && v < cap {
            Ok(v)
        } else {
            Err(coord)
        }
    };
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let (a, b) = nodes[i];
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut p = x.clone();
        p[i] = a;
        let fa = eval(&p, i)?;
        p[i] = b;
        let fb = eval(&p, i)?;
        p[i] = mid;
        let fm = eval(&p, i)?;
        h[(i, i)] = (fa - 2.0 * fm + fb) / (half * half);
        for j in 0..i {
            let (c, d) = nodes[j];
            let mut q = x.clone();
            let mut at = |xi: f64, xj: f64| -> std::result::Result<f64, usize> {
                q[i] = xi;
                q[j] = xj;
                eval(&q, i)
            };
            let v = (at(b, d)? - at(b, c)? - at(a, d)? + at(a, c)?) / ((b - a) * (d - c));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    Ok(h)
}

const STENCIL_SHRINKS: usize = 6;

fn fd_steps(theta: &DVector<f64>, base: f64, scale: f64) -> Vec<f64> {
    theta.iter().map(|t| base * t.abs().max(1.0) * scale).collect()
}

/// `Ĥ`: finite-difference Hessian of `L̂` at θ, step `cbrt(ε)·max(1,|θᵢ|)`
/// (times `step_scale`), halved up to six times if the stencil touches the
/// penalty region.
pub fn estimate_h(space: &ParameterSpace, theta: &DVector<f64>, sample: &Sample, step_scale: f64) -> Result<DMatrix<f64>> {
    let objective = Objective::new(space, sample)?;
    let mut steps = fd_steps(theta, f64::EPSILON.cbrt(), step_scale);
    let mut last = 0;
    for _ in 0..=STENCIL_SHRINKS {
        match hessian_fd(|x| objective.value(x), theta, &steps, space.lower(), space.upper(), PENALTY) {
            Ok(h) => return Ok(linalg::symmetrize(&h)),
            Err(coord) => {
                last = coord;
                steps.iter_mut().for_each(|s| *s *= 0.5);
            }
        }
    }
    Err(Error::StencilInfeasible { coordinate: last })
}

/// `n × N` matrix of per-step scores `∇θ l_k` by central (or one-sided)
/// differences with step `sqrt(ε)·max(1,|θᵢ|)`.
pub fn per_step_scores(space: &ParameterSpace, theta: &DVector<f64>, sample: &Sample, step_scale: f64) -> Result<DMatrix<f64>> {
    let objective = Objective::new(space, sample)?;
    let n = theta.len();
    let mut steps = fd_steps(theta, f64::EPSILON.sqrt(), step_scale);
    let mut scores = DMatrix::zeros(sample.len(), n);
    for i in 0..n {
        let mut done = false;
        for _ in 0..=STENCIL_SHRINKS {
            let (a, b) = stencil_nodes(theta[i], steps[i], space.lower()[i], space.upper()[i]);
            let mut p = theta.clone();
            p[i] = a;
            let la = objective.per_step(&p);
            p[i] = b;
            let lb = objective.per_step(&p);
            if let (Some(la), Some(lb)) = (la, lb) {
                // one-sided nodes estimate the derivative at the midpoint; the
                // shift is of the order of the step
                for k in 0..sample.len() {
                    scores[(k, i)] = (lb[k] - la[k]) / (b - a);
                }
                done = true;
                break;
            }
            steps[i] *= 0.5;
        }
        if !done {
            return Err(Error::StencilInfeasible { coordinate: i });
        }
    }
    Ok(scores)
}

/// Bartlett-weighted long-run covariance of the rows of `scores` after
/// centering: `Γ₀ + Σ_{j=1}^{J} (1 − j/(J+1)) (Γⱼ + Γⱼᵀ)`.
pub fn newey_west(scores: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let (n, p) = scores.shape();
    let mut centered = scores.clone();
    for j in 0..p {
        let mean = scores.column(j).mean();
        centered.column_mut(j).add_scalar_mut(-mean);
    }
    let gamma = |j: usize| -> DMatrix<f64> {
        let top = centered.rows(j, n - j);
        let bottom = centered.rows(0, n - j);
        top.transpose() * bottom / n as f64
    };
    let mut out = gamma(0);
    for j in 1..=lag.min(n.saturating_sub(1)) {
        let w = 1.0 - j as f64 / (lag as f64 + 1.0);
        let g = gamma(j);
        out += (&g + g.transpose()) * w;
    }
    linalg::symmetrize(&out)
}

/// Default Newey–West truncation `floor(n^{1/3})`.
pub fn default_hac_lag(n: usize) -> usize {
    let mut j = (n as f64).cbrt().floor() as usize;
    // guard against cbrt rounding just below an exact cube
    while (j + 1).pow(3) <= n {
        j += 1;
    }
    j
}

/// `Î`: Newey–West long-run covariance of the per-step scores.
pub fn estimate_i(
    space: &ParameterSpace,
    theta: &DVector<f64>,
    sample: &Sample,
    step_scale: f64,
    lag_override: Option<usize>,
) -> Result<DMatrix<f64>> {
    let scores = per_step_scores(space, theta, sample, step_scale)?;
    let lag = lag_override.unwrap_or_else(|| default_hac_lag(sample.len()));
    Ok(newey_west(&scores, lag))
}

const MAX_CONDITION: f64 = 1e12;

/// `Ĥ⁻¹ Î Ĥ⁻¹`, symmetrized; fails when `cond(Ĥ) ≥ 1e12`.
pub fn sandwich_covariance(h: &DMatrix<f64>, i: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sv = h.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularHessian { condition });
    }
    let hinv = h
        .clone()
        .try_inverse()
        .ok_or(Error::SingularHessian { condition })?;
    Ok(linalg::symmetrize(&(&hinv * i * &hinv)))
}
