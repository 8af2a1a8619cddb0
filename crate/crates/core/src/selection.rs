//! Information criteria, selection across candidate spaces and the limiting
//! overfitting probability for nested spaces.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::Sample;
use crate::linalg;
use crate::model::{NestingMap, ParameterSpace};
use crate::kalman::Objective;
use crate::qmle::{fit, FitOptions, FitResult};

/// Penalty function `C(n)` of a custom criterion.
pub type PenaltyFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A likelihood-based information criterion `L̂ + penalty/n`.
#[derive(Clone)]
pub enum CriterionSpec {
    /// Plug-in penalty `tr(Î Ĥ⁻¹)`.
    Aic,
    /// `C(n) = 2`.
    Caic,
    /// `C(n) = log n`.
    Bic,
    Custom { name: String, penalty: PenaltyFn },
}

impl fmt::Debug for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl CriterionSpec {
    /// A custom `C(n)`, spot-checked at `n ∈ {10², 10⁴, 10⁶}` to be
    /// nonnegative, nondecreasing and with `C(n)/n` decreasing.
    pub fn custom(name: impl Into<String>, penalty: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let spots = [1e2, 1e4, 1e6];
        let vals: Vec<f64> = spots.iter().map(|&n| penalty(n)).collect();
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput("custom penalty must be finite and nonnegative".into()));
        }
        if vals.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidInput("custom penalty must be nondecreasing".into()));
        }
        let ratios: Vec<f64> = vals.iter().zip(spots).map(|(v, n)| v / n).collect();
        if ratios.windows(2).any(|w| w[1] > w[0]) || ratios[2] > 0.01 {
            return Err(Error::InvalidInput("custom penalty must satisfy C(n)/n → 0".into()));
        }
        Ok(CriterionSpec::Custom { name: name.into(), penalty: Arc::new(penalty) })
    }

    pub fn name(&self) -> String {
        match self {
            CriterionSpec::Aic => "AIC".into(),
            CriterionSpec::Caic => "CAIC".into(),
            CriterionSpec::Bic => "BIC".into(),
            CriterionSpec::Custom { name, .. } => name.clone(),
        }
    }

    /// `C(n)` for the criteria of the form `N(Θ)·C(n)/n`.
    pub fn c_of_n(&self, n: usize) -> Option<f64> {
        let nf = n as f64;
        match self {
            CriterionSpec::Aic => None,
            CriterionSpec::Caic => Some(2.0),
            CriterionSpec::Bic => Some(nf.ln()),
            CriterionSpec::Custom { penalty, .. } => Some(penalty(nf)),
        }
    }
}

/// Serializable criterion description used in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionConfig {
    #[serde(alias = "AIC")]
    Aic,
    #[serde(alias = "CAIC")]
    Caic,
    #[serde(alias = "BIC")]
    Bic,
    /// `C(n) = scale · log log n` (Hannan–Quinn type).
    LogLog { scale: f64 },
    /// `C(n) = value`.
    Constant { value: f64 },
}

impl CriterionConfig {
    pub fn to_spec(&self) -> Result<CriterionSpec> {
        Ok(match self {
            CriterionConfig::Aic => CriterionSpec::Aic,
            CriterionConfig::Caic => CriterionSpec::Caic,
            CriterionConfig::Bic => CriterionSpec::Bic,
            CriterionConfig::LogLog { scale } => {
                let scale = *scale;
                CriterionSpec::custom(format!("{scale}loglog"), move |n: f64| scale * n.ln().ln().max(0.0))?
            }
            CriterionConfig::Constant { value } => {
                let value = *value;
                CriterionSpec::custom(format!("C={value}"), move |_| value)?
            }
        })
    }
}

/// A criterion value with the penalty it used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IcValue {
    pub value: f64,
    /// `N(Θ)·C(n)` or `tr(ÎĤ⁻¹)`; divided by `n` in `value`.
    pub penalty: f64,
    /// AIC fell back to the CAIC penalty because `Î` was unavailable or `Ĥ`
    /// was not positive definite.
    pub degraded: bool,
}

/// `IC_n(Θ) = L̂(θ̂ⁿ, Yⁿ) + penalty / n`.
pub fn ic_value(fit: &FitResult, n: usize, n_params: usize, spec: &CriterionSpec) -> IcValue {
    let nf = n as f64;
    let plain = |c: f64| IcValue {
        value: fit.objective + n_params as f64 * c / nf,
        penalty: n_params as f64 * c,
        degraded: false,
    };
    match spec {
        CriterionSpec::Aic => {
            let trace = match (&fit.h_hat, &fit.i_hat) {
                (Some(h), Some(i)) => h
                    .clone()
                    .cholesky()
                    .map(|chol| (i * chol.inverse()).trace())
                    .filter(|t| t.is_finite()),
                _ => None,
            };
            match trace {
                Some(t) => IcValue { value: fit.objective + t / nf, penalty: t, degraded: false },
                None => IcValue { degraded: true, ..plain(2.0) },
            }
        }
        other => plain(other.c_of_n(n).expect("non-AIC criteria have C(n)")),
    }
}

/// One candidate for [`select`].
#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: String,
    pub space: ParameterSpace,
    pub warm_starts: Vec<DVector<f64>>,
}

impl Candidate {
    pub fn new(id: impl Into<String>, space: ParameterSpace) -> Self {
        Self { id: id.into(), space, warm_starts: Vec::new() }
    }
}

/// One row of a [`SelectionReport`].
#[derive(Debug, Clone, Serialize)]
pub struct SpaceEntry {
    pub id: String,
    pub kronecker: Vec<usize>,
    pub ma_cap: usize,
    pub n_params: usize,
    pub theta_hat: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// One value per criterion; `null` (infinite) when the fit failed.
    pub values: Vec<f64>,
    pub degraded: Vec<bool>,
    pub diagnostics: Vec<String>,
}

/// Criterion values of every candidate and the chosen space per criterion.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub schema_version: u32,
    pub n_obs: usize,
    pub criteria: Vec<String>,
    pub spaces: Vec<SpaceEntry>,
    /// Chosen space id per criterion (`None` if every fit failed).
    pub chosen: Vec<Option<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overfit: Option<OverfitProbability>,
    #[serde(skip)]
    pub fits: Vec<Option<FitResult>>,
}

/// Index of the minimum; ties within 1e-12 go to the smaller parameter
/// count, then to the earlier position.
pub fn argmin_with_ties(values: &[f64], n_params: &[usize]) -> Option<usize> {
    let min = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    (0..values.len())
        .filter(|&i| values[i].is_finite() && values[i] - min <= 1e-12)
        .min_by_key(|&i| (n_params[i], i))
}

/// Fits every candidate and evaluates every criterion.
pub fn select(candidates: &[Candidate], sample: &Sample, criteria: &[CriterionSpec], opts: &FitOptions) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("at least one candidate space is required".into()));
    }
    if criteria.is_empty() {
        return Err(Error::InvalidInput("at least one criterion is required".into()));
    }
    let needs_cov = opts.covariance || criteria.iter().any(|c| matches!(c, CriterionSpec::Aic));
    let n = sample.len();
    let mut spaces = Vec::with_capacity(candidates.len());
    let mut fits = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let mut o = opts.clone();
        o.covariance = needs_cov;
        for w in &cand.warm_starts {
            o = o.with_warm_start(w);
        }
        let k = cand.space.n_params();
        let result = fit(&cand.space, sample, &o);
        let mut entry = SpaceEntry {
            id: cand.id.clone(),
            kronecker: cand.space.kronecker().indices().to_vec(),
            ma_cap: cand.space.ma_cap(),
            n_params: k,
            theta_hat: None,
            objective: None,
            values: vec![f64::INFINITY; criteria.len()],
            degraded: vec![false; criteria.len()],
            diagnostics: Vec::new(),
        };
        match result {
            Ok(fr) => {
                for (j, c) in criteria.iter().enumerate() {
                    let ic = ic_value(&fr, n, k, c);
                    entry.values[j] = ic.value;
                    entry.degraded[j] = ic.degraded;
                }
                entry.theta_hat = Some(fr.theta_hat.as_slice().to_vec());
                entry.objective = Some(fr.objective);
                entry.diagnostics = fr.diagnostics.clone();
                fits.push(Some(fr));
            }
            Err(e) => {
                entry.diagnostics.push(format!("fit failed: {e}"));
                fits.push(None);
            }
        }
        spaces.push(entry);
    }
    refit_from_nested(candidates, sample, criteria, &FitOptions { covariance: needs_cov, ..opts.clone() }, &mut spaces, &mut fits);
    let n_params: Vec<usize> = spaces.iter().map(|s| s.n_params).collect();
    let chosen = (0..criteria.len())
        .map(|j| {
            let vals: Vec<f64> = spaces.iter().map(|s| s.values[j]).collect();
            argmin_with_ties(&vals, &n_params).map(|i| spaces[i].id.clone())
        })
        .collect();
    Ok(SelectionReport {
        schema_version: 1,
        n_obs: n,
        criteria: criteria.iter().map(CriterionSpec::name).collect(),
        spaces,
        chosen,
        overfit: None,
        fits,
    })
}

/// A space containing another must reach at least as low an objective.
/// When the estimate of a candidate, carried into a larger candidate, beats
/// that candidate's own fit, the larger one is refitted from there.
fn refit_from_nested(
    candidates: &[Candidate],
    sample: &Sample,
    criteria: &[CriterionSpec],
    opts: &FitOptions,
    spaces: &mut [SpaceEntry],
    fits: &mut [Option<FitResult>],
) {
    let n = sample.len();
    for j in 0..candidates.len() {
        let target = &candidates[j].space;
        let Ok(objective) = Objective::new(target, sample) else { continue };
        let current = fits[j].as_ref().map_or(f64::INFINITY, |f| f.objective);
        let mut best: Option<(f64, DVector<f64>, &str)> = None;
        for (i, cand) in candidates.iter().enumerate() {
            let Some(src) = fits[i].as_ref().filter(|_| i != j) else { continue };
            let Some(start) = target.transfer_from(&cand.space, &src.theta_hat) else { continue };
            let v = objective.value(&start);
            if v < current - 1e-12 && best.as_ref().is_none_or(|b| v < b.0) {
                best = Some((v, start, &cand.id));
            }
        }
        let Some((_, start, from)) = best else { continue };
        let o = FitOptions { n_starts: 0, warm_starts: Vec::new(), ..opts.clone() }.with_warm_start(&start);
        let Ok(refit) = fit(target, sample, &o) else { continue };
        if refit.objective >= current {
            continue;
        }
        let entry = &mut spaces[j];
        for (k, c) in criteria.iter().enumerate() {
            let ic = ic_value(&refit, n, entry.n_params, c);
            entry.values[k] = ic.value;
            entry.degraded[k] = ic.degraded;
        }
        entry.theta_hat = Some(refit.theta_hat.as_slice().to_vec());
        entry.objective = Some(refit.objective);
        entry.diagnostics = refit.diagnostics.clone();
        entry.diagnostics.push(format!("refitted from the estimate of space {from}"));
        fits[j] = Some(refit);
    }
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Table with one row per space and one column per criterion.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["space".to_string(), "m".into(), "q".into(), "n_params".into(), "objective".into()];
        header.extend(self.criteria.iter().cloned());
        w.write_record(&header)?;
        for s in &self.spaces {
            let m = s.kronecker.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
            let mut row = vec![
                s.id.clone(),
                m,
                s.ma_cap.to_string(),
                s.n_params.to_string(),
                s.objective.map_or("inf".into(), crate::levy::fmt_num),
            ];
            row.extend(s.values.iter().map(|&v| crate::levy::fmt_num(v)));
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.spaces.iter().position(|s| s.id == id)
    }

    /// Limiting overfitting probability of `inner` against `outer` at
    /// penalty constant `c` from the stored fits.
    pub fn overfit_for(&self, inner: &str, outer: &str, nesting: &NestingMap, c: f64) -> Result<OverfitProbability> {
        let get = |id: &str| -> Result<&FitResult> {
            let i = self
                .position(id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown space id {id}")))?;
            self.fits[i]
                .as_ref()
                .ok_or_else(|| Error::InvalidInput(format!("space {id} has no fit")))
        };
        overfitting_probability(get(inner)?, get(outer)?, nesting, c)
    }
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::SingularHessian { condition: f64::INFINITY })
}

/// `M_F = −H⁻¹ + F (Fᵀ H F)⁻¹ Fᵀ`.
pub fn m_matrix(h: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inner = inverse(&(f.transpose() * h * f))?;
    Ok(linalg::symmetrize(&(f * inner * f.transpose() - inverse(h)?)))
}

/// Spectrum of `H^{1/2} M_F I M_F H^{1/2}` (ascending) and its eigenvalues
/// above `1e-8·λ_max`; the latter must number `N(Θ) − N(Θ₀)`.
pub fn overfit_spectrum(h: &DMatrix<f64>, i: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let (outer, inner) = f.shape();
    if h.shape() != (outer, outer) || i.shape() != (outer, outer) {
        return Err(Error::InvalidInput("H, I and F have inconsistent shapes".into()));
    }
    if linalg::min_sym_eigenvalue(h) <= 0.0 {
        return Err(Error::SingularHessian { condition: f64::INFINITY });
    }
    let m = m_matrix(h, f)?;
    let root = linalg::sym_sqrt(h);
    let target = &root * &m * i * &m * &root;
    let (values, _) = linalg::sym_eigen_sorted(&target);
    let spectrum: Vec<f64> = values.iter().copied().collect();
    let lmax = spectrum.iter().copied().fold(0.0, f64::max);
    let positive: Vec<f64> = spectrum.iter().copied().filter(|&v| v > 1e-8 * lmax && lmax > 0.0).collect();
    let expected = outer - inner;
    if positive.len() != expected {
        return Err(Error::RankAnomaly { expected, found: positive.len(), spectrum });
    }
    Ok((spectrum, positive))
}

/// Strictly positive eigenvalues governing the overfitting probability,
/// from the enclosing space's `Ĥ`, `Î`.
pub fn overfit_eigenvalues(fit0: &FitResult, fit_e: &FitResult, nesting: &NestingMap) -> Result<Vec<f64>> {
    if fit0.theta_hat.len() != nesting.inner_dim() || fit_e.theta_hat.len() != nesting.outer_dim() {
        return Err(Error::InvalidInput("fits do not match the nesting map".into()));
    }
    let h = fit_e
        .h_hat
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("enclosing fit has no Hessian estimate".into()))?;
    let i = fit_e
        .i_hat
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("enclosing fit has no score covariance estimate".into()))?;
    Ok(overfit_spectrum(h, i, nesting.f())?.1)
}

/// `λ_max(H^{-1/2} I H^{-1/2})`, the constant separating consistent from
/// overfitting-prone penalties.
pub fn consistency_threshold(h: &DMatrix<f64>, i: &DMatrix<f64>) -> Result<f64> {
    let (vals, vecs) = linalg::sym_eigen_sorted(h);
    if vals[0] <= 0.0 {
        return Err(Error::SingularHessian { condition: f64::INFINITY });
    }
    let inv_root = &vecs * DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt())) * vecs.transpose();
    let (ev, _) = linalg::sym_eigen_sorted(&(&inv_root * i * &inv_root));
    Ok(ev[ev.len() - 1])
}

fn check_weights(lambda: &[f64], t: f64) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::InvalidInput("weights must not be empty".into()));
    }
    if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidInput("weights must be positive and finite".into()));
    }
    if t.is_nan() {
        return Err(Error::InvalidInput("threshold is NaN".into()));
    }
    Ok(())
}

/// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c);
    let mut k = K15_WEIGHTS[7] * fc;
    let mut g = G7_WEIGHTS[3] * fc;
    for j in 0..7 {
        let x = r * GK_NODES[j];
        let s = f(c - x) + f(c + x);
        k += K15_WEIGHTS[j] * s;
        if j % 2 == 1 {
            g += G7_WEIGHTS[j / 2] * s;
        }
    }
    (k * r, ((k - g) * r).abs())
}

/// Adaptive Gauss–Kronrod quadrature to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= tol || depth == 0 || (b - a).abs() < 1e-14 * (1.0 + a.abs()) {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth - 1) + rec(f, m, b, 0.5 * tol, depth - 1)
    }
    rec(f, a, b, tol, 40)
}

/// Wynn's epsilon acceleration of a sequence of partial sums.
fn wynn_epsilon(s: &[f64]) -> f64 {
    let n = s.len();
    if n < 3 {
        return s[n - 1];
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = s[n - 1];
    // columns alternate between auxiliary (odd) and estimate (even) entries
    for col in 1..n {
        let len = cur.len() - 1;
        let mut next = Vec::with_capacity(len);
        for k in 0..len {
            let diff = cur[k + 1] - cur[k];
            if diff == 0.0 {
                return if col % 2 == 1 { cur[k + 1] } else { best };
            }
            next.push(prev[k + 1] + 1.0 / diff);
        }
        prev = cur;
        cur = next;
        if col % 2 == 0 {
            best = *cur.last().expect("nonempty column");
        }
        if cur.len() < 2 {
            break;
        }
    }
    best
}

/// `P(Σ λᵢ χ²₁,ᵢ > t)` by numerical inversion of the characteristic function:
/// `1/2 + (1/π) ∫₀^∞ sin θ(u) / (u ρ(u)) du` with
/// `θ(u) = ½ Σ atan(λᵢu) − ½ t u` and `ρ(u) = Π (1 + λᵢ²u²)^{1/4}`.
///
/// The integral is split at multiples of `2π/t`; the partial sums are
/// accelerated with Wynn's epsilon algorithm unless the tail bound
/// `1/(π k U^k Π λᵢ^{1/2})`, `k = m/2`, is already below tolerance.
pub fn weighted_chisq_tail(lambda: &[f64], t: f64) -> Result<f64> {
    check_weights(lambda, t)?;
    if t <= 0.0 {
        return Ok(1.0);
    }
    let sum: f64 = lambda.iter().sum();
    let integrand = |u: f64| -> f64 {
        if u == 0.0 {
            return 0.5 * (sum - t);
        }
        let mut theta = -0.5 * t * u;
        let mut log_rho = 0.0;
        for &l in lambda {
            let lu = l * u;
            theta += 0.5 * lu.atan();
            log_rho += 0.25 * (lu * lu).ln_1p();
        }
        theta.sin() / (u * log_rho.exp())
    };
    let k = 0.5 * lambda.len() as f64;
    let log_prod_root: f64 = lambda.iter().map(|l| 0.5 * l.ln()).sum();
    let tail_bound = |u: f64| -> f64 { (-(PI * k).ln() - k * u.ln() - log_prod_root).exp() };

    let chunk = 2.0 * PI / t;
    let tol = 1e-12;
    let mut partial = Vec::new();
    let mut total = 0.0;
    let mut last_est = f64::NAN;
    let mut stable = 0;
    let mut result = None;
    for j in 0..20_000 {
        let (a, b) = (j as f64 * chunk, (j + 1) as f64 * chunk);
        total += integrate(&integrand, a, b, tol);
        partial.push(total);
        if tail_bound(b) < 1e-11 {
            result = Some(total);
            break;
        }
        if partial.len() >= 4 {
            // the epsilon table only needs the recent tail of the sequence
            let from = partial.len().saturating_sub(40);
            let est = wynn_epsilon(&partial[from..]);
            if (est - last_est).abs() < 1e-12 * (1.0 + est.abs()) {
                stable += 1;
                if stable >= 2 {
                    result = Some(est);
                    break;
                }
            } else {
                stable = 0;
            }
            last_est = est;
        }
    }
    let integral = result.unwrap_or(if last_est.is_finite() { last_est } else { total });
    Ok((0.5 + integral / PI).clamp(0.0, 1.0))
}

/// Monte-Carlo estimate of `P(Σ λᵢ χ²₁,ᵢ > t)` with its standard error.
pub fn weighted_chisq_tail_mc<R: Rng + ?Sized>(lambda: &[f64], t: f64, draws: usize, rng: &mut R) -> Result<(f64, f64)> {
    check_weights(lambda, t)?;
    if draws == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    let mut hits = 0usize;
    for _ in 0..draws {
        let q: f64 = lambda
            .iter()
            .map(|l| {
                let z: f64 = rng.sample(StandardNormal);
                l * z * z
            })
            .sum();
        if q > t {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok((p, (p * (1.0 - p) / draws as f64).sqrt()))
}

/// The limiting overfitting probability of a nested pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverfitProbability {
    pub eigenvalues: Vec<f64>,
    pub penalty_constant: f64,
    /// `2 (N(Θ) − N(Θ₀)) C`.
    pub threshold: f64,
    /// `P(Σ λᵢ χ²ᵢ > threshold)`.
    pub probability: f64,
    /// `P(χ²₁ > C)`, the simplified form quoted for the benchmark with both
    /// eigenvalues equal to 2.
    pub simplified: f64,
}

/// `P(Σ λᵢ χ²ᵢ > 2 (N(Θ) − N(Θ₀)) C)` with the plug-in eigenvalues.
pub fn overfitting_probability(fit0: &FitResult, fit_e: &FitResult, nesting: &NestingMap, c: f64) -> Result<OverfitProbability> {
    let eigenvalues = overfit_eigenvalues(fit0, fit_e, nesting)?;
    overfitting_probability_from(eigenvalues, nesting.outer_dim() - nesting.inner_dim(), c)
}

pub fn overfitting_probability_from(eigenvalues: Vec<f64>, extra_params: usize, c: f64) -> Result<OverfitProbability> {
    if !(c >= 0.0) {
        return Err(Error::InvalidInput("penalty constant must be nonnegative".into()));
    }
    let threshold = 2.0 * extra_params as f64 * c;
    let probability = weighted_chisq_tail(&eigenvalues, threshold)?;
    let simplified = weighted_chisq_tail(&[1.0], c)?;
    Ok(OverfitProbability { eigenvalues, penalty_constant: c, threshold, probability, simplified })
}
