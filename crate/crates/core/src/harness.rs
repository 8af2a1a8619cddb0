//! Batch driver behind the `mcarma` binary: experiment configuration,
//! dataset simulation, single-space fits, selection and seeded parallel
//! replication of selection experiments.
//!
//! A configuration is one JSON document ([`ExperimentConfig`]); relative
//! paths inside it resolve against the directory of the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::DiscretizedModel;
use crate::levy::{fmt_num, simulate_sample, stream, DriverSpec, NigParams, Purpose, Sample, SimulationSettings};
use crate::linalg;
use crate::model::{nesting_map, ModelFile, ParameterSpace, StateSpaceModel};
use crate::qmle::{fit, FitOptions, FitReport};
use crate::selection::{
    overfitting_probability, select, weighted_chisq_tail, Candidate, CriterionConfig, CriterionSpec, SelectionReport,
};

/// Version written to, and required in, every JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// A space (optionally with a parameter), inline or in a separate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceRef {
    File { file: PathBuf },
    Inline(ModelFile),
}

/// Driving Lévy process of the simulated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    /// Brownian motion; the covariance defaults to the model's `Σᴸ`.
    Brownian {
        #[serde(default)]
        sigma: Option<Vec<Vec<f64>>>,
    },
    Nig {
        mu: Vec<f64>,
        alpha: f64,
        beta: Vec<f64>,
        delta: f64,
        dependence: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrueModelConfig {
    /// Space and parameter of the data-generating model.
    pub model: SpaceRef,
    pub driver: DriverConfig,
}

/// A nested pair `inner ⊂ outer` of candidate ids whose overfitting
/// probability is reported at penalty constant `C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedPair {
    pub inner: String,
    pub outer: String,
    #[serde(default = "default_penalty_constant")]
    pub penalty_constant: f64,
}

fn default_penalty_constant() -> f64 {
    2.0
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_criteria() -> Vec<CriterionConfig> {
    vec![CriterionConfig::Aic, CriterionConfig::Caic, CriterionConfig::Bic]
}

fn default_h() -> f64 {
    1.0
}

fn default_euler_step() -> f64 {
    0.01
}

fn default_replications() -> usize {
    1
}

/// Everything a command needs; see the README for the field reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub true_model: Option<TrueModelConfig>,
    #[serde(default)]
    pub candidate_spaces: Vec<SpaceRef>,
    /// Directory whose `*.json` model files are appended to the candidates
    /// in file-name order.
    #[serde(default)]
    pub spaces_dir: Option<PathBuf>,
    /// Space fitted by `fit`.
    #[serde(default)]
    pub space: Option<SpaceRef>,
    /// Data CSV read by `fit` and `select`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default = "default_criteria")]
    pub criteria: Vec<CriterionConfig>,
    /// Number of simulated observations (before burn-in).
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_euler_step")]
    pub euler_step: f64,
    /// Simulated time span; defaults to `n·h`.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub burn_in: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub fit: FitOptions,
    /// Warm-start every candidate that can represent the true parameter at
    /// that parameter.
    #[serde(default)]
    pub warm_start_truth: bool,
    #[serde(default)]
    pub nested_pair: Option<NestedPair>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// The data-generating model resolved from a configuration.
#[derive(Debug, Clone)]
pub struct TrueModel {
    pub space: ParameterSpace,
    pub theta: DVector<f64>,
    pub model: StateSpaceModel,
    pub driver: DriverSpec,
}

impl ExperimentConfig {
    /// Parses a configuration; relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidInput(format!("h must be positive, got {}", self.h)));
        }
        if let (Some(n), Some(horizon)) = (self.n, self.horizon) {
            let expected = n as f64 * self.h;
            if (horizon - expected).abs() > 1e-9 * expected.max(1.0) {
                return Err(Error::InvalidInput(format!("horizon {horizon} differs from n·h = {expected}")));
            }
        }
        if self.n.is_some() || self.horizon.is_some() {
            self.settings()?.validate()?;
        }
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput("threads must be at least 1".into()));
        }
        if self.criteria.is_empty() {
            return Err(Error::InvalidInput("at least one criterion is required".into()));
        }
        // warm starts may still be added from the true model or a space file
        FitOptions { n_starts: self.fit.n_starts.max(1), ..self.fit.clone() }.validate()
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Output directory: `out` from the configuration, else `mcarma-out`
    /// next to it.
    pub fn out_dir(&self) -> PathBuf {
        self.resolve(self.out.as_deref().unwrap_or(Path::new("mcarma-out")))
    }

    /// Simulation grid implied by `n`, `h`, `horizon`, `euler_step` and `burn_in`.
    pub fn settings(&self) -> Result<SimulationSettings> {
        let horizon = match (self.horizon, self.n) {
            (Some(t), _) => t,
            (None, Some(n)) => n as f64 * self.h,
            (None, None) => return Err(Error::InvalidInput("give n or horizon".into())),
        };
        Ok(SimulationSettings { horizon, step: self.euler_step, h: self.h, burn_in: self.burn_in })
    }

    fn load_space_ref(&self, r: &SpaceRef) -> Result<(Option<String>, ModelFile)> {
        match r {
            SpaceRef::Inline(m) => Ok((m.id.clone(), m.clone())),
            SpaceRef::File { file } => {
                let path = self.resolve(file);
                let m = read_model_file(&path)?;
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
                Ok((m.id.clone().or(stem), m))
            }
        }
    }

    pub fn true_model(&self) -> Result<TrueModel> {
        let tm = self
            .true_model
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("configuration has no true_model".into()))?;
        let (_, file) = self.load_space_ref(&tm.model)?;
        let space = file.space()?;
        let theta = file
            .parameter()?
            .ok_or_else(|| Error::InvalidInput("true_model carries no parameter".into()))?;
        let model = space.build(&theta)?;
        let driver = match &tm.driver {
            DriverConfig::Brownian { sigma: None } => DriverSpec::brownian(model.sigma_l().clone())?,
            DriverConfig::Brownian { sigma: Some(rows) } => DriverSpec::brownian(linalg::from_rows(rows)?)?,
            DriverConfig::Nig { mu, alpha, beta, delta, dependence } => DriverSpec::Nig(NigParams::new(
                DVector::from_column_slice(mu),
                *alpha,
                DVector::from_column_slice(beta),
                *delta,
                linalg::from_rows(dependence)?,
            )?),
        };
        if driver.dim() != model.driver_dim() {
            return Err(Error::InvalidInput(format!(
                "driver has dimension {}, the model expects {}",
                driver.dim(),
                model.driver_dim()
            )));
        }
        Ok(TrueModel { space, theta, model, driver })
    }

    /// Candidate spaces with ids (`id` field, else file stem, else position).
    pub fn candidates(&self) -> Result<Vec<(String, ParameterSpace)>> {
        let mut refs: Vec<SpaceRef> = self.candidate_spaces.clone();
        if let Some(dir) = &self.spaces_dir {
            let dir = self.resolve(dir);
            let mut files: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            refs.extend(files.into_iter().map(|file| SpaceRef::File { file }));
        }
        if refs.is_empty() {
            return Err(Error::InvalidInput("no candidate spaces given".into()));
        }
        let mut out: Vec<(String, ParameterSpace)> = Vec::with_capacity(refs.len());
        for (k, r) in refs.iter().enumerate() {
            let (id, file) = self.load_space_ref(r)?;
            let id = id.unwrap_or_else(|| (k + 1).to_string());
            if out.iter().any(|(other, _)| *other == id) {
                return Err(Error::InvalidInput(format!("duplicate candidate id {id}")));
            }
            out.push((id, file.space()?));
        }
        Ok(out)
    }

    pub fn criterion_specs(&self) -> Result<Vec<CriterionSpec>> {
        self.criteria.iter().map(CriterionConfig::to_spec).collect()
    }

    fn candidate_list(&self, truth: Option<&TrueModel>) -> Result<Vec<Candidate>> {
        Ok(self
            .candidates()?
            .into_iter()
            .map(|(id, space)| {
                let mut cand = Candidate::new(id, space);
                if let Some(t) = truth.filter(|_| self.warm_start_truth) {
                    cand.warm_starts.extend(cand.space.transfer_from(&t.space, &t.theta));
                }
                cand
            })
            .collect())
    }

    fn data(&self) -> Result<Sample> {
        let path = self
            .data
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("configuration has no data file".into()))?;
        Sample::load(&self.resolve(path))
    }

    fn truth_if_given(&self) -> Result<Option<TrueModel>> {
        self.true_model.as_ref().map(|_| self.true_model()).transpose()
    }
}

fn read_model_file(path: &Path) -> Result<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Simulates replication `index` of the configured true model.
pub fn simulate_replication(cfg: &ExperimentConfig, truth: &TrueModel, index: usize) -> Result<Sample> {
    let mut rng = stream(cfg.master_seed, index as u64, Purpose::Driver);
    simulate_sample(&truth.model, &truth.driver, &cfg.settings()?, None, &mut rng)
}

/// Writes `rep_0000.csv, …` (one per replication) and returns their paths.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let truth = cfg.true_model()?;
    let dir = cfg.out_dir();
    let mut paths = Vec::with_capacity(cfg.replications);
    for index in 0..cfg.replications {
        let sample = simulate_replication(cfg, &truth, index)?;
        let path = dir.join(format!("rep_{index:04}.csv"));
        write_file(&path, sample.to_csv_string()?.as_bytes())?;
        paths.push(path);
    }
    Ok(paths)
}

/// Fits `space` to `data`; writes `fit.json` and, with `dump_filter`,
/// `filter.json` holding the steady-state filter at the estimate.
pub fn cmd_fit(cfg: &ExperimentConfig, dump_filter: bool) -> Result<FitReport> {
    let space_ref = cfg
        .space
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("configuration has no space to fit".into()))?;
    let (_, file) = cfg.load_space_ref(space_ref)?;
    let space = file.space()?;
    let sample = cfg.data()?;
    if sample.dim() != space.dim() {
        return Err(Error::InvalidInput(format!(
            "data has {} columns, the space models {} outputs",
            sample.dim(),
            space.dim()
        )));
    }
    let mut opts = cfg.fit.clone();
    if let Some(theta) = file.parameter()? {
        opts = opts.with_warm_start(&theta);
    }
    if let Some(truth) = cfg.truth_if_given()?.filter(|_| cfg.warm_start_truth) {
        if let Some(w) = space.transfer_from(&truth.space, &truth.theta) {
            opts = opts.with_warm_start(&w);
        }
    }
    let result = fit(&space, &sample, &opts)?;
    let report = result.report();
    let dir = cfg.out_dir();
    write_file(&dir.join("fit.json"), &to_json(&report)?)?;
    if dump_filter {
        let disc = DiscretizedModel::new(&space.build(&result.theta_hat)?, sample.h())?;
        write_file(&dir.join("filter.json"), &to_json(&disc.dump())?)?;
    }
    Ok(report)
}

/// Selects among the candidates on `data`; writes `selection.json` and
/// `selection.csv`.
pub fn cmd_select(cfg: &ExperimentConfig) -> Result<SelectionReport> {
    let sample = cfg.data()?;
    let truth = cfg.truth_if_given()?;
    let candidates = cfg.candidate_list(truth.as_ref())?;
    if let Some(bad) = candidates.iter().find(|c| c.space.dim() != sample.dim()) {
        return Err(Error::InvalidInput(format!(
            "data has {} columns, space {} models {} outputs",
            sample.dim(),
            bad.id,
            bad.space.dim()
        )));
    }
    let mut opts = cfg.fit.clone();
    opts.covariance |= cfg.nested_pair.is_some();
    let mut report = select(&candidates, &sample, &cfg.criterion_specs()?, &opts)?;
    if let Some(pair) = &cfg.nested_pair {
        let (inner, outer) = pair_spaces(&candidates, pair)?;
        let nesting = nesting_map(inner, outer)?;
        report.overfit = Some(report.overfit_for(&pair.inner, &pair.outer, &nesting, pair.penalty_constant)?);
    }
    let dir = cfg.out_dir();
    write_file(&dir.join("selection.json"), &to_json(&report)?)?;
    write_file(&dir.join("selection.csv"), report.to_csv()?.as_bytes())?;
    Ok(report)
}

fn pair_spaces<'c>(candidates: &'c [Candidate], pair: &NestedPair) -> Result<(&'c ParameterSpace, &'c ParameterSpace)> {
    let find = |id: &str| {
        candidates
            .iter()
            .find(|c| c.id == id)
            .map(|c| &c.space)
            .ok_or_else(|| Error::InvalidInput(format!("nested pair names unknown candidate {id}")))
    };
    Ok((find(&pair.inner)?, find(&pair.outer)?))
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub index: usize,
    /// Chosen id per criterion.
    pub chosen: Vec<Option<String>>,
    /// Minimized objective per candidate.
    pub objectives: Vec<Option<f64>>,
    /// Overfitting probability from this replication's estimates.
    pub overfit_probability: Option<f64>,
    pub error: Option<String>,
}

/// A reference probability for the overfit rate with its `3σ` binomial
/// band at the number of compared replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverfitReference {
    pub probability: f64,
    pub band: [f64; 2],
    pub empirical_within: bool,
}

/// Overfitting statistics of the declared nested pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverfitSummary {
    pub inner: String,
    pub outer: String,
    pub penalty_constant: f64,
    /// Share of replications with `n (L̂_inner − L̂_outer) > C (N_outer − N_inner)`.
    pub empirical: Option<f64>,
    pub overfits: usize,
    pub compared: usize,
    /// Median over replications of the limiting probability with plug-in
    /// eigenvalues from the enclosing fit.
    pub plug_in: Option<OverfitReference>,
    /// Limiting probability when `I = 2H` (all eigenvalues 2), the
    /// correctly specified Gaussian case.
    pub gaussian: Option<OverfitReference>,
    /// `P(χ²₁ > C)`.
    pub simplified: Option<OverfitReference>,
}

/// Selection counts over all replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub schema_version: u32,
    pub replications: usize,
    pub master_seed: u64,
    pub n_obs: usize,
    pub criteria: Vec<String>,
    pub spaces: Vec<String>,
    /// `counts[criterion][space]`.
    pub counts: Vec<Vec<usize>>,
    /// Replications without a choice, per criterion.
    pub failures: Vec<usize>,
    pub failed_replications: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overfit: Option<OverfitSummary>,
    pub outcomes: Vec<ReplicationOutcome>,
}

impl ReplicationSummary {
    /// Count of criterion `criterion` choosing `space`.
    pub fn count(&self, criterion: &str, space: &str) -> Option<usize> {
        let c = self.criteria.iter().position(|x| x == criterion)?;
        let s = self.spaces.iter().position(|x| x == space)?;
        Some(self.counts[c][s])
    }

    /// One row per space and one column per criterion, then a `failed`
    /// row with the replications that produced no choice.
    pub fn counts_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["space".to_string()];
        header.extend(self.criteria.iter().cloned());
        w.write_record(&header)?;
        for (s, id) in self.spaces.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(self.counts.iter().map(|per_space| per_space[s].to_string()));
            w.write_record(&row)?;
        }
        let mut row = vec!["failed".to_string()];
        row.extend(self.failures.iter().map(usize::to_string));
        w.write_record(&row)?;
        finish_csv(w)
    }

    /// Per-replication choices and objectives.
    pub fn outcomes_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["replication".to_string()];
        header.extend(self.criteria.iter().map(|c| format!("chosen_{c}")));
        header.extend(self.spaces.iter().map(|s| format!("objective_{s}")));
        header.push("error".into());
        w.write_record(&header)?;
        for o in &self.outcomes {
            let mut row = vec![o.index.to_string()];
            row.extend(o.chosen.iter().map(|c| c.clone().unwrap_or_default()));
            row.extend(o.objectives.iter().map(|v| v.map(fmt_num).unwrap_or_default()));
            row.push(o.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        finish_csv(w)
    }
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn run_replication(
    cfg: &ExperimentConfig,
    truth: &TrueModel,
    candidates: &[Candidate],
    criteria: &[CriterionSpec],
    pair: Option<(&NestedPair, &crate::model::NestingMap)>,
    index: usize,
) -> ReplicationOutcome {
    let mut outcome = ReplicationOutcome {
        index,
        chosen: vec![None; criteria.len()],
        objectives: vec![None; candidates.len()],
        overfit_probability: None,
        error: None,
    };
    let sample = match simulate_replication(cfg, truth, index) {
        Ok(s) => s,
        Err(e) => {
            outcome.error = Some(format!("simulation: {e}"));
            return outcome;
        }
    };
    let mut opts = cfg.fit.clone();
    opts.covariance |= pair.is_some();
    match select(candidates, &sample, criteria, &opts) {
        Ok(report) => {
            outcome.chosen = report.chosen.clone();
            outcome.objectives = report.spaces.iter().map(|s| s.objective).collect();
            if let Some((p, nesting)) = pair {
                let fit_of = |id: &str| report.position(id).and_then(|i| report.fits[i].as_ref());
                if let (Some(f0), Some(fe)) = (fit_of(&p.inner), fit_of(&p.outer)) {
                    outcome.overfit_probability =
                        overfitting_probability(f0, fe, nesting, p.penalty_constant).ok().map(|o| o.probability);
                }
            }
            let failed: Vec<&str> = report
                .spaces
                .iter()
                .filter(|s| s.objective.is_none())
                .map(|s| s.id.as_str())
                .collect();
            if !failed.is_empty() {
                outcome.error = Some(format!("fit failed for space(s) {}", failed.join(", ")));
            }
        }
        Err(e) => outcome.error = Some(format!("selection: {e}")),
    }
    outcome
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    Some(if k % 2 == 1 { values[k / 2] } else { 0.5 * (values[k / 2 - 1] + values[k / 2]) })
}

fn reference(p: f64, empirical: Option<f64>, trials: usize) -> Option<OverfitReference> {
    let e = empirical?;
    let half = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    let band = [(p - half).max(0.0), (p + half).min(1.0)];
    Some(OverfitReference { probability: p, band, empirical_within: e >= band[0] && e <= band[1] })
}

fn overfit_summary(
    pair: &NestedPair,
    candidates: &[Candidate],
    outcomes: &[ReplicationOutcome],
    n_obs: usize,
) -> Result<OverfitSummary> {
    let pos = |id: &str| candidates.iter().position(|c| c.id == id).expect("pair ids were checked");
    let (i0, ie) = (pos(&pair.inner), pos(&pair.outer));
    let extra = candidates[ie].space.n_params() - candidates[i0].space.n_params();
    let c = pair.penalty_constant;
    let mut compared = 0;
    let mut overfits = 0;
    for o in outcomes {
        if let (Some(l0), Some(le)) = (o.objectives[i0], o.objectives[ie]) {
            compared += 1;
            if n_obs as f64 * (l0 - le) > c * extra as f64 {
                overfits += 1;
            }
        }
    }
    let empirical = (compared > 0).then(|| overfits as f64 / compared as f64);
    let mut probs: Vec<f64> = outcomes.iter().filter_map(|o| o.overfit_probability).collect();
    let plug_in = median(&mut probs).and_then(|p| reference(p, empirical, compared));
    let threshold = 2.0 * extra as f64 * c;
    let gaussian = reference(weighted_chisq_tail(&vec![2.0; extra], threshold)?, empirical, compared);
    let simplified = reference(weighted_chisq_tail(&[1.0], c)?, empirical, compared);
    Ok(OverfitSummary {
        inner: pair.inner.clone(),
        outer: pair.outer.clone(),
        penalty_constant: c,
        empirical,
        overfits,
        compared,
        plug_in,
        gaussian,
        simplified,
    })
}

/// Runs simulate + select for every replication on `threads` workers (the
/// configured count, else all cores) and aggregates the choices. Writes
/// `counts.csv`, `counts.json` and `replications.csv`.
///
/// Results depend only on the configuration and seed, not on the number of
/// workers.
pub fn cmd_replicate(cfg: &ExperimentConfig) -> Result<ReplicationSummary> {
    let truth = cfg.true_model()?;
    let candidates = cfg.candidate_list(Some(&truth))?;
    if let Some(bad) = candidates.iter().find(|c| c.space.dim() != truth.model.output_dim()) {
        return Err(Error::InvalidInput(format!(
            "candidate {} models {} outputs, the true model {}",
            bad.id,
            bad.space.dim(),
            truth.model.output_dim()
        )));
    }
    let criteria = cfg.criterion_specs()?;
    let nesting = match &cfg.nested_pair {
        Some(pair) => {
            let (inner, outer) = pair_spaces(&candidates, pair)?;
            Some((pair, nesting_map(inner, outer)?))
        }
        None => None,
    };
    let pair = nesting.as_ref().map(|(p, m)| (*p, m));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cfg.threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let outcomes: Vec<ReplicationOutcome> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|index| run_replication(cfg, &truth, &candidates, &criteria, pair, index))
            .collect()
    });

    let spaces: Vec<String> = candidates.iter().map(|c| c.id.clone()).collect();
    let mut counts = vec![vec![0; spaces.len()]; criteria.len()];
    let mut failures = vec![0; criteria.len()];
    for o in &outcomes {
        for (c, choice) in o.chosen.iter().enumerate() {
            match choice.as_ref().and_then(|id| spaces.iter().position(|s| s == id)) {
                Some(s) => counts[c][s] += 1,
                None => failures[c] += 1,
            }
        }
    }
    let n_obs = cfg.settings()?.n_obs();
    let overfit = cfg
        .nested_pair
        .as_ref()
        .map(|p| overfit_summary(p, &candidates, &outcomes, n_obs))
        .transpose()?;
    let summary = ReplicationSummary {
        schema_version: SCHEMA_VERSION,
        replications: cfg.replications,
        master_seed: cfg.master_seed,
        n_obs,
        criteria: criteria.iter().map(CriterionSpec::name).collect(),
        spaces,
        counts,
        failures,
        failed_replications: outcomes.iter().filter(|o| o.error.is_some()).map(|o| o.index).collect(),
        overfit,
        outcomes,
    };
    let dir = cfg.out_dir();
    write_file(&dir.join("counts.csv"), summary.counts_csv()?.as_bytes())?;
    write_file(&dir.join("counts.json"), &to_json(&summary)?)?;
    write_file(&dir.join("replications.csv"), summary.outcomes_csv()?.as_bytes())?;
    Ok(summary)
}
