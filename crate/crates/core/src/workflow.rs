//! Run configuration and the command-line workflows.
//!
//! Every workflow reads a [`RunConfig`] and writes into its output directory:
//!
//! | step       | writes                                                         |
//! |------------|----------------------------------------------------------------|
//! | `simulate` | the three input tables and `truth.json`                        |
//! | `fit`      | `draws/`, `holdout.csv`, `covariate_transform.json`, `ingest.json`, `summary.json`, `timing.json`, plots |
//! | `predict`  | `predictions.csv`, `prediction_summary.json`                   |
//! | `evaluate` | `metrics.json`, `plots/tjur_boxplot.svg`                       |
//! | `diagnose` | `diagnostics.json`, `plots/traces.svg`                         |

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dists::RngStream;
use crate::error::{Error, Result};
use crate::evaluate::{self, ConditionalTjur, PredictMode, PredictOptions};
use crate::gibbs;
use crate::io::{self, DataPaths, DrawsMeta, Ingested};
use crate::kernel;
use crate::model::{Dataset, FactorModel, Hyperparams, PosteriorDraws, ResponseKind, ScalarSummary};
use crate::simulate::{self, SimConfig};
use crate::svg;

/// Stream id of the holdout split; chains use ids `0..chains`.
const HOLDOUT_STREAM: u64 = u64::MAX;
/// Prediction draws use `RngStream::new(seed ^ PREDICT_SALT, t)`.
const PREDICT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataPaths,
    pub output: PathBuf,
    pub seed: u64,
    pub chains: usize,
    pub variant: FactorModel,
    pub holdout: HoldoutSpec,
    /// Overrides applied on top of [`Hyperparams::for_data`]; keys are
    /// `Hyperparams` field names, with the schedule under `mcmc`.
    pub model: Map<String, Value>,
    pub predict: PredictConfig,
    pub evaluate: EvaluateConfig,
    pub simulate: SimConfig,
    pub plots: PlotConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataPaths::default(),
            output: "out".into(),
            seed: 1,
            chains: 1,
            variant: FactorModel::Spatial,
            holdout: HoldoutSpec::default(),
            model: Map::new(),
            predict: PredictConfig::default(),
            evaluate: EvaluateConfig::default(),
            simulate: SimConfig::default(),
            plots: PlotConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutSpec {
    /// Fraction of sites held out at random (0 keeps every site).
    pub frac: f64,
    /// Explicit held-out site ids; takes precedence over `frac`.
    pub ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub mode: PredictMode,
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Pmse,
    Tjur,
    FrobeniusGap,
    ConditionalTjur,
    Inefficiency,
    Orthogonalization,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Simulation truth; defaults to `truth.json` beside the sites file.
    pub truth: Option<PathBuf>,
    /// `[target, condition]` species pairs for the conditional Tjur R2.
    pub pairs: Vec<[String; 2]>,
    /// Metrics to compute; all applicable ones when absent.
    pub metrics: Option<Vec<Metric>>,
    /// A second `metrics.json` whose per-species Tjur values are drawn
    /// beside this run's in the boxplot.
    pub compare: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    pub enabled: bool,
    /// Species mapped in the surface plots; the first three when empty.
    pub species: Vec<String>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        PlotConfig { enabled: true, species: vec![] }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub variant: Option<FactorModel>,
    pub holdout_frac: Option<f64>,
    pub min_presence: Option<usize>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative paths are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let value: Value = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        };
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    pub fn rebase(&mut self, base: &Path) {
        self.data.rebase(base);
        for p in [Some(&mut self.output), self.evaluate.truth.as_mut(), self.evaluate.compare.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.chains {
            self.chains = v;
        }
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(v) = o.holdout_frac {
            self.holdout.frac = v;
            self.holdout.ids = None;
        }
        if let Some(v) = o.min_presence {
            self.data.min_presence = v;
        }
        if let Some(v) = &o.output {
            self.output = v.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::invalid("need at least one chain"));
        }
        if !(0.0..1.0).contains(&self.holdout.frac) {
            return Err(Error::invalid(format!("holdout fraction must lie in [0,1), got {}", self.holdout.frac)));
        }
        Ok(())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output.join(name)
    }

    fn truth_path(&self) -> PathBuf {
        self.evaluate.truth.clone().unwrap_or_else(|| self.data.sites.with_file_name("truth.json"))
    }

    /// Hyperparameters for the training data with the config overrides.
    pub fn hyperparams(&self, train: &Dataset) -> Result<Hyperparams> {
        let get = |k: &str, d: usize| -> Result<usize> {
            match self.model.get(k) {
                None => Ok(d),
                Some(v) => v.as_u64().map(|u| u as usize).ok_or_else(|| Error::invalid(format!("model.{k} must be a non-negative integer"))),
            }
        };
        let base = Hyperparams::for_data(train, get("r", 5)?, get("n_atoms", 150)?)?;
        let mut obj = match serde_json::to_value(&base)? {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        merge_known(&mut obj, &self.model, "model")?;
        let mut hyper: Hyperparams = serde_json::from_value(Value::Object(obj)).map_err(|e| Error::invalid(format!("model: {e}")))?;
        hyper.factor_model = self.variant;
        hyper.mcmc.seed = self.seed;
        Ok(hyper)
    }
}

fn merge_known(dst: &mut Map<String, Value>, src: &Map<String, Value>, at: &str) -> Result<()> {
    for (k, v) in src {
        match (dst.get_mut(k), v) {
            (None, _) => return Err(Error::invalid(format!("unknown option `{at}.{k}`"))),
            (Some(Value::Object(d)), Value::Object(s)) => merge_known(d, s, &format!("{at}.{k}"))?,
            (Some(slot), _) => *slot = v.clone(),
        }
    }
    Ok(())
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(v: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let c = v.first().map_or(0, Vec::len);
    if v.iter().any(|r| r.len() != c) {
        return Err(Error::Parse("ragged matrix".into()));
    }
    Ok(DMatrix::from_fn(v.len(), c, |i, j| v[i][j]))
}

/// Simulation truth as written next to the simulated tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub kind: ResponseKind,
    pub species: Vec<String>,
    pub covariates: Vec<String>,
    pub sites: Vec<String>,
    pub b: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub w: Vec<Vec<f64>>,
    pub sigma2: f64,
    pub phi: f64,
    pub sigma_star: Vec<Vec<f64>>,
    pub latent: Vec<Vec<f64>>,
    pub simulated_covariates: bool,
    pub config: SimConfig,
}

impl TruthFile {
    /// `Sigma*` restricted to `species`, in that order.
    pub fn sigma_star_for(&self, species: &[String]) -> Result<DMatrix<f64>> {
        let full = from_rows(&self.sigma_star)?;
        let idx: Vec<usize> = species
            .iter()
            .map(|s| self.species.iter().position(|t| t == s).ok_or_else(|| Error::invalid(format!("species `{s}` not in the truth file"))))
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| full[(idx[i], idx[j])]))
    }
}

/// Generates a dataset, writes it to the configured input paths and the
/// truth beside it.
pub fn run_simulate(cfg: &RunConfig) -> Result<TruthFile> {
    let mut sim = cfg.simulate.clone();
    sim.seed = cfg.seed;
    if let Some(k) = cfg.data.kind {
        if k != sim.kind {
            return Err(Error::invalid("data.kind and simulate.kind disagree"));
        }
    }
    let (data, truth) = simulate::generate(&sim, &mut RngStream::new(sim.seed, 0))?;
    let ids = data.sites.ids().to_vec();
    let coords = DMatrix::from_fn(data.n(), 2, |i, j| data.sites.coords()[i][j]);
    io::write_id_table(&cfg.data.sites, &ids, &["x".into(), "y".into()], &coords)?;
    io::write_id_table(&cfg.data.covariates, &ids, &data.covariate_names, &data.x)?;
    io::write_id_table(&cfg.data.response, &ids, &data.species, &data.y)?;
    let file = TruthFile {
        kind: data.kind,
        species: data.species.clone(),
        covariates: data.covariate_names.clone(),
        sites: ids,
        b: rows(&truth.b),
        z: rows(&truth.z),
        labels: truth.labels.clone(),
        w: rows(&truth.w),
        sigma2: truth.sigma2,
        phi: truth.phi,
        sigma_star: rows(&truth.sigma_star),
        latent: rows(&truth.u),
        simulated_covariates: truth.simulated_covariates,
        config: sim,
    };
    io::write_json(&cfg.truth_path(), &file)?;
    Ok(file)
}

fn ingest_for(cfg: &RunConfig, reuse_transform: bool) -> Result<Ingested> {
    let mut paths = cfg.data.clone();
    let saved = cfg.out("covariate_transform.json");
    if reuse_transform && paths.transform.is_none() && saved.exists() {
        paths.transform = Some(saved);
    }
    io::ingest(&paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefSummary {
    pub species: String,
    pub covariate: String,
    #[serde(flatten)]
    pub summary: ScalarSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountProbability {
    pub count: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Most probable number of occupied clusters.
    pub mode: usize,
    pub mode_probability: f64,
    pub distribution: Vec<CountProbability>,
    /// Point-estimate partition of the species (least-squares clustering).
    pub partition: Vec<usize>,
}

impl ClusterSummary {
    pub fn of(draws: &PosteriorDraws) -> Option<Self> {
        let counts = draws.cluster_count_trace();
        let max = *counts.iter().max()?;
        let mut freq = vec![0usize; max + 1];
        for c in &counts {
            freq[*c] += 1;
        }
        let n = counts.len() as f64;
        let distribution: Vec<CountProbability> = freq
            .iter()
            .enumerate()
            .filter(|(_, f)| **f > 0)
            .map(|(count, f)| CountProbability { count, probability: *f as f64 / n })
            .collect();
        let best = distribution.iter().fold(&distribution[0], |a, b| if b.probability > a.probability { b } else { a });
        Some(ClusterSummary {
            mode: best.count,
            mode_probability: best.probability,
            distribution: distribution.clone(),
            partition: draws.point_partition(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Inefficiency factors, averaged over chains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfTable {
    pub phi: Option<f64>,
    pub sigma2: Option<f64>,
    pub coefficients: Option<Spread>,
    pub notes: Vec<String>,
}

fn chain_slices<'a>(draws: &'a PosteriorDraws, lengths: &[usize]) -> Vec<&'a [crate::model::Draw]> {
    let mut out = vec![];
    let mut at = 0;
    for &l in lengths {
        out.push(&draws.draws[at..at + l]);
        at += l;
    }
    out
}

fn chain_if<F: Fn(&crate::model::Draw) -> f64>(chains: &[&[crate::model::Draw]], f: F) -> std::result::Result<f64, String> {
    let mut vals = vec![];
    for c in chains {
        let trace: Vec<f64> = c.iter().map(&f).collect();
        vals.push(evaluate::inefficiency_factor(&trace).map_err(|e| e.to_string())?);
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn if_table(draws: &PosteriorDraws, chain_lengths: &[usize]) -> IfTable {
    let chains = chain_slices(draws, chain_lengths);
    let mut notes = vec![];
    let phi = match draws.factor_model {
        FactorModel::Spatial => chain_if(&chains, |d| d.phi).map_err(|e| notes.push(format!("phi: {e}"))).ok(),
        FactorModel::Independent => None,
    };
    let fixed_sigma2 = draws.draws.windows(2).all(|w| w[0].sigma2 == w[1].sigma2);
    let sigma2 = if fixed_sigma2 {
        None
    } else {
        chain_if(&chains, |d| d.sigma2).map_err(|e| notes.push(format!("sigma2: {e}"))).ok()
    };
    let coefficients = draws.draws.first().and_then(|d0| {
        let mut v = vec![];
        for idx in 0..d0.b.len() {
            match chain_if(&chains, |d| d.b.as_slice()[idx]) {
                Ok(x) => v.push(x),
                Err(e) => {
                    notes.push(format!("coefficients: {e}"));
                    return None;
                }
            }
        }
        v.sort_by(f64::total_cmp);
        Some(Spread { min: v[0], median: crate::model::quantile(&v, 0.5), max: v[v.len() - 1] })
    });
    IfTable { phi, sigma2, coefficients, notes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub kind: ResponseKind,
    pub factor_model: FactorModel,
    pub chains: usize,
    pub n_draws: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub r: usize,
    pub n_atoms: usize,
    pub phi_bounds: [f64; 2],
    pub phi: Option<ScalarSummary>,
    /// Distance at which the spatial correlation drops to 0.05.
    pub effective_range: Option<ScalarSummary>,
    /// Absent when the nugget is fixed.
    pub sigma2: Option<ScalarSummary>,
    pub phi_acceptance: Vec<f64>,
    pub clusters: ClusterSummary,
    pub coefficients: Vec<CoefSummary>,
    pub inefficiency: IfTable,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub chains: usize,
    pub sweeps_per_chain: usize,
}

pub struct FitOutput {
    pub data: Dataset,
    pub draws: PosteriorDraws,
    pub summary: FitSummary,
    pub timing: Timing,
}

/// Splits off the holdout, runs the chains in parallel and persists the draws,
/// a summary and plots.
pub fn run_fit(cfg: &RunConfig) -> Result<FitOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let ing = ingest_for(cfg, false)?;
    if !ing.report.dropped_species.is_empty() {
        warn(&format!(
            "dropped {} species with at most {} presences: {}",
            ing.report.dropped_species.len(),
            cfg.data.min_presence,
            ing.report.dropped_species.join(", ")
        ));
    }
    let mut data = ing.data;
    match &cfg.holdout.ids {
        Some(ids) => data.set_holdout_ids(ids)?,
        None => data.assign_holdout(cfg.holdout.frac, &mut RngStream::new(cfg.seed, HOLDOUT_STREAM))?,
    }
    let train = data.training();
    let hyper = cfg.hyperparams(&train)?;
    let mut warnings = hyper.validate(train.s())?;
    for w in &warnings {
        warn(w);
    }
    let chains: Vec<PosteriorDraws> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| gibbs::run_chain(&train, &hyper, &mut RngStream::new(cfg.seed, c as u64)))
        .collect::<Result<_>>()?;
    let phi_acceptance: Vec<f64> = chains.iter().map(|c| c.phi_acceptance).collect();
    let chain_lengths: Vec<usize> = chains.iter().map(PosteriorDraws::len).collect();
    let draws = PosteriorDraws::merge(chains)?;
    if draws.is_empty() {
        return Err(Error::invalid("no draws retained; increase n_iter or reduce burn_in"));
    }

    io::write_json(&cfg.out("covariate_transform.json"), &ing.transform)?;
    io::write_json(&cfg.out("ingest.json"), &ing.report)?;
    let test_ids: Vec<String> = data.test_indices().iter().map(|&i| data.sites.ids()[i].clone()).collect();
    io::write_id_list(&cfg.out("holdout.csv"), &test_ids)?;
    let meta = DrawsMeta {
        species: data.species.clone(),
        covariates: data.covariate_names.clone(),
        train_sites: train.sites.ids().to_vec(),
        chain_lengths: chain_lengths.clone(),
    };
    io::write_draws(&cfg.out("draws"), &draws, &meta)?;

    let spatial = hyper.spatial();
    let phi_trace = draws.phi_trace();
    let eff: Vec<f64> = phi_trace.iter().map(|&p| kernel::effective_range(p, 0.05)).collect::<Result<_>>()?;
    let sigma2 = if hyper.sigma2_fixed.is_some() { None } else { ScalarSummary::of(&draws.sigma2_trace()) };
    let mut coefficients = vec![];
    for (l, sp) in data.species.iter().enumerate() {
        for (j, cv) in data.covariate_names.iter().enumerate() {
            let t: Vec<f64> = draws.draws.iter().map(|d| d.b[(l, j)]).collect();
            coefficients.push(CoefSummary { species: sp.clone(), covariate: cv.clone(), summary: ScalarSummary::of(&t).unwrap() });
        }
    }
    let inefficiency = if_table(&draws, &chain_lengths);
    warnings.extend(inefficiency.notes.iter().cloned());
    let summary = FitSummary {
        kind: data.kind,
        factor_model: hyper.factor_model,
        chains: cfg.chains,
        n_draws: draws.len(),
        n_train: train.n(),
        n_test: test_ids.len(),
        r: hyper.r,
        n_atoms: hyper.n_atoms,
        phi_bounds: [hyper.phi_min, hyper.phi_max],
        phi: spatial.then(|| ScalarSummary::of(&phi_trace)).flatten(),
        effective_range: spatial.then(|| ScalarSummary::of(&eff)).flatten(),
        sigma2,
        phi_acceptance: if spatial { phi_acceptance } else { vec![] },
        clusters: ClusterSummary::of(&draws).expect("draws are non-empty"),
        coefficients,
        inefficiency,
        warnings,
    };
    io::write_json(&cfg.out("summary.json"), &summary)?;
    if cfg.plots.enabled {
        fit_plots(cfg, &train, &draws)?;
    }
    let timing = Timing { wall_seconds: start.elapsed().as_secs_f64(), chains: cfg.chains, sweeps_per_chain: hyper.mcmc.n_iter };
    io::write_json(&cfg.out("timing.json"), &timing)?;
    Ok(FitOutput { data, draws, summary, timing })
}

fn plot_species(cfg: &RunConfig, data: &Dataset) -> Result<Vec<usize>> {
    if cfg.plots.species.is_empty() {
        return Ok((0..data.s().min(3)).collect());
    }
    cfg.plots
        .species
        .iter()
        .map(|s| data.species.iter().position(|t| t == s).ok_or_else(|| Error::invalid(format!("plot species `{s}` not in the data"))))
        .collect()
}

fn fit_plots(cfg: &RunConfig, train: &Dataset, draws: &PosteriorDraws) -> Result<()> {
    let dir = cfg.out("plots");
    let coords = train.sites.coords();
    let w_mean = draws.mean_of(|d| d.w.clone()).expect("non-empty");
    let panels: Vec<(String, Vec<f64>)> = (0..w_mean.ncols()).map(|h| (format!("factor {}", h + 1), w_mean.column(h).iter().copied().collect())).collect();
    io::write_bytes(&dir.join("factor_surfaces.svg"), svg::site_maps("Posterior mean spatial factors", coords, &panels).as_bytes())?;
    let orth = evaluate::orthogonalize(draws, &train.x)?;
    for l in plot_species(cfg, train)? {
        let name = &train.species[l];
        let panels = vec![
            ("covariate surface X B*".to_string(), orth.fixed_surface.column(l).iter().copied().collect()),
            ("spatial surface W* Lambda".to_string(), orth.spatial_surface.column(l).iter().copied().collect()),
        ];
        let file = format!("surfaces_{}.svg", sanitize(name));
        io::write_bytes(&dir.join(file), svg::site_maps(&format!("Species {name}"), coords, &panels).as_bytes())?;
    }
    let mut series = vec![];
    if draws.factor_model == FactorModel::Spatial {
        series.push(("phi".to_string(), draws.phi_trace()));
    }
    io::write_bytes(&dir.join("phi_trace.svg"), svg::traces("Decay parameter", &series).as_bytes())
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Re-ingests the data and restores the holdout written by `fit`.
fn load_fitted(cfg: &RunConfig) -> Result<(Dataset, PosteriorDraws, io::DrawsManifest)> {
    let (draws, manifest) = io::read_draws(&cfg.out("draws"))?;
    let mut data = ingest_for(cfg, true)?.data;
    let holdout = io::read_id_list(&cfg.out("holdout.csv"))?;
    data.set_holdout_ids(&holdout)?;
    if data.species != manifest.meta.species {
        return Err(Error::invalid("species in the data differ from the fitted draws"));
    }
    if data.training().sites.ids() != manifest.meta.train_sites.as_slice() {
        return Err(Error::invalid("training sites differ from the fitted draws"));
    }
    Ok((data, draws, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesPrediction {
    pub species: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub kind: ResponseKind,
    pub mode: PredictMode,
    pub n_test: usize,
    pub n_draws: usize,
    pub species: Vec<SpeciesPrediction>,
    pub warnings: Vec<String>,
}

pub fn predict_options(cfg: &RunConfig) -> PredictOptions {
    PredictOptions { mode: cfg.predict.mode, seed: cfg.seed ^ PREDICT_SALT, jitter: cfg.predict.jitter, keep_draws: false }
}

pub fn run_predict(cfg: &RunConfig) -> Result<(evaluate::PredictionResult, PredictionSummary)> {
    let (data, draws, _) = load_fitted(cfg)?;
    let pred = evaluate::predict_heldout(&draws, &data, &predict_options(cfg))?;
    let mut warnings = vec![];
    if pred.site_ids.is_empty() {
        let w = "no held-out sites; the prediction table is empty".to_string();
        warn(&w);
        warnings.push(w);
    }
    let species = data
        .species
        .iter()
        .enumerate()
        .filter(|_| pred.mean.nrows() > 0)
        .map(|(l, s)| {
            let c = pred.mean.column(l);
            SpeciesPrediction { species: s.clone(), mean: c.mean(), min: c.min(), max: c.max() }
        })
        .collect();
    let summary = PredictionSummary {
        kind: pred.kind,
        mode: cfg.predict.mode,
        n_test: pred.site_ids.len(),
        n_draws: pred.n_draws,
        species,
        warnings,
    };
    io::write_predictions(&cfg.out("predictions.csv"), &pred)?;
    io::write_json(&cfg.out("prediction_summary.json"), &summary)?;
    Ok((pred, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesValue {
    pub species: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TjurReport {
    pub mean: f64,
    pub n_excluded: usize,
    pub per_species: Vec<SpeciesValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityCheck {
    pub max_identity_error: f64,
    pub max_orthogonality_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub kind: ResponseKind,
    pub factor_model: FactorModel,
    pub n_test: usize,
    pub n_draws: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tjur: Option<TjurReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frobenius_gap: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub conditional_tjur: Vec<ConditionalTjur>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inefficiency: Option<IfTable>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub orthogonalization: Option<OrthogonalityCheck>,
}

/// Test-site responses and predictions aligned to the same rows.
fn test_block(data: &Dataset, pred: &io::IdTable) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let idx = data.test_indices();
    let ids: Vec<&String> = idx.iter().map(|&i| &data.sites.ids()[i]).collect();
    if pred.ids.iter().collect::<Vec<_>>() != ids || pred.columns != data.species {
        return Err(Error::invalid("predictions.csv does not match the held-out sites and species; rerun predict"));
    }
    Ok((data.y.select_rows(&idx), pred.values.clone()))
}

pub fn run_evaluate(cfg: &RunConfig) -> Result<Metrics> {
    let (data, draws, manifest) = load_fitted(cfg)?;
    let truth_path = cfg.truth_path();
    let truth: Option<TruthFile> = if truth_path.exists() {
        Some(io::read_json(&truth_path)?)
    } else if cfg.evaluate.truth.is_some() {
        return Err(Error::invalid(format!("truth file {} not found", truth_path.display())));
    } else {
        None
    };
    let binary = data.kind == ResponseKind::Binary;
    let requested = cfg.evaluate.metrics.clone().unwrap_or_else(|| {
        let mut m = vec![if binary { Metric::Tjur } else { Metric::Pmse }];
        if truth.is_some() {
            m.push(Metric::FrobeniusGap);
        }
        if binary && !cfg.evaluate.pairs.is_empty() {
            m.push(Metric::ConditionalTjur);
        }
        m.extend([Metric::Inefficiency, Metric::Orthogonalization]);
        m
    });
    let needs_predictions = requested.iter().any(|m| matches!(m, Metric::Pmse | Metric::Tjur));
    let pred = if needs_predictions { Some(io::read_predictions(&cfg.out("predictions.csv"))?) } else { None };

    let mut out = Metrics {
        kind: data.kind,
        factor_model: draws.factor_model,
        n_test: data.test_indices().len(),
        n_draws: draws.len(),
        pmse: None,
        tjur: None,
        frobenius_gap: None,
        conditional_tjur: vec![],
        inefficiency: None,
        orthogonalization: None,
    };
    for m in &requested {
        match m {
            Metric::Pmse => {
                if binary {
                    return Err(Error::invalid("PMSE applies to continuous responses; use tjur for binary data"));
                }
                let (y, p) = test_block(&data, pred.as_ref().unwrap())?;
                out.pmse = Some(evaluate::pmse(&y, &p)?);
            }
            Metric::Tjur => {
                if !binary {
                    return Err(Error::invalid("Tjur R2 applies to binary responses; use pmse for continuous data"));
                }
                let (y, p) = test_block(&data, pred.as_ref().unwrap())?;
                let t = evaluate::tjur_r(&y, &p)?;
                out.tjur = Some(TjurReport {
                    mean: t.mean,
                    n_excluded: t.n_excluded,
                    per_species: data.species.iter().zip(&t.per_species).map(|(s, v)| SpeciesValue { species: s.clone(), value: *v }).collect(),
                });
            }
            Metric::FrobeniusGap => {
                let t = truth.as_ref().ok_or_else(|| Error::invalid("frobenius_gap needs a simulation truth file"))?;
                let hat = draws.sigma_star_hat().ok_or_else(|| Error::invalid("no posterior draws"))?;
                out.frobenius_gap = Some(evaluate::frobenius_gap(&t.sigma_star_for(&data.species)?, &hat)?);
            }
            Metric::ConditionalTjur => {
                if !binary {
                    return Err(Error::invalid("conditional Tjur R2 applies to binary responses"));
                }
                for [target, cond] in &cfg.evaluate.pairs {
                    let pos = |s: &String| data.species.iter().position(|t| t == s).ok_or_else(|| Error::invalid(format!("species `{s}` not in the model")));
                    let mut c = evaluate::conditional_tjur(&draws, &data, pos(target)?, pos(cond)?, cfg.predict.jitter)?;
                    c.target = target.clone();
                    c.condition = cond.clone();
                    out.conditional_tjur.push(c);
                }
            }
            Metric::Inefficiency => out.inefficiency = Some(if_table(&draws, &manifest.meta.chain_lengths)),
            Metric::Orthogonalization => {
                let o = evaluate::orthogonalize(&draws, &data.training().x)?;
                out.orthogonalization = Some(OrthogonalityCheck {
                    max_identity_error: o.max_identity_error,
                    max_orthogonality_error: o.max_orthogonality_error,
                });
            }
        }
    }
    io::write_json(&cfg.out("metrics.json"), &out)?;
    if cfg.plots.enabled {
        if let Some(t) = &out.tjur {
            let mut groups = vec![(format!("{:?}", out.factor_model).to_lowercase(), t.per_species.iter().filter_map(|v| v.value).collect())];
            if let Some(p) = &cfg.evaluate.compare {
                let other: Metrics = io::read_json(p)?;
                if let Some(ot) = other.tjur {
                    groups.push((format!("{:?}", other.factor_model).to_lowercase(), ot.per_species.iter().filter_map(|v| v.value).collect()));
                }
            }
            io::write_bytes(&cfg.out("plots").join("tjur_boxplot.svg"), svg::boxplots("Tjur R2 per species", &groups).as_bytes())?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub draws: usize,
    pub phi: Option<ScalarSummary>,
    pub sigma2: Option<ScalarSummary>,
    pub mean_clusters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_draws: usize,
    pub phi_acceptance: f64,
    pub chains: Vec<ChainDiagnostics>,
    pub inefficiency: IfTable,
    pub clusters: ClusterSummary,
    pub log_joint: Option<ScalarSummary>,
}

pub fn run_diagnose(cfg: &RunConfig) -> Result<Diagnostics> {
    let (draws, manifest) = io::read_draws(&cfg.out("draws"))?;
    let lengths = &manifest.meta.chain_lengths;
    let spatial = draws.factor_model == FactorModel::Spatial;
    let chains = chain_slices(&draws, lengths)
        .into_iter()
        .map(|c| {
            let phi: Vec<f64> = c.iter().map(|d| d.phi).collect();
            let s2: Vec<f64> = c.iter().map(|d| d.sigma2).collect();
            ChainDiagnostics {
                draws: c.len(),
                phi: spatial.then(|| ScalarSummary::of(&phi)).flatten(),
                sigma2: ScalarSummary::of(&s2),
                mean_clusters: c.iter().map(|d| d.occupied_clusters() as f64).sum::<f64>() / c.len().max(1) as f64,
            }
        })
        .collect();
    let diag = Diagnostics {
        n_draws: draws.len(),
        phi_acceptance: draws.phi_acceptance,
        chains,
        inefficiency: if_table(&draws, lengths),
        clusters: ClusterSummary::of(&draws).ok_or_else(|| Error::invalid("no posterior draws"))?,
        log_joint: ScalarSummary::of(&draws.log_joint),
    };
    io::write_json(&cfg.out("diagnostics.json"), &diag)?;
    if cfg.plots.enabled {
        let mut series = vec![];
        if spatial {
            series.push(("phi".to_string(), draws.phi_trace()));
        }
        series.push(("sigma2".to_string(), draws.sigma2_trace()));
        series.push(("clusters".to_string(), draws.cluster_count_trace().iter().map(|&c| c as f64).collect()));
        let plots = cfg.out("plots");
        for (name, v) in &series {
            io::write_bytes(&plots.join(format!("trace_{name}.svg")), svg::traces(&format!("Trace of {name}"), &[(name.clone(), v.clone())]).as_bytes())?;
        }
    }
    Ok(diag)
}
