//! Experiment orchestration and artifact export.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{kl_gaussian, PosteriorStructure, VariationalState};
use crate::models::density::{marginal_density, marginal_grid};
use crate::models::linreg::linreg_loglik;
use crate::models::logistic::logistic_loglik;
use crate::models::transforms::sigmoid;
use crate::models::{
    ConjugateGaussian, LinearRegression, LogisticRegression, Model, ParamTransform, PriorSpec, VolatilityFamily,
    VolatilityModel, VolatilitySpec,
};
use crate::optimizer::{run, RunOutput, StopReason};

use super::config::{ExperimentConfig, Family};
use super::data::{
    load_csv, synthetic_garch, synthetic_linear, synthetic_logistic, synthetic_realized_vol, DataKind, Dataset,
    Schema,
};
use super::metrics::{classification_metrics, regression_metrics, MetricsReport, SplitMetrics};
use super::metropolis::{metropolis_sample, tuned_metropolis, Chain};

pub const TRACE_FILE: &str = "trace.csv";
pub const RESULT_FILE: &str = "result.json";

/// A model fitted to the training split.
#[derive(Debug, Clone)]
pub enum BuiltModel {
    Logistic(LogisticRegression),
    Linreg(LinearRegression),
    Conjugate(ConjugateGaussian),
    Volatility(VolatilityModel),
}

impl BuiltModel {
    pub fn as_model(&self) -> &dyn Model {
        match self {
            BuiltModel::Logistic(m) => m,
            BuiltModel::Linreg(m) => m,
            BuiltModel::Conjugate(m) => m,
            BuiltModel::Volatility(m) => m,
        }
    }
}

/// Everything needed to fit and evaluate one config.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub model: BuiltModel,
    pub prior: PriorSpec,
}

/// Volatility spec named by the `[model]` section.
pub fn volatility_spec(cfg: &ExperimentConfig) -> Result<VolatilitySpec> {
    let m = &cfg.model;
    let (family, p, o, q) = match m.family.as_str() {
        "arch" => (VolatilityFamily::Garch, m.p.unwrap_or(1), 0, 0),
        "garch" => (VolatilityFamily::Garch, m.p.unwrap_or(1), m.o.unwrap_or(0), m.q.unwrap_or(1)),
        "gjr" => (VolatilityFamily::Garch, m.p.unwrap_or(1), m.o.unwrap_or(1), m.q.unwrap_or(1)),
        "egarch" => (VolatilityFamily::Egarch, m.p.unwrap_or(1), m.o.unwrap_or(1), m.q.unwrap_or(1)),
        "figarch" => (VolatilityFamily::Figarch, m.p.unwrap_or(1), 0, m.q.unwrap_or(1)),
        other => return Err(Error::Config(format!("'{other}' is not a volatility model"))),
    };
    let spec = VolatilitySpec::new(family, p, o, q)?;
    Ok(match m.truncation {
        Some(l) => spec.with_truncation(l),
        None => spec,
    })
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let kind = cfg.data_kind()?;
    let d = &cfg.data;
    if let Some(path) = cfg.data_path() {
        let target = d
            .target
            .clone()
            .ok_or_else(|| Error::Config("[data] target is required for csv input".into()))?;
        let schema = Schema {
            kind,
            target,
            features: d.features.clone(),
            intercept: d.intercept,
            train_fraction: d.train_fraction,
            shuffle_seed: d.shuffle_seed,
        };
        return load_csv(&path, &schema);
    }
    let syn = d
        .synthetic
        .as_ref()
        .ok_or_else(|| Error::Config("[data] has neither a path nor a synthetic table".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(syn.seed);
    let truth = DVector::from_column_slice(&syn.truth);
    match kind {
        DataKind::Classification => synthetic_logistic(syn.n, &truth, d.intercept, d.train_fraction, &mut rng),
        DataKind::Regression => synthetic_linear(syn.n, &truth, syn.noise_sd, d.intercept, d.train_fraction, &mut rng),
        DataKind::Returns => {
            if truth.len() != 3 {
                return Err(Error::Config("synthetic returns need truth = [omega, alpha, beta]".into()));
            }
            synthetic_garch(syn.n, truth[0], truth[1], truth[2], d.train_fraction, &mut rng)
        }
        DataKind::Har => synthetic_realized_vol(syn.n, d.train_fraction, &mut rng),
    }
}

impl Experiment {
    /// Loads data and builds the model on the training split.
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let dataset = load_dataset(config)?;
        let (x, y) = dataset.train();
        let model = match config.family()? {
            Family::Logistic => BuiltModel::Logistic(LogisticRegression::new(x, y)?.with_names(dataset.names.clone())),
            Family::Linreg => BuiltModel::Linreg(LinearRegression::new(x, y)?.with_names(dataset.names.clone())),
            Family::Conjugate => {
                let sigma = config
                    .model
                    .noise_sd
                    .ok_or_else(|| Error::Config("conjugate model needs noise_sd".into()))?;
                BuiltModel::Conjugate(ConjugateGaussian::new(x, y, sigma)?)
            }
            Family::Volatility(_) => {
                if dataset.kind != DataKind::Returns {
                    return Err(Error::Config("volatility models need kind = \"returns\"".into()));
                }
                let (train, _) = dataset.demeaned_returns();
                BuiltModel::Volatility(VolatilityModel::new(volatility_spec(config)?, train)?)
            }
        };
        let dim = model.as_model().dim();
        let prior = match config.prior.kind.as_str() {
            "flat" => PriorSpec::flat(dim),
            _ => PriorSpec::isotropic_covariance(dim, config.prior.mean, config.prior.variance)?,
        };
        Ok(Experiment {
            config: config.clone(),
            dataset,
            model,
            prior,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.as_model().dim()
    }

    /// `N(mu_1, init_variance I)` in the configured structure.
    pub fn initial_state(&self) -> Result<VariationalState> {
        let cfg = &self.config;
        let dim = self.dim();
        let variance = cfg.optimizer.init_variance;
        let mu = if let Some(theta) = &cfg.optimizer.init_theta {
            if theta.len() != dim {
                return Err(Error::Config(format!("init_theta has {} entries, model has {dim}", theta.len())));
            }
            self.model
                .as_model()
                .transform()
                .inverse(&DVector::from_column_slice(theta))
                .map_err(|e| Error::Config(format!("init_theta: {e}")))?
        } else {
            match cfg.init_mean(dim)? {
                Some(mu) => mu,
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.optimizer.seed ^ 0x5eed);
                    DVector::from_fn(dim, |_, _| variance.sqrt() * rng.sample::<f64, _>(StandardNormal))
                }
            }
        };
        VariationalState::isotropic(mu, variance, cfg.structure())
    }

    /// Runs the configured optimizer from the initial state.
    pub fn fit(&self) -> Result<RunOutput> {
        let init = self.initial_state()?;
        run(
            self.model.as_model(),
            &self.prior,
            &self.config.trainer_config()?,
            self.config.optimizer_kind()?,
            &init,
        )
    }

    /// Train and test metrics at the posterior mean (or averaged over draws when configured).
    pub fn metrics(&self, state: &VariationalState, lb: f64) -> Result<MetricsReport> {
        let mu = state.mu();
        let draws = self.config.output.predictive_draws;
        let (xtr, ytr) = self.dataset.train();
        let (xte, yte) = self.dataset.test();
        let has_test = self.dataset.has_test();
        let (train, test) = match &self.model {
            BuiltModel::Logistic(_) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.config.optimizer.seed.wrapping_add(1));
                let samples = if draws > 0 { state.sample(draws, &mut rng) } else { Vec::new() };
                let split = |x: &DMatrix<f64>, y: &DVector<f64>| -> Result<SplitMetrics> {
                    let probs: Vec<f64> = if samples.is_empty() {
                        (x * mu).iter().map(|&e| sigmoid(e)).collect()
                    } else {
                        let mut acc = DVector::zeros(x.nrows());
                        for b in &samples {
                            acc += (x * b).map(sigmoid);
                        }
                        (acc / samples.len() as f64).iter().copied().collect()
                    };
                    Ok(SplitMetrics {
                        n: y.len(),
                        loglik: logistic_loglik(mu, x, y)?,
                        classification: Some(classification_metrics(y.as_slice(), &probs, 0.5)?),
                        mse: None,
                    })
                };
                (split(&xtr, &ytr)?, if has_test { Some(split(&xte, &yte)?) } else { None })
            }
            BuiltModel::Linreg(_) | BuiltModel::Conjugate(_) => {
                let k = xtr.ncols();
                let beta = mu.rows(0, k).into_owned();
                let split = |x: &DMatrix<f64>, y: &DVector<f64>| -> Result<SplitMetrics> {
                    let fitted = x * &beta;
                    let loglik = match &self.model {
                        BuiltModel::Conjugate(m) => ConjugateGaussian::new(x.clone(), y.clone(), m.sigma())?
                            .log_likelihood(mu)?,
                        _ => linreg_loglik(mu, x, y)?,
                    };
                    Ok(SplitMetrics {
                        n: y.len(),
                        loglik,
                        classification: None,
                        mse: Some(regression_metrics(y.as_slice(), fitted.as_slice())?),
                    })
                };
                (split(&xtr, &ytr)?, if has_test { Some(split(&xte, &yte)?) } else { None })
            }
            BuiltModel::Volatility(m) => {
                let (train, test) = self.dataset.demeaned_returns();
                let all: Vec<f64> = train.iter().chain(&test).copied().collect();
                let vars = m.fitted_variances(mu, &all)?;
                let theta = m.spec().to_constrained(mu);
                let ll_train = m.log_likelihood(mu)?;
                let proxy = |r: &[f64]| r.iter().map(|x| x * x).collect::<Vec<f64>>();
                let n = train.len();
                let tr = SplitMetrics {
                    n,
                    loglik: ll_train,
                    classification: None,
                    mse: Some(regression_metrics(&proxy(&train), &vars[..n])?),
                };
                let te = if test.is_empty() {
                    None
                } else {
                    let ll_all = m.spec().loglik_constrained(&theta, &all, m.init_var())?;
                    Some(SplitMetrics {
                        n: test.len(),
                        loglik: ll_all - ll_train,
                        classification: None,
                        mse: Some(regression_metrics(&proxy(&test), &vars[n..])?),
                    })
                };
                (tr, te)
            }
        };
        Ok(MetricsReport { lb, train, test })
    }
}

/// Fitted posterior as stored in the result JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub structure: String,
    pub block_sizes: Vec<usize>,
    pub mean: Vec<f64>,
    /// Per block covariance matrices (row-major rows); one `1x1` block per coordinate when diagonal.
    pub covariance: Vec<Vec<Vec<f64>>>,
    pub precision: Vec<Vec<Vec<f64>>>,
    /// `T(mu)` on the constrained scale.
    pub constrained_mean: Vec<f64>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl PosteriorSummary {
    pub fn from_state(state: &VariationalState, transform: &ParamTransform) -> Self {
        let (covariance, precision) = match (state.dense_blocks(), state.diagonal_precision()) {
            (Some(blocks), _) => (
                blocks.iter().map(|b| rows(b.cov.as_matrix())).collect(),
                blocks.iter().map(|b| rows(b.prec.as_matrix())).collect(),
            ),
            (None, Some(p)) => (
                p.iter().map(|v| vec![vec![1.0 / v]]).collect(),
                p.iter().map(|v| vec![vec![*v]]).collect(),
            ),
            (None, None) => (Vec::new(), Vec::new()),
        };
        PosteriorSummary {
            structure: state.structure().name().to_owned(),
            block_sizes: state.block_ranges().iter().map(|r| r.len()).collect(),
            mean: state.mu().iter().copied().collect(),
            covariance,
            precision,
            constrained_mean: transform.forward(state.mu()).iter().copied().collect(),
        }
    }

    /// Rebuilds the variational state from the stored precision blocks.
    pub fn to_state(&self) -> Result<VariationalState> {
        let d = self.mean.len();
        let mu = DVector::from_column_slice(&self.mean);
        let mut prec = DMatrix::zeros(d, d);
        let mut start = 0;
        for block in &self.precision {
            for (i, row) in block.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    prec[(start + i, start + j)] = *v;
                }
            }
            start += block.len();
        }
        let structure = match self.structure.as_str() {
            "diagonal" => PosteriorStructure::Diagonal,
            "block" => PosteriorStructure::Block(self.block_sizes.clone()),
            _ => PosteriorStructure::Full,
        };
        VariationalState::from_dense_precision(mu, &prec, structure)
    }
}

/// Contents of `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub model: String,
    pub algorithm: String,
    pub param_names: Vec<String>,
    pub seed: u64,
    pub iterations: usize,
    pub best_iter: usize,
    pub stop_reason: String,
    pub posterior: PosteriorSummary,
    pub metrics: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub kl_to_exact: Option<f64>,
    pub config: ExperimentConfig,
    pub wall_clock_seconds: f64,
}

impl ExperimentResult {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Paths written by a successful run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub trace: PathBuf,
    pub result: PathBuf,
    pub densities: Vec<PathBuf>,
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// `x,density` rows for parameter `index` on a grid of `points`.
pub fn density_csv(
    state: &VariationalState,
    transform: &ParamTransform,
    index: usize,
    points: usize,
    seed: u64,
) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = marginal_grid(state, transform, index, points, &mut rng)?;
    let dens = marginal_density(state, transform, index, &grid, &mut rng)?;
    let mut out = String::from("x,density\n");
    for (x, y) in grid.iter().zip(dens) {
        out.push_str(&format!("{x},{y}\n"));
    }
    Ok(out)
}

/// Constrained-scale transform implied by a config, without loading data.
pub fn config_transform(cfg: &ExperimentConfig, dim: usize) -> Result<ParamTransform> {
    Ok(match cfg.family()? {
        Family::Logistic | Family::Conjugate => ParamTransform::identity(dim),
        Family::Linreg => {
            let mut coords = vec![crate::models::CoordTransform::Identity; dim];
            if let Some(last) = coords.last_mut() {
                *last = crate::models::CoordTransform::Exp;
            }
            ParamTransform::Coordinatewise(coords)
        }
        Family::Volatility(_) => ParamTransform::Joint(std::sync::Arc::new(volatility_spec(cfg)?)),
    })
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::NotRun => "not_run",
        StopReason::MaxIterations => "max_iterations",
        StopReason::Patience => "patience",
    }
}

/// Fits and assembles the result without touching the filesystem.
pub fn execute(exp: &Experiment) -> Result<(RunOutput, ExperimentResult)> {
    let started = Instant::now();
    let out = exp.fit()?;
    let model = exp.model.as_model();
    let lb = out.trace.best_smoothed().unwrap_or(f64::NAN);
    let metrics = exp.metrics(&out.state, lb)?;
    let kl_to_exact = match &exp.model {
        BuiltModel::Conjugate(m) if exp.prior.is_gaussian() => {
            Some(kl_gaussian(&out.state, &m.exact_posterior(&exp.prior)?)?)
        }
        _ => None,
    };
    let result = ExperimentResult {
        model: model.name(),
        algorithm: exp.config.optimizer.algorithm.clone(),
        param_names: model.param_names(),
        seed: exp.config.optimizer.seed,
        iterations: out.trace.len(),
        best_iter: out.trace.best_iter,
        stop_reason: stop_name(out.trace.stop).into(),
        posterior: PosteriorSummary::from_state(&out.state, &model.transform()),
        metrics,
        kl_to_exact,
        config: exp.config.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((out, result))
}

/// Loads a config, runs it and writes the trace, result and optional density files.
///
/// Nothing is left behind when any step fails.
pub fn run_experiment(config_path: &Path) -> Result<RunArtifacts> {
    let cfg = ExperimentConfig::load(config_path)?;
    let exp = Experiment::build(&cfg)?;
    let (out, result) = execute(&exp)?;
    let dir = cfg.output.dir.clone();
    let mut written: Vec<PathBuf> = Vec::new();
    let outcome = (|| -> Result<RunArtifacts> {
        std::fs::create_dir_all(&dir)?;
        let trace = dir.join(TRACE_FILE);
        write_atomic(&trace, out.trace.to_csv().as_bytes())?;
        written.push(trace.clone());
        let mut densities = Vec::new();
        if cfg.output.density {
            let transform = exp.model.as_model().transform();
            for (i, name) in result.param_names.iter().enumerate() {
                let csv = density_csv(&out.state, &transform, i, cfg.output.density_points, cfg.optimizer.seed)?;
                let path = dir.join(format!("density_{i}_{name}.csv"));
                write_atomic(&path, csv.as_bytes())?;
                written.push(path.clone());
                densities.push(path);
            }
        }
        let json = serde_json::to_string_pretty(&result).map_err(|e| Error::Io(e.to_string()))?;
        let path = dir.join(RESULT_FILE);
        write_atomic(&path, json.as_bytes())?;
        written.push(path.clone());
        Ok(RunArtifacts {
            trace,
            result: path,
            densities,
        })
    })();
    if outcome.is_err() {
        for p in &written {
            let _ = std::fs::remove_file(p);
        }
    }
    outcome
}

/// Reference chain for a config, started from the initial mean.
pub fn run_mcmc(exp: &Experiment) -> Result<Chain> {
    let init = exp.initial_state()?;
    let m = &exp.config.mcmc;
    match m.step_scale {
        Some(s) => metropolis_sample(exp.model.as_model(), &exp.prior, init.mu(), m.n_samples, s, m.seed),
        None => tuned_metropolis(
            exp.model.as_model(),
            &exp.prior,
            init.mu(),
            m.n_samples,
            m.pilot,
            m.initial_scale,
            m.seed,
        ),
    }
}

/// Summary written by the `mcmc` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub param_names: Vec<String>,
    pub draws: usize,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub ess: Vec<f64>,
    pub mcse: Vec<f64>,
    pub step_scale: Vec<f64>,
}

impl ChainSummary {
    pub fn new(chain: &Chain, names: Vec<String>) -> Self {
        let cov = chain.covariance();
        ChainSummary {
            param_names: names,
            draws: chain.len(),
            acceptance_rate: chain.acceptance_rate,
            mean: chain.mean().iter().copied().collect(),
            sd: (0..chain.dim()).map(|i| cov[(i, i)].sqrt()).collect(),
            ess: chain.ess().iter().copied().collect(),
            mcse: chain.mcse().iter().copied().collect(),
            step_scale: chain.step_scale.iter().copied().collect(),
        }
    }
}
