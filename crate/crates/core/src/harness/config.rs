//! Experiment configuration files.
//!
//! TOML with sections `[data]`, `[model]`, `[prior]`, `[optimizer]`,
//! `[output]` and `[mcmc]`. Relative paths resolve against the directory of
//! the config file.
//!
//! ```toml
//! [data]
//! kind = "classification"        # classification | regression | returns | har
//! path = "labor.csv"             # or a [data.synthetic] table
//! path_env = "EMGVB_LABOR_CSV"   # environment variable overriding `path`
//! target = "inlf"
//! features = ["nwifeinc", "educ"]  # empty: every other column
//! intercept = true
//! train_fraction = 0.75
//!
//! [model]
//! family = "logistic"            # logistic | linreg | conjugate | arch | garch | gjr | egarch | figarch
//!
//! [prior]
//! kind = "isotropic"             # isotropic | flat
//! mean = 0.0
//! variance = 5.0
//!
//! [optimizer]
//! algorithm = "emgvb"            # emgvb | mgvb
//! structure = "full"             # full | diagonal | block
//! beta = 0.01
//! l_max = 3000.0
//! l_max_init = 1000.0
//! omega = 0.4
//! window = 30
//! t_max = 1200
//! t_prime = 1000
//! patience = 500
//! samples = 75
//! init_variance = 0.05
//! seed = 1
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::GradEstimatorKind;
use crate::gaussian::PosteriorStructure;
use crate::optimizer::{OptimizerKind, TrainerConfig};

use super::data::DataKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub prior: PriorSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub mcmc: McmcSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default = "one")]
    pub train_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

/// Simulated data; `truth` holds coefficients, or `(omega, alpha, beta)` for returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub n: usize,
    #[serde(default)]
    pub truth: Vec<f64>,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub o: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// Known noise standard deviation of the conjugate model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(default = "isotropic")]
    pub kind: String,
    #[serde(default)]
    pub mean: f64,
    /// Prior variance of every coordinate.
    #[serde(default = "five")]
    pub variance: f64,
}

impl Default for PriorSection {
    fn default() -> Self {
        PriorSection {
            kind: isotropic(),
            mean: 0.0,
            variance: five(),
        }
    }
}

/// Initial mean: a scalar broadcast to every coordinate, a full vector, or `"random"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitMean {
    Scalar(f64),
    Vector(Vec<f64>),
    Named(String),
}

impl Default for InitMean {
    fn default() -> Self {
        InitMean::Scalar(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "emgvb")]
    pub algorithm: String,
    #[serde(default = "full")]
    pub structure: String,
    #[serde(default)]
    pub blocks: Vec<usize>,
    pub beta: f64,
    pub omega: f64,
    pub samples: usize,
    pub window: usize,
    pub patience: usize,
    pub t_max: usize,
    pub t_prime: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max_init: Option<f64>,
    #[serde(default = "gaussprior")]
    pub estimator: String,
    #[serde(default = "yes")]
    pub control_variates: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub init_mean: InitMean,
    /// Starting values on the constrained scale, mapped through the inverse transform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_theta: Option<Vec<f64>>,
    #[serde(default = "init_var")]
    pub init_variance: f64,
    #[serde(default)]
    pub snapshot_every: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        OptimizerSection {
            algorithm: emgvb(),
            structure: full(),
            blocks: Vec::new(),
            beta: t.beta,
            omega: t.omega,
            samples: t.samples,
            window: t.window,
            patience: t.patience,
            t_max: t.t_max,
            t_prime: t.t_prime,
            l_max: None,
            l_max_init: None,
            estimator: gaussprior(),
            control_variates: true,
            seed: 0,
            init_mean: InitMean::default(),
            init_theta: None,
            init_variance: init_var(),
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "out")]
    pub dir: PathBuf,
    /// Write a marginal-density CSV per parameter.
    #[serde(default)]
    pub density: bool,
    #[serde(default = "grid")]
    pub density_points: usize,
    /// Average predictions over this many posterior draws instead of plugging in the mean.
    #[serde(default)]
    pub predictive_draws: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: out(),
            density: false,
            density_points: grid(),
            predictive_draws: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    #[serde(default = "mcmc_samples")]
    pub n_samples: usize,
    #[serde(default = "pilot")]
    pub pilot: usize,
    #[serde(default = "initial_scale")]
    pub initial_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_scale: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for McmcSection {
    fn default() -> Self {
        McmcSection {
            n_samples: mcmc_samples(),
            pilot: pilot(),
            initial_scale: initial_scale(),
            step_scale: None,
            seed: 0,
        }
    }
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn five() -> f64 {
    5.0
}
fn init_var() -> f64 {
    0.05
}
fn isotropic() -> String {
    "isotropic".into()
}
fn emgvb() -> String {
    "emgvb".into()
}
fn full() -> String {
    "full".into()
}
fn gaussprior() -> String {
    "gaussian_prior_loglik".into()
}
fn out() -> PathBuf {
    PathBuf::from("out")
}
fn grid() -> usize {
    512
}
fn mcmc_samples() -> usize {
    50_000
}
fn pilot() -> usize {
    2_000
}
fn initial_scale() -> f64 {
    0.05
}

/// Model families understood by the runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Logistic,
    Linreg,
    Conjugate,
    Volatility(crate::models::VolatilityFamily),
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.data.path {
            if p.is_relative() {
                cfg.data.path = Some(base.join(p));
            }
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        self.data_kind()?;
        self.family()?;
        self.optimizer_kind()?;
        self.estimator()?;
        self.trainer_config()?.validate()?;
        match self.prior.kind.as_str() {
            "isotropic" if self.prior.variance > 0.0 => {}
            "isotropic" => return Err(Error::Config("prior variance must be positive".into())),
            "flat" if self.estimator()? == GradEstimatorKind::GaussianPriorLoglik => {
                return Err(Error::Config("gaussian_prior_loglik needs an isotropic prior".into()))
            }
            "flat" => {}
            other => return Err(Error::Config(format!("unknown prior kind '{other}'"))),
        }
        if !(self.optimizer.init_variance > 0.0) {
            return Err(Error::Config("init_variance must be positive".into()));
        }
        if let InitMean::Named(s) = &self.optimizer.init_mean {
            if s != "random" {
                return Err(Error::Config(format!("init_mean must be a number, a list or \"random\", got '{s}'")));
            }
        }
        if self.data.path.is_none() && self.data.path_env.is_none() && self.data.synthetic.is_none() {
            return Err(Error::Config("[data] needs a path, path_env or a synthetic table".into()));
        }
        match self.optimizer.structure.as_str() {
            "full" | "diagonal" | "block" => {}
            other => return Err(Error::Config(format!("unknown posterior structure '{other}'"))),
        }
        if self.output.density_points < 2 {
            return Err(Error::Config("density_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn data_kind(&self) -> Result<DataKind> {
        DataKind::parse(&self.data.kind)
    }

    pub fn family(&self) -> Result<Family> {
        use crate::models::VolatilityFamily as V;
        Ok(match self.model.family.as_str() {
            "logistic" => Family::Logistic,
            "linreg" => Family::Linreg,
            "conjugate" => Family::Conjugate,
            "arch" | "garch" | "gjr" | "figarch" => Family::Volatility(if self.model.family == "figarch" {
                V::Figarch
            } else {
                V::Garch
            }),
            "egarch" => Family::Volatility(V::Egarch),
            other => return Err(Error::Config(format!("unknown model family '{other}'"))),
        })
    }

    pub fn optimizer_kind(&self) -> Result<OptimizerKind> {
        OptimizerKind::parse(&self.optimizer.algorithm)
    }

    pub fn estimator(&self) -> Result<GradEstimatorKind> {
        GradEstimatorKind::parse(&self.optimizer.estimator).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn structure(&self) -> PosteriorStructure {
        match self.optimizer.structure.as_str() {
            "diagonal" => PosteriorStructure::Diagonal,
            "block" => PosteriorStructure::Block(self.optimizer.blocks.clone()),
            _ => PosteriorStructure::Full,
        }
    }

    pub fn trainer_config(&self) -> Result<TrainerConfig> {
        let o = &self.optimizer;
        Ok(TrainerConfig {
            beta: o.beta,
            omega: o.omega,
            samples: o.samples,
            window: o.window,
            patience: o.patience,
            t_max: o.t_max,
            t_prime: o.t_prime,
            l_max: o.l_max,
            l_max_init: o.l_max_init,
            estimator: self.estimator()?,
            control_variates: o.control_variates,
            seed: o.seed,
            snapshot_every: o.snapshot_every,
            ..TrainerConfig::default()
        })
    }

    /// Data file, with `path_env` taking precedence when the variable is set.
    pub fn data_path(&self) -> Option<PathBuf> {
        self.data
            .path_env
            .as_ref()
            .and_then(std::env::var_os)
            .map(PathBuf::from)
            .or_else(|| self.data.path.clone())
    }

    /// Fixed initial mean of length `dim`, or `None` for a random start.
    pub fn init_mean(&self, dim: usize) -> Result<Option<DVector<f64>>> {
        match &self.optimizer.init_mean {
            InitMean::Scalar(v) => Ok(Some(DVector::from_element(dim, *v))),
            InitMean::Vector(v) if v.len() == dim => Ok(Some(DVector::from_column_slice(v))),
            InitMean::Vector(v) => Err(Error::Config(format!(
                "init_mean has {} entries, model has {dim} parameters",
                v.len()
            ))),
            InitMean::Named(_) => Ok(None),
        }
    }
}
