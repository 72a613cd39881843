//! Experiment configuration read from INI-style files.
//!
//! ```ini
//! # comments start with '#' or ';'
//! [dataset]
//! name = two_points        # two_points | sine | csv:<path>
//! n_points = 20            # sine only
//! noise_sd = 0.1           # sine only
//!
//! [experiment]
//! activation = erf         # erf | tanh | relu
//! widths = 125, 1000, 8000 # strictly increasing
//! seeds = 0, 1, 2, 3, 4
//! width = 1000             # single-run commands
//! seed = 0                 # single-run commands and data generation
//!
//! [prior]
//! sigma2_w1 = 2
//! sigma2_b1 = 2
//! sigma2_w2 = 2
//! sigma2_noise = 0.01
//!
//! [train]
//! epochs = 20000
//! learning_rate = 0.001
//! momentum = 0.9
//! mc_samples = 64
//! clip_norm = 10
//! restart_period = 500
//! lr_min = 0
//! record_every = 100
//!
//! [grid]
//! n_points = 50
//! padding = 1.0
//!
//! [predictive]
//! n_samples = 2000
//! n_functions = 0          # sampled functions written by `posterior`
//!
//! [prior_check]
//! n_functions = 1000
//! n_bins = 40
//!
//! [nngp]
//! tanh_samples = 100000    # Monte Carlo draws behind the tanh kernel
//!
//! [output]
//! dir = out
//! ```
//!
//! Every key is optional. Unknown sections or keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use widthlab_core::model::{Activation, PriorConfig};
use widthlab_core::vi::TrainConfig;

use crate::datasets::DatasetSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Read(#[from] ini::Error),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for `{key}` in [{section}]: {message}")]
    Value { section: String, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n_points: usize,
    /// Margin added on both sides of the training inputs, in standardized units.
    pub padding: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_points: 50, padding: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveConfig {
    pub n_samples: usize,
    pub n_functions: usize,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        Self { n_samples: 2000, n_functions: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorCheckConfig {
    pub n_functions: usize,
    pub n_bins: usize,
}

impl Default for PriorCheckConfig {
    fn default() -> Self {
        Self { n_functions: 1000, n_bins: 40 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NngpConfig {
    pub tanh_samples: usize,
}

impl Default for NngpConfig {
    fn default() -> Self {
        Self { tanh_samples: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub activation: Activation,
    pub widths: Vec<usize>,
    pub seeds: Vec<u64>,
    pub width: usize,
    pub seed: u64,
    pub prior: PriorConfig,
    pub train: TrainConfig,
    pub grid: GridConfig,
    pub predictive: PredictiveConfig,
    pub prior_check: PriorCheckConfig,
    pub nngp: NngpConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::TwoPoints,
            activation: Activation::Erf,
            widths: vec![125, 500, 2000, 8000],
            seeds: vec![0],
            width: 1000,
            seed: 0,
            prior: PriorConfig::default(),
            train: TrainConfig::default(),
            grid: GridConfig::default(),
            predictive: PredictiveConfig::default(),
            prior_check: PriorCheckConfig::default(),
            nngp: NngpConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("dataset", &["name", "n_points", "noise_sd"]),
    ("experiment", &["activation", "widths", "seeds", "width", "seed"]),
    ("prior", &["sigma2_w1", "sigma2_b1", "sigma2_w2", "sigma2_noise"]),
    (
        "train",
        &[
            "epochs",
            "learning_rate",
            "momentum",
            "mc_samples",
            "clip_norm",
            "restart_period",
            "lr_min",
            "record_every",
        ],
    ),
    ("grid", &["n_points", "padding"]),
    ("predictive", &["n_samples", "n_functions"]),
    ("prior_check", &["n_functions", "n_bins"]),
    ("nngp", &["tanh_samples"]),
    ("output", &["dir"]),
];

struct Reader<'a> {
    ini: &'a Ini,
}

impl Reader<'_> {
    fn get<T>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let Some(raw) = self.ini.section(Some(section)).and_then(|s| s.get(key)) else {
            return Ok(None);
        };
        raw.trim().parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
            section: section.into(),
            key: key.into(),
            message: e.to_string(),
        })
    }

    fn set<T>(&self, section: &str, key: &str, target: &mut T) -> Result<(), ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        if let Some(v) = self.get(section, key)? {
            *target = v;
        }
        Ok(())
    }

    fn list<T>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        match self.get::<String>(section, key)? {
            None => Ok(None),
            Some(raw) => parse_list(&raw).map(Some).map_err(|message| ConfigError::Value {
                section: section.into(),
                key: key.into(),
                message,
            }),
        }
    }
}

/// Parses a comma-separated list such as `125, 1000, 8000`.
pub fn parse_list<T>(raw: &str) -> Result<Vec<T>, String>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e: T::Err| format!("`{s}`: {e}")))
        .collect()
}

impl ExperimentConfig {
    pub fn from_ini_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_ini(&Ini::load_from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_ini(&Ini::load_from_file(path)?)
    }

    fn from_ini(ini: &Ini) -> Result<Self, ConfigError> {
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((key, _)) = props.iter().next() {
                    return Err(ConfigError::UnknownKey { section: String::new(), key: key.into() });
                }
                continue;
            };
            let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| *s == name) else {
                return Err(ConfigError::UnknownSection(name.into()));
            };
            if let Some((key, _)) = props.iter().find(|(k, _)| !keys.contains(k)) {
                return Err(ConfigError::UnknownKey { section: name.into(), key: key.into() });
            }
        }

        let r = Reader { ini };
        let mut cfg = Self::default();
        if let Some(name) = r.get::<String>("dataset", "name")? {
            cfg.dataset = DatasetSpec::parse(&name).map_err(|message| ConfigError::Value {
                section: "dataset".into(),
                key: "name".into(),
                message,
            })?;
        }
        if let DatasetSpec::Sine { n_points, noise_sd } = &mut cfg.dataset {
            r.set("dataset", "n_points", n_points)?;
            r.set("dataset", "noise_sd", noise_sd)?;
        }
        r.set("experiment", "activation", &mut cfg.activation)?;
        if let Some(w) = r.list("experiment", "widths")? {
            cfg.widths = w;
        }
        if let Some(s) = r.list("experiment", "seeds")? {
            cfg.seeds = s;
        }
        r.set("experiment", "width", &mut cfg.width)?;
        r.set("experiment", "seed", &mut cfg.seed)?;

        r.set("prior", "sigma2_w1", &mut cfg.prior.sigma2_w1)?;
        r.set("prior", "sigma2_b1", &mut cfg.prior.sigma2_b1)?;
        r.set("prior", "sigma2_w2", &mut cfg.prior.sigma2_w2_tilde)?;
        r.set("prior", "sigma2_noise", &mut cfg.prior.sigma2_noise)?;

        let t = &mut cfg.train;
        r.set("train", "epochs", &mut t.epochs)?;
        r.set("train", "learning_rate", &mut t.learning_rate)?;
        r.set("train", "momentum", &mut t.momentum)?;
        r.set("train", "mc_samples", &mut t.mc_samples)?;
        r.set("train", "clip_norm", &mut t.clip_norm)?;
        r.set("train", "restart_period", &mut t.restart_period)?;
        r.set("train", "lr_min", &mut t.lr_min)?;
        r.set("train", "record_every", &mut t.record_every)?;

        r.set("grid", "n_points", &mut cfg.grid.n_points)?;
        r.set("grid", "padding", &mut cfg.grid.padding)?;
        r.set("predictive", "n_samples", &mut cfg.predictive.n_samples)?;
        r.set("predictive", "n_functions", &mut cfg.predictive.n_functions)?;
        r.set("prior_check", "n_functions", &mut cfg.prior_check.n_functions)?;
        r.set("prior_check", "n_bins", &mut cfg.prior_check.n_bins)?;
        r.set("nngp", "tanh_samples", &mut cfg.nngp.tanh_samples)?;
        if let Some(dir) = r.get::<String>("output", "dir")? {
            cfg.output_dir = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.widths.is_empty() {
            return invalid("widths must not be empty");
        }
        if self.widths[0] == 0 || self.widths.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("widths must be positive and strictly increasing");
        }
        if self.seeds.is_empty() {
            return invalid("seeds must not be empty");
        }
        if self.width == 0 {
            return invalid("width must be positive");
        }
        if self.grid.n_points < 2 {
            return invalid("grid n_points must be at least 2");
        }
        if !(self.grid.padding >= 0.0 && self.grid.padding.is_finite()) {
            return invalid("grid padding must be finite and non-negative");
        }
        if self.predictive.n_samples < 2 {
            return invalid("predictive n_samples must be at least 2");
        }
        if self.prior_check.n_functions < 2 || self.prior_check.n_bins == 0 {
            return invalid("prior_check needs n_functions ≥ 2 and n_bins ≥ 1");
        }
        if self.nngp.tanh_samples == 0 {
            return invalid("nngp tanh_samples must be positive");
        }
        if let DatasetSpec::Sine { n_points, noise_sd } = self.dataset {
            if n_points < 2 || !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                return invalid("sine dataset needs n_points ≥ 2 and a finite noise_sd ≥ 0");
            }
        }
        self.prior.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }
}
