//! Pipeline configuration: one JSON file, one section per stage.
//!
//! Sections are optional as wholes; a present section must spell out every
//! field. That keeps partially overridden hyperparameters from silently
//! mixing with defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use condgan_core::data::MAX_CLASSES;
use condgan_core::error::{Error, Result};
use condgan_core::pretrain::TrainConfig;
use condgan_core::steer::ConditioningConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub n_per_class: usize,
    pub k: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_per_class: 400,
            k: 4,
            noise_sd: 0.05,
            seed: 7,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class == 0 {
            return Err(Error::Config("data.n_per_class must be >= 1".into()));
        }
        if self.k < 2 || self.k > MAX_CLASSES {
            return Err(Error::Config(format!(
                "data.k must be in 2..={MAX_CLASSES}, got {}",
                self.k
            )));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::Config(format!(
                "data.noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Conditional samples drawn per class for the report.
    pub n_samples_per_class: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_samples_per_class: 1000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples_per_class == 0 {
            return Err(Error::Config(
                "eval.n_samples_per_class must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory every stage reads artifacts from and writes them to.
    pub workdir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            workdir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "TrainConfig::gan_defaults")]
    pub gan: TrainConfig,
    #[serde(default = "TrainConfig::classifier_defaults")]
    pub classifier: TrainConfig,
    #[serde(default)]
    pub steer: ConditioningConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data: DataConfig::default(),
            gan: TrainConfig::gan_defaults(),
            classifier: TrainConfig::classifier_defaults(),
            steer: ConditioningConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Config = serde_json::from_slice(&bytes)?;
        Ok(cfg)
    }

    /// Every nested section checked before any stage runs.
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.gan.validate()?;
        self.classifier.validate()?;
        self.steer.validate()?;
        self.eval.validate()
    }

    /// Applies one seed to every stage, keeping the run reproducible from
    /// a single number.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.seed = seed;
        self.gan.seed = seed;
        self.classifier.seed = seed;
        self.steer.seed = seed;
    }

    /// Hash of the experiment parameters. The workdir is a location, not
    /// a parameter, so it stays out; two runs into different directories
    /// share a hash.
    pub fn semantic_hash(&self) -> Result<String> {
        #[derive(Serialize)]
        struct View<'a> {
            data: &'a DataConfig,
            gan: &'a TrainConfig,
            classifier: &'a TrainConfig,
            steer: &'a ConditioningConfig,
            eval: &'a EvalConfig,
        }
        condgan_core::checkpoint::config_hash(&View {
            data: &self.data,
            gan: &self.gan,
            classifier: &self.classifier,
            steer: &self.steer,
            eval: &self.eval,
        })
    }
}
