use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::error::{Error, Result};
use crate::optim::{AdamConfig, EarlyStopper, PlateauScheduler};

/// Training run settings. Serialized as a flat TOML table whose keys are the
/// field names; every field except the two paths has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "defaults::lr")]
    pub lr: f64,
    #[serde(default = "defaults::weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "defaults::dropout")]
    pub dropout: f64,
    #[serde(default = "defaults::yes")]
    pub use_class_weights: bool,
    #[serde(default = "defaults::yes")]
    pub augment: bool,
    #[serde(default = "defaults::scheduler_factor")]
    pub scheduler_factor: f64,
    #[serde(default = "defaults::scheduler_patience")]
    pub scheduler_patience: usize,
    #[serde(default = "defaults::scheduler_min_lr")]
    pub scheduler_min_lr: f64,
    #[serde(default = "defaults::early_stop_min_delta")]
    pub early_stop_min_delta: f64,
    #[serde(default = "defaults::early_stop_patience")]
    pub early_stop_patience: usize,
    #[serde(default = "defaults::image_size")]
    pub image_size: usize,
    #[serde(default = "defaults::num_threads")]
    pub num_threads: usize,
    /// Write wall-clock epoch times to the log. Off gives byte-reproducible logs.
    #[serde(default = "defaults::yes")]
    pub log_epoch_time: bool,
    /// Report test metrics of the last epoch instead of the best-validation one.
    #[serde(default)]
    pub eval_final_model: bool,
}

mod defaults {
    use crate::optim::{EarlyStopper, PlateauScheduler};

    pub fn batch_size() -> usize {
        32
    }
    pub fn max_epochs() -> usize {
        100
    }
    pub fn lr() -> f64 {
        1e-3
    }
    pub fn weight_decay() -> f64 {
        1e-4
    }
    pub fn dropout() -> f64 {
        crate::model::DEFAULT_DROPOUT
    }
    pub fn yes() -> bool {
        true
    }
    pub fn scheduler_factor() -> f64 {
        PlateauScheduler::DEFAULT_FACTOR
    }
    pub fn scheduler_patience() -> usize {
        PlateauScheduler::DEFAULT_PATIENCE
    }
    pub fn scheduler_min_lr() -> f64 {
        PlateauScheduler::DEFAULT_MIN_LR
    }
    pub fn early_stop_min_delta() -> f64 {
        EarlyStopper::DEFAULT_MIN_DELTA
    }
    pub fn early_stop_patience() -> usize {
        EarlyStopper::DEFAULT_PATIENCE
    }
    pub fn image_size() -> usize {
        224
    }
    pub fn num_threads() -> usize {
        1
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string().trim().replace('\n', " "))
}

/// Parses one `--set` value: TOML literal if it is one, bare string otherwise.
fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl TrainConfig {
    /// Config with defaults for everything but the paths.
    pub fn new(dataset_root: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        let mut table = toml::Table::new();
        table.insert("dataset_root".into(), toml::Value::String(String::new()));
        table.insert("output_dir".into(), toml::Value::String(String::new()));
        let mut cfg: TrainConfig = table.try_into().expect("defaults deserialize");
        cfg.dataset_root = dataset_root.into();
        cfg.output_dir = output_dir.into();
        cfg
    }

    /// Builds a config from TOML text and `key=value` overrides (overrides win).
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_err)?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{item}' is not key=value")))?;
            table.insert(key.trim().to_string(), parse_value(value.trim()));
        }
        let cfg: TrainConfig = table.try_into().map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_threads != 1 {
            return Err(Error::Config(format!(
                "num_threads = {} is not supported; training is single-threaded",
                self.num_threads
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "image_size {} must be a positive multiple of 8",
                self.image_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.adam().validate()?;
        self.scheduler()?;
        self.early_stopper()?;
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn scheduler(&self) -> Result<PlateauScheduler> {
        PlateauScheduler::new(
            self.lr,
            self.scheduler_factor,
            self.scheduler_patience,
            self.scheduler_min_lr,
        )
    }

    pub fn early_stopper(&self) -> Result<EarlyStopper> {
        EarlyStopper::new(self.early_stop_min_delta, self.early_stop_patience)
    }

    pub fn augment_config(&self) -> Option<AugmentConfig> {
        self.augment.then(AugmentConfig::default)
    }

    /// Settings stored in checkpoints: everything but the machine-specific paths.
    pub fn snapshot_table(&self) -> toml::Table {
        let mut t = toml::Table::try_from(self).expect("config serializes");
        t.remove("dataset_root");
        t.remove("output_dir");
        t
    }
}
