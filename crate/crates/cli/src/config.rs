//! Per-dataset run configuration, read from a flat TOML file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use latentwatch::bundle::PipelineConfig;
use latentwatch::nn::{AdamConfig, Pooling};
use latentwatch::{AutoencoderConfig, DetectorConfig, ForecasterConfig, Rule, SplitSpec};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Entry in the label file; defaults to the dataset's file stem.
    #[serde(default)]
    pub key: Option<String>,
    pub window: usize,
    #[serde(default = "defaults::latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "defaults::context_len")]
    pub context_len: usize,
    #[serde(default = "defaults::ae_epochs")]
    pub ae_epochs: usize,
    #[serde(default = "defaults::forecaster_epochs")]
    pub forecaster_epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "defaults::validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "defaults::rule")]
    pub rule: String,
    #[serde(default = "defaults::pairs")]
    pub pairs: usize,
    #[serde(default = "defaults::warmup")]
    pub warmup: usize,
    #[serde(default = "defaults::quantile")]
    pub quantile: f64,
    #[serde(default = "defaults::out")]
    pub out: PathBuf,

    // Model sizes; rarely changed.
    #[serde(default = "defaults::hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "defaults::model_dim")]
    pub model_dim: usize,
    #[serde(default = "defaults::heads")]
    pub heads: usize,
    #[serde(default = "defaults::blocks")]
    pub blocks: usize,
    #[serde(default = "defaults::pooling")]
    pub pooling: Pooling,
    /// Autoencoder step size.
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::forecaster_learning_rate")]
    pub forecaster_learning_rate: f64,
}

mod defaults {
    use std::path::PathBuf;

    use latentwatch::nn::{AdamConfig, Pooling};
    use latentwatch::ForecasterConfig;

    pub fn latent_dim() -> usize {
        8
    }
    pub fn context_len() -> usize {
        16
    }
    pub fn ae_epochs() -> usize {
        500
    }
    pub fn forecaster_epochs() -> usize {
        5
    }
    pub fn train_fraction() -> f64 {
        0.3
    }
    pub fn validation_fraction() -> f64 {
        0.1
    }
    pub fn rule() -> String {
        "A".into()
    }
    pub fn pairs() -> usize {
        2
    }
    pub fn warmup() -> usize {
        50
    }
    pub fn quantile() -> f64 {
        1.0
    }
    pub fn out() -> PathBuf {
        PathBuf::from("runs")
    }
    pub fn hidden() -> Vec<usize> {
        vec![64, 32]
    }
    pub fn model_dim() -> usize {
        32
    }
    pub fn heads() -> usize {
        4
    }
    pub fn blocks() -> usize {
        2
    }
    pub fn pooling() -> Pooling {
        Pooling::Mean
    }
    pub fn learning_rate() -> f64 {
        AdamConfig::default().learning_rate
    }
    pub fn forecaster_learning_rate() -> f64 {
        ForecasterConfig::default().adam.learning_rate
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: RunConfig = toml::from_str(&raw).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate().map_err(|message| CliError::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window < 2 {
            return Err(format!("window must be at least 2, got {}", self.window));
        }
        if self.ae_epochs == 0 || self.forecaster_epochs == 0 {
            return Err("epochs must be at least 1".into());
        }
        if self.latent_dim == 0 || self.context_len == 0 {
            return Err("latent_dim and context_len must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.forecaster_learning_rate > 0.0) {
            return Err("learning rates must be positive".into());
        }
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(format!("quantile must lie in (0, 1], got {}", self.quantile));
        }
        self.rule.parse::<Rule>().map_err(|e| e.to_string())?;
        SplitSpec::new(self.train_fraction, self.validation_fraction).map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Label-file key: `key` if set, else the dataset file stem.
    pub fn label_key(&self) -> String {
        self.key.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }

    pub fn dataset_name(&self) -> String {
        self.dataset
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "series".into())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let split = SplitSpec::new(self.train_fraction, self.validation_fraction)?;
        let adam = |learning_rate| AdamConfig {
            learning_rate,
            ..AdamConfig::default()
        };
        Ok(PipelineConfig {
            dataset: self.dataset_name(),
            window: self.window,
            split,
            autoencoder: AutoencoderConfig {
                hidden: self.hidden.clone(),
                latent_dim: self.latent_dim,
                epochs: self.ae_epochs,
                adam: adam(self.learning_rate),
                seed: self.seed,
                ..AutoencoderConfig::default()
            },
            forecaster: ForecasterConfig {
                model_dim: self.model_dim,
                heads: self.heads,
                blocks: self.blocks,
                context_len: self.context_len,
                pooling: self.pooling,
                epochs: self.forecaster_epochs,
                adam: adam(self.forecaster_learning_rate),
                // A separate stream, so the two models never share draws.
                seed: self.seed.wrapping_add(1),
                ..ForecasterConfig::default()
            },
            detector: DetectorConfig {
                rule: self.rule.parse()?,
                pairs: self.pairs,
                threshold: None,
                warmup: self.warmup,
            },
            quantile: self.quantile,
            seed: self.seed,
        })
    }
}
