use std::path::Path;

use cqe::{ModelConfig, Optimizer, StrategyConfig, StrategyKind};
use serde::Deserialize;

use crate::CliError;

/// Flat run configuration. Every key is optional in the file; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_quantiles: usize,
    pub tau_low: f64,
    pub tau_high: f64,
    pub k: f64,
    pub hidden_sizes: Vec<usize>,
    pub optimizer: String,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub n_dims: usize,
    pub strategy: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n_quantiles: 100,
            tau_low: 0.25,
            tau_high: 0.7,
            k: 0.5,
            hidden_sizes: vec![64, 32],
            optimizer: "adam".into(),
            lr: 1e-3,
            epochs: 20,
            batch_size: 256,
            seed: 42,
            n_dims: cqe::data::encoder::DEFAULT_N_DIMS,
            strategy: "cde".into(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
                Self::from_toml_str(&text).map_err(|e| CliError::usage(format!("{}: {}", p.display(), e.message)))
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model_config()?.validate()?;
        self.strategy_config()?.validate()?;
        if self.n_dims == 0 {
            return Err(CliError::usage("n_dims must be positive"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Result<Optimizer, CliError> {
        match self.optimizer.as_str() {
            "adam" => Ok(Optimizer::adam()),
            "sgd" => Ok(Optimizer::Sgd),
            other => Err(CliError::usage(format!("optimizer `{other}` is not one of sgd, adam"))),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        Ok(ModelConfig {
            n_quantiles: self.n_quantiles,
            hidden_sizes: self.hidden_sizes.clone(),
            optimizer: self.optimizer()?,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
        })
    }

    pub fn strategy_config(&self) -> Result<StrategyConfig, CliError> {
        let kind: StrategyKind = self.strategy.parse()?;
        Ok(StrategyConfig {
            kind,
            tau_low: self.tau_low,
            tau_high: self.tau_high,
            k: self.k,
        })
    }

    /// `key = value` lines in the config file format, for output headers.
    pub fn echo(&self) -> Vec<String> {
        let hidden: Vec<String> = self.hidden_sizes.iter().map(|h| h.to_string()).collect();
        vec![
            format!("n_quantiles = {}", self.n_quantiles),
            format!("tau_low = {:?}", self.tau_low),
            format!("tau_high = {:?}", self.tau_high),
            format!("k = {:?}", self.k),
            format!("hidden_sizes = [{}]", hidden.join(", ")),
            format!("optimizer = \"{}\"", self.optimizer),
            format!("lr = {:?}", self.lr),
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("seed = {}", self.seed),
            format!("n_dims = {}", self.n_dims),
            format!("strategy = \"{}\"", self.strategy),
        ]
    }
}
