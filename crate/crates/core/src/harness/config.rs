//! TOML experiment configuration.

use std::path::Path;

use chrono::TimeDelta;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GeneratorConfig, DEFAULT_RATIOS};
use crate::featurize::WindowConfig;
use crate::llmclient::EndpointConfig;
use crate::model::Hyperparams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad config: {0}")]
    Invalid(String),
}

/// Windowing parameters in file-friendly units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSection {
    pub window_hours: f64,
    pub overlap: f64,
    pub min_cgm_readings: usize,
    pub hyper_threshold: f64,
    pub tir_low: f64,
    pub tir_high: f64,
    pub stress_threshold: f64,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self::from(&WindowConfig::default())
    }
}

impl From<&WindowConfig> for WindowSection {
    fn from(w: &WindowConfig) -> Self {
        Self {
            window_hours: w.window_length.num_seconds() as f64 / 3600.0,
            overlap: w.overlap_fraction,
            min_cgm_readings: w.min_cgm_readings,
            hyper_threshold: w.hyper_threshold,
            tir_low: w.tir_low,
            tir_high: w.tir_high,
            stress_threshold: w.stress_high_threshold,
        }
    }
}

impl WindowSection {
    pub fn to_config(&self) -> WindowConfig {
        WindowConfig {
            window_length: TimeDelta::seconds((self.window_hours * 3600.0).round() as i64),
            overlap_fraction: self.overlap,
            min_cgm_readings: self.min_cgm_readings,
            hyper_threshold: self.hyper_threshold,
            tir_low: self.tir_low,
            tir_high: self.tir_high,
            stress_high_threshold: self.stress_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSection {
    pub ratios: Vec<f64>,
    pub seeds: usize,
    /// Seeds run are `first_seed .. first_seed + seeds`.
    pub first_seed: u64,
    pub reduction_fraction: f64,
    pub sweep_fractions: Vec<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            ratios: DEFAULT_RATIOS.to_vec(),
            seeds: 10,
            first_seed: 0,
            reduction_fraction: 0.5,
            sweep_fractions: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub window: WindowSection,
    pub model: Hyperparams,
    pub generator: GeneratorConfig,
    pub endpoint: EndpointConfig,
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.window
            .to_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let e = &self.experiment;
        if let Some(r) = e.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return bad(format!("ratio {r} must lie in (0, 1]"));
        }
        if !(e.reduction_fraction > 0.0 && e.reduction_fraction < 1.0) {
            return bad(format!(
                "reduction_fraction {} must lie in (0, 1)",
                e.reduction_fraction
            ));
        }
        if let Some(f) = e.sweep_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return bad(format!("sweep fraction {f} must lie in (0, 1]"));
        }
        if self.generator.prompt_spec().is_none() {
            return bad(format!("prompt {:?} must be `zero` or `few:K`", self.generator.prompt));
        }
        if self.model.epochs == 0 || self.model.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        let e = &self.experiment;
        (e.first_seed..e.first_seed + e.seeds as u64).collect()
    }
}
