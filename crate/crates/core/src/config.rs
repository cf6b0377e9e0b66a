//! Unified JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::training::TrainConfig;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "DIFFMOTION_CONFIG";

/// How a motion file is cut into training and test pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Fraction of clips (taken from the end) held out for testing.
    pub test_fraction: f64,
    /// Window stride in frames; `None` uses the future length.
    pub stride: Option<usize>,
    /// Subtract the root joint position from every pose.
    pub root_relative: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            test_fraction: 0.2,
            stride: None,
            root_relative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Samples drawn per test history.
    pub samples: usize,
    /// Multimodal grouping threshold on last-pose distance.
    pub delta: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            samples: 50,
            delta: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub data: DataConfig,
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        RunConfig {
            generator: GeneratorConfig::toy(synth.history, synth.future, synth.joints),
            synth,
            data: DataConfig::default(),
            train: TrainConfig::toy(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Loads `path`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve_source(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    pub fn stride(&self) -> usize {
        self.data.stride.unwrap_or(self.generator.future)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.generator.validate()?;
        self.train.validate()?;
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err(Error::Config("data.test_fraction must lie in (0, 1)".into()));
        }
        if self.data.stride == Some(0) {
            return Err(Error::Config("data.stride must be >= 1".into()));
        }
        if self.eval.samples == 0 {
            return Err(Error::Config("eval.samples must be >= 1".into()));
        }
        if !(self.eval.delta > 0.0) {
            return Err(Error::Config("eval.delta must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        assert_eq!(c.stride(), 32);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = RunConfig::from_json(r#"{"train": {"epochs": 3}, "synth": {"clips": 9}}"#).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.k, 2);
        assert_eq!(c.synth.clips, 9);
        assert_eq!(c.generator.transformer.layers, 4);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"trian": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"epoch": 3}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"generator": {"transformer": {"depth": 3}}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::default();
        c.eval.delta = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.synth.joints = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
