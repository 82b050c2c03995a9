//! One TOML file for every tunable: SDK signatures, probe settings,
//! navigator limits, memory, oracle, criterion and remote backend.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::CriterionConfig;
use crate::llm::RemoteConfig;
use crate::memory::MemoryConfig;
use crate::navigator::NavigatorConfig;
use crate::policy::OracleConfig;
use crate::profiler::SdkSignatureConfig;
use crate::prober::ProbeConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(String, String),
    #[error("bad config {0}: {1}")]
    Parse(String, String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub sdk: SdkSignatureConfig,
    pub probe: ProbeConfig,
    pub navigator: NavigatorConfig,
    pub memory: MemoryConfig,
    pub oracle: OracleConfig,
    pub criterion: CriterionConfig,
    pub remote: RemoteConfig,
    pub initial_score: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sdk: SdkSignatureConfig::default(),
            probe: ProbeConfig::default(),
            navigator: NavigatorConfig::default(),
            memory: MemoryConfig::default(),
            oracle: OracleConfig::default(),
            criterion: CriterionConfig::default(),
            remote: RemoteConfig::default(),
            initial_score: crate::utg::DEFAULT_INITIAL_SCORE,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Config = toml::from_str(text).map_err(|e| ConfigError::Parse("<text>".into(), e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io(p.display().to_string(), e.to_string()))?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(_, m) => ConfigError::Parse(p.display().to_string(), m),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.navigator.alpha) {
            return bad("navigator.alpha must be in [0, 1]");
        }
        if !unit(self.initial_score) {
            return bad("initial_score must be in [0, 1]");
        }
        if self.navigator.k_base == 0 {
            return bad("navigator.k_base must be at least 1");
        }
        if self.criterion.lambda < 0.0 || self.oracle.lambda < 0.0 {
            return bad("lambda must be non-negative");
        }
        if !(self.memory.tau > 0.0 && self.memory.tau <= 1.0) {
            return bad("memory.tau must be in (0, 1]");
        }
        if self.memory.dim == 0 {
            return bad("memory.dim must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = Config::from_toml("[navigator]\nk_base = 3\n[criterion]\nlambda = 0.2\n").unwrap();
        assert_eq!(c.navigator.k_base, 3);
        assert_eq!(c.criterion.lambda, 0.2);
        assert_eq!(c.navigator.hops, 2);
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(matches!(Config::from_toml("[navigator]\nalpha = 1.5\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::from_toml("[memory]\ntau = 0.0\n"), Err(ConfigError::Invalid(_))));
    }
}
