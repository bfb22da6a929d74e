//! Run configuration: one TOML document holding every tunable default.
//! `sad-sim config` prints the full schema with its default values.

use serde::{Deserialize, Serialize};
use std::path::Path;

use sad_sim_core::agents::{A2cConfig, PolicyTag};
use sad_sim_core::env::EnvConfig;
use sad_sim_core::eval::DEFAULT_WINDOW;
use sad_sim_core::factory::GenParams;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub policy: PolicyTag,
    pub budget: u64,
    pub seed: u64,
    /// Sub-steps between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            policy: PolicyTag::A2cDiscrete,
            budget: 300_000,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub seed: u64,
    pub stochastic_repeats: usize,
    pub window: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            seed: 0,
            stochastic_repeats: 1,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generate: GenParams,
    pub env: EnvConfig,
    pub a2c: A2cConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let c: RunConfig =
            toml::from_str(text).map_err(|e| CliError::data(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Data(anyhow::anyhow!("reading {}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.generate.validate()?;
        self.env.validate()?;
        self.a2c.validate()?;
        if self.eval.window == 0 {
            return Err(CliError::data("config: eval.window must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_other_defaults() {
        let c = RunConfig::from_toml("[train]\nbudget = 1000\n\n[env.shield]\nenabled = false\n")
            .unwrap();
        assert_eq!(c.train.budget, 1000);
        assert!(!c.env.shield.enabled);
        assert_eq!(c.a2c, A2cConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[train]\nbudgett = 1\n").is_err());
    }
}
