use std::path::Path;

use serde::{Deserialize, Serialize};

use ctvl_core::synth::SynthConfig;
use ctvl_core::train::{EvalConfig, TrainConfig};

use crate::error::CliError;

/// One TOML file drives generation, training and evaluation. Sections use
/// the field names of the underlying configs; unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every section's seed is overwritten with it.
    pub seed: u64,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::io(format!("cannot read config {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.synth.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg.eval.seed = cfg.seed;
        cfg.eval.bootstrap.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth.validate()?;
        self.train.validate()?;
        self.eval.bootstrap.validate()?;
        if self.synth.proj_dim != self.train.proj_dim {
            return Err(CliError::usage(format!(
                "synth.proj_dim ({}) and train.proj_dim ({}) disagree",
                self.synth.proj_dim, self.train.proj_dim
            )));
        }
        Ok(())
    }
}
