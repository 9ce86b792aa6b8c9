use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::AdamWConfig;
use crate::objectives::{LossWeights, DEFAULT_LOC_TAU, DEFAULT_SIGMA};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Width of the shared embedding space.
    pub proj_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Micro-batches whose gradients are averaged into one optimizer step.
    pub accumulation_steps: usize,
    pub lambda: f64,
    pub beta: f64,
    pub peak_lr: f64,
    pub final_lr: f64,
    /// Defaults to one epoch of optimizer steps.
    pub warmup_steps: Option<usize>,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    pub enable_global: bool,
    pub enable_prompt: bool,
    pub enable_loc: bool,
    /// Per-volume cap on supervised findings per step.
    pub max_prompt_findings: usize,
    /// Weight w_q given to every finding.
    pub finding_weight: f64,
    pub loc_tau: f64,
    pub loc_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            proj_dim: 64,
            epochs: 10,
            batch_size: 64,
            accumulation_steps: 1,
            lambda: 8.0,
            beta: 1.0,
            peak_lr: 2e-3,
            final_lr: 1e-5,
            warmup_steps: None,
            optimizer: AdamWConfig::default(),
            seed: 0,
            enable_global: true,
            enable_prompt: true,
            enable_loc: true,
            max_prompt_findings: 64,
            finding_weight: 1.0,
            loc_tau: DEFAULT_LOC_TAU,
            loc_sigma: DEFAULT_SIGMA,
        }
    }
}

impl TrainConfig {
    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            beta: self.beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.enable_global || self.enable_prompt || self.enable_loc) {
            return bad("at least one of enable_global, enable_prompt, enable_loc must be true".into());
        }
        if self.proj_dim < 2 {
            return bad(format!("proj_dim must be at least 2, got {}", self.proj_dim));
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 || (self.enable_global && self.batch_size < 2) {
            return bad(format!(
                "batch_size {} too small (the contrastive loss needs at least 2)",
                self.batch_size
            ));
        }
        if self.accumulation_steps == 0 {
            return bad("accumulation_steps must be at least 1".into());
        }
        if self.max_prompt_findings == 0 {
            return bad("max_prompt_findings must be at least 1".into());
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("peak_lr", self.peak_lr),
            ("final_lr", self.final_lr),
            ("finding_weight", self.finding_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if self.final_lr > self.peak_lr {
            return bad("final_lr must not exceed peak_lr".into());
        }
        if !(self.loc_tau > 0.0) {
            return Err(Error::NonPositiveTau(self.loc_tau));
        }
        if !(self.loc_sigma > 0.0) {
            return bad(format!("loc_sigma must be positive, got {}", self.loc_sigma));
        }
        Ok(())
    }
}
