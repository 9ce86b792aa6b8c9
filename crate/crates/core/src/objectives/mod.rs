//! Training objectives: pairwise-sigmoid contrastive, prompt-based disease
//! supervision, and intra-scan localization.

mod fidelity;
mod gradcheck;
mod localization;
mod prompt;
mod siglip;

use serde::{Deserialize, Serialize};

pub use fidelity::{
    gradient_fidelity, CheckedFunction, FidelityReport, GradientTamper, TrialResult, FD_STEP, FD_TOLERANCE,
};
pub use gradcheck::{finite_difference_check, REL_ERR_FLOOR};
pub use localization::{
    gaussian_soft_target, localization_loss, predict_depth, predict_depth_index, DepthGrid, LocalizationOutput,
    SoftTarget, DEFAULT_LOC_TAU, DEFAULT_PITCH_MM, DEFAULT_SIGMA,
};
pub use prompt::{
    alpha_weight, prompt_loss, prompt_loss_scaled, PromptEntry, PromptLossInputs, PromptLossOutput, ALPHA_CLAMP,
};
pub use siglip::{siglip_loss, SigLipOutput, SigLipParams};

/// Logistic sigmoid, stable for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    -(f64::max(-x, 0.0) + (-x.abs()).exp().ln_1p())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda: 8.0, beta: 1.0 }
    }
}

/// `L_global + λ·L_prompt + β·L_loc`.
pub fn combined_loss(global: f64, prompt: f64, loc: f64, weights: &LossWeights) -> f64 {
    global + weights.lambda * prompt + weights.beta * loc
}
