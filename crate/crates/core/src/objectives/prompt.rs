//! Prompt-based disease supervision in the shared embedding space.
//!
//! For each valid finding `q` the volume embedding `z` is scored against a
//! positive and a negative prompt embedding:
//!
//! ```text
//! x_q = (⟨z, p⁺_q⟩ − ⟨z, p⁻_q⟩) / τ
//! L   = (1/|M|) Σ_q w_q · ( −α_q y_q log σ(x_q) − (1 − y_q) log(1 − σ(x_q)) )
//! α_q = min(n⁺_q / n⁻_q, 20)
//! ```

use super::{log_sigmoid, sigmoid};
use crate::error::{Error, Result};
use crate::numeric::dot;

pub const ALPHA_CLAMP: f64 = 20.0;

/// Positive-class weight `min(n⁺/n⁻, 20)`; `None` when there are no
/// negatives and the ratio is undefined.
pub fn alpha_weight(n_pos: u64, n_neg: u64) -> Option<f64> {
    if n_neg == 0 {
        return None;
    }
    Some((n_pos as f64 / n_neg as f64).min(ALPHA_CLAMP))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptEntry {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub label: bool,
    pub weight: f64,
    pub n_pos: u64,
    pub n_neg: u64,
}

impl PromptEntry {
    pub fn alpha(&self) -> Result<f64> {
        alpha_weight(self.n_pos, self.n_neg).ok_or_else(|| {
            Error::InvalidConfig("finding has no negative training examples; α is undefined".into())
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptLossInputs {
    pub z: Vec<f64>,
    pub entries: Vec<PromptEntry>,
    pub tau: f64,
}

#[derive(Clone, Debug)]
pub struct PromptLossOutput {
    pub loss: f64,
    pub grad_z: Vec<f64>,
    pub grad_pos: Vec<Vec<f64>>,
    pub grad_neg: Vec<Vec<f64>>,
    pub grad_tau: f64,
}

/// Mean prompt loss over the entries of one volume.
pub fn prompt_loss(inputs: &PromptLossInputs) -> Result<PromptLossOutput> {
    if inputs.entries.is_empty() {
        return Err(Error::EmptyQuestionSet);
    }
    prompt_loss_scaled(inputs, 1.0 / inputs.entries.len() as f64)
}

/// Prompt loss summed over the entries and multiplied by `scale`.
///
/// Batches normalize by the number of valid (volume, finding) pairs across
/// all volumes, so callers pass `scale = 1/|M_batch|` for each volume.
pub fn prompt_loss_scaled(inputs: &PromptLossInputs, scale: f64) -> Result<PromptLossOutput> {
    let tau = inputs.tau;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::NonPositiveTau(tau));
    }
    let dim = inputs.z.len();
    let z = &inputs.z;
    let mut loss = 0.0;
    let mut grad_z = vec![0.0; dim];
    let mut grad_pos = Vec::with_capacity(inputs.entries.len());
    let mut grad_neg = Vec::with_capacity(inputs.entries.len());
    let mut grad_tau = 0.0;

    for entry in &inputs.entries {
        for v in [&entry.pos, &entry.neg] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "prompt embedding",
                    expected: dim,
                    actual: v.len(),
                });
            }
        }
        let alpha = entry.alpha()?;
        let x = (dot(z, &entry.pos) - dot(z, &entry.neg)) / tau;
        let w = entry.weight * scale;
        // −log(1 − σ(x)) = −log σ(−x)
        let (term, dx) = if entry.label {
            (-alpha * log_sigmoid(x), -alpha * sigmoid(-x))
        } else {
            (-log_sigmoid(-x), sigmoid(x))
        };
        loss += w * term;
        let dx = w * dx;
        let inv_tau = 1.0 / tau;
        for k in 0..dim {
            grad_z[k] += dx * (entry.pos[k] - entry.neg[k]) * inv_tau;
        }
        grad_pos.push(z.iter().map(|zk| dx * zk * inv_tau).collect());
        grad_neg.push(z.iter().map(|zk| -dx * zk * inv_tau).collect());
        grad_tau -= dx * x * inv_tau;
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("prompt loss {loss}")));
    }
    Ok(PromptLossOutput {
        loss,
        grad_z,
        grad_pos,
        grad_neg,
        grad_tau,
    })
}
