//! Intra-scan localization: a snippet embedding is classified over the depth
//! positions of its own scan against a Gaussian-smoothed target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, EmbeddingMatrix};

pub const DEFAULT_PITCH_MM: f64 = 12.0;
pub const DEFAULT_SIGMA: f64 = 2.0;
pub const DEFAULT_LOC_TAU: f64 = 0.1;

/// Axial discretization: `positions` bins of `pitch_mm`, the first starting
/// at `origin_mm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthGrid {
    pub positions: usize,
    pub pitch_mm: f64,
    pub origin_mm: f64,
}

impl DepthGrid {
    pub fn new(positions: usize, pitch_mm: f64, origin_mm: f64) -> Result<Self> {
        if positions == 0 {
            return Err(Error::EmptyGrid);
        }
        if !(pitch_mm > 0.0) {
            return Err(Error::InvalidConfig(format!("pitch_mm must be positive, got {pitch_mm}")));
        }
        Ok(Self {
            positions,
            pitch_mm,
            origin_mm,
        })
    }

    /// Center of 1-based bin `d`.
    pub fn center_mm(&self, d: usize) -> f64 {
        self.origin_mm + (d as f64 - 0.5) * self.pitch_mm
    }

    pub fn extent_mm(&self) -> f64 {
        self.positions as f64 * self.pitch_mm
    }
}

/// Depth distribution over the grid; entries are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftTarget {
    pub probs: Vec<f64>,
}

/// One-hot at `d_star` (1-based) convolved with a Gaussian truncated at
/// `|k| ≤ ⌈3σ⌉`, then L1-normalized over the in-bounds bins. Mass falling
/// off the grid is simply dropped before normalization.
pub fn gaussian_soft_target(grid: &DepthGrid, d_star: usize, sigma: f64) -> Result<SoftTarget> {
    let d = grid.positions;
    if d_star < 1 || d_star > d {
        return Err(Error::IndexOutOfRange { index: d_star, len: d });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let z: f64 = kernel.iter().sum();

    let mut probs = vec![0.0; d];
    let center = d_star as i64 - 1;
    for (offset, g) in (-radius..=radius).zip(&kernel) {
        let idx = center + offset;
        if idx >= 0 && (idx as usize) < d {
            probs[idx as usize] = g / z;
        }
    }
    let mass: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= mass);
    Ok(SoftTarget { probs })
}

#[derive(Clone, Debug)]
pub struct LocalizationOutput {
    pub loss: f64,
    pub grad_depth: EmbeddingMatrix,
    pub grad_snippet: Vec<f64>,
}

/// Cross-entropy between `softmax(⟨z_d, t⟩/τ)` and the soft target.
pub fn localization_loss(
    depth_feats: &EmbeddingMatrix,
    snippet: &[f64],
    target: &SoftTarget,
    tau: f64,
) -> Result<LocalizationOutput> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::NonPositiveTau(tau));
    }
    let d = depth_feats.rows();
    if target.probs.len() != d {
        return Err(Error::DimensionMismatch {
            context: "soft target length",
            expected: d,
            actual: target.probs.len(),
        });
    }
    if snippet.len() != depth_feats.dim() {
        return Err(Error::DimensionMismatch {
            context: "snippet embedding",
            expected: depth_feats.dim(),
            actual: snippet.len(),
        });
    }
    if d == 0 {
        return Err(Error::EmptyGrid);
    }
    let logits: Vec<f64> = depth_feats.iter_rows().map(|z| dot(z, snippet) / tau).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let target_mass: f64 = target.probs.iter().sum();

    let mut loss = 0.0;
    let mut grad_depth = EmbeddingMatrix::zeros(d, depth_feats.dim());
    let mut grad_snippet = vec![0.0; snippet.len()];
    for (i, (&l, &m)) in logits.iter().zip(&target.probs).enumerate() {
        loss -= m * (l - lse);
        let p = (l - lse).exp();
        let dl = (p * target_mass - m) / tau;
        for (g, t) in grad_depth.row_mut(i).iter_mut().zip(snippet) {
            *g = dl * t;
        }
        for (g, z) in grad_snippet.iter_mut().zip(depth_feats.row(i)) {
            *g += dl * z;
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss(format!("localization loss {loss}")));
    }
    Ok(LocalizationOutput {
        loss,
        grad_depth,
        grad_snippet,
    })
}

/// 1-based index of the depth row most similar to the snippet; ties go to the
/// smaller index.
pub fn predict_depth_index(depth_feats: &EmbeddingMatrix, snippet: &[f64]) -> Result<usize> {
    if depth_feats.rows() == 0 {
        return Err(Error::EmptyGrid);
    }
    if snippet.len() != depth_feats.dim() {
        return Err(Error::DimensionMismatch {
            context: "snippet embedding",
            expected: depth_feats.dim(),
            actual: snippet.len(),
        });
    }
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for (i, z) in depth_feats.iter_rows().enumerate() {
        let s = dot(z, snippet);
        if s > best_sim {
            best_sim = s;
            best = i;
        }
    }
    Ok(best + 1)
}

/// Predicted axial position: center of the argmax bin.
pub fn predict_depth(depth_feats: &EmbeddingMatrix, snippet: &[f64], grid: &DepthGrid) -> Result<f64> {
    if depth_feats.rows() != grid.positions {
        return Err(Error::DimensionMismatch {
            context: "depth rows vs grid positions",
            expected: grid.positions,
            actual: depth_feats.rows(),
        });
    }
    Ok(grid.center_mm(predict_depth_index(depth_feats, snippet)?))
}
