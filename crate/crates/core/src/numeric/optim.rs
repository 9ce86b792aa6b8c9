//! AdamW with decoupled weight decay, and the warmup + cosine learning-rate
//! schedule.
//!
//! ```text
//! θ ← θ·(1 − lr·wd)
//! m ← β₁m + (1 − β₁)g
//! v ← β₂v + (1 − β₂)g²
//! θ ← θ − lr · m̂ / (√v̂ + ε)      m̂ = m/(1 − β₁ᵗ), v̂ = v/(1 − β₂ᵗ)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Moment accumulators for a fixed list of parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    decay: Vec<bool>,
    step: u64,
}

impl OptimizerState {
    /// `groups` lists `(len, apply_weight_decay)` per parameter group.
    pub fn new(config: AdamWConfig, groups: &[(usize, bool)]) -> Self {
        Self {
            config,
            first: groups.iter().map(|&(n, _)| vec![0.0; n]).collect(),
            second: groups.iter().map(|&(n, _)| vec![0.0; n]).collect(),
            decay: groups.iter().map(|&(_, d)| d).collect(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_groups(&self) -> usize {
        self.first.len()
    }
}

/// One AdamW update of every group. Nothing is modified if any gradient is
/// non-finite or any shape disagrees.
pub fn adamw_step(
    state: &mut OptimizerState,
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    lr: f64,
) -> Result<()> {
    if params.len() != state.num_groups() || grads.len() != state.num_groups() {
        return Err(Error::DimensionMismatch {
            context: "optimizer parameter groups",
            expected: state.num_groups(),
            actual: params.len().min(grads.len()),
        });
    }
    for (gi, ((p, g), m)) in params.iter().zip(grads).zip(&state.first).enumerate() {
        if p.len() != m.len() || g.len() != m.len() {
            return Err(Error::DimensionMismatch {
                context: "optimizer group length",
                expected: m.len(),
                actual: if p.len() != m.len() { p.len() } else { g.len() },
            });
        }
        if let Some(index) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { group: gi, index });
        }
    }

    state.step += 1;
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);

    for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let decay = if state.decay[gi] { lr * weight_decay } else { 0.0 };
        let m = &mut state.first[gi];
        let v = &mut state.second[gi];
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= decay * p[j];
            p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub final_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl ScheduleConfig {
    pub fn new(peak_lr: f64, final_lr: f64, warmup_steps: usize, total_steps: usize) -> Result<Self> {
        let cfg = Self {
            peak_lr,
            final_lr,
            warmup_steps,
            total_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.warmup_steps > 0 && self.warmup_steps < self.total_steps) {
            return Err(Error::InvalidConfig(format!(
                "schedule needs 0 < warmup_steps ({}) < total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.final_lr <= self.peak_lr) || self.final_lr < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "schedule needs 0 <= final_lr ({}) <= peak_lr ({})",
                self.final_lr, self.peak_lr
            )));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `peak_lr`, then cosine decay to `final_lr`.
pub fn lr_at(schedule: &ScheduleConfig, step: usize) -> Result<f64> {
    let ScheduleConfig {
        peak_lr,
        final_lr,
        warmup_steps,
        total_steps,
    } = *schedule;
    if step > total_steps {
        return Err(Error::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    if step <= warmup_steps {
        return Ok(peak_lr * step as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    let cosine = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    Ok(final_lr + (peak_lr - final_lr) * cosine)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_decay() -> AdamWConfig {
        AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_grad_without_decay_is_noop() {
        let mut st = OptimizerState::new(no_decay(), &[(3, true)]);
        let mut p = vec![1.0, -2.0, 3.0];
        adamw_step(&mut st, &mut [&mut p], &[&[0.0; 3]], 1e-2).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn single_scalar_step_by_hand() {
        let cfg = AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        };
        let mut st = OptimizerState::new(cfg, &[(1, true)]);
        let mut p = vec![0.5];
        let lr = 0.1;
        adamw_step(&mut st, &mut [&mut p], &[&[1.0]], lr).unwrap();
        // m = 0.1, v = 0.001, m̂ = 1, v̂ = 1 → step = lr·1/(1+1e-8)
        let decayed = 0.5 * (1.0 - lr * 0.01);
        let expected = decayed - lr * 1.0 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{} vs {}", p[0], expected);
    }

    #[test]
    fn decay_only_shrinks_by_lr_wd_param() {
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut st = OptimizerState::new(cfg, &[(2, true), (1, false)]);
        let mut w = vec![2.0, -4.0];
        let mut b = vec![1.0];
        adamw_step(&mut st, &mut [&mut w, &mut b], &[&[0.0, 0.0], &[0.0]], 0.5).unwrap();
        assert_eq!(w, vec![2.0 - 0.5 * 0.1 * 2.0, -4.0 + 0.5 * 0.1 * 4.0]);
        assert_eq!(b, vec![1.0]);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut st = OptimizerState::new(AdamWConfig::default(), &[(2, true)]);
        let mut p = vec![0.3, 0.7];
        for _ in 0..5 {
            adamw_step(&mut st, &mut [&mut p], &[&[1.0, -3.0]], 0.0).unwrap();
        }
        assert_eq!(p, vec![0.3, 0.7]);
        assert_eq!(st.step(), 5);
    }

    #[test]
    fn rejects_nan_and_shape_mismatch_without_mutation() {
        let mut st = OptimizerState::new(AdamWConfig::default(), &[(2, true)]);
        let mut p = vec![0.3, 0.7];
        let err = adamw_step(&mut st, &mut [&mut p], &[&[1.0, f64::NAN]], 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { group: 0, index: 1 }));
        assert!(adamw_step(&mut st, &mut [&mut p], &[&[1.0]], 0.1).is_err());
        assert_eq!(p, vec![0.3, 0.7]);
        assert_eq!(st.step(), 0);
    }

    #[test]
    fn schedule_endpoints() {
        let s = ScheduleConfig::new(2e-4, 1e-6, 10, 100).unwrap();
        assert_eq!(lr_at(&s, 0).unwrap(), 0.0);
        assert_eq!(lr_at(&s, 10).unwrap(), 2e-4);
        assert!((lr_at(&s, 100).unwrap() - 1e-6).abs() < 1e-18);
        assert!(matches!(lr_at(&s, 101), Err(Error::StepOutOfRange { .. })));
        // halfway through the cosine phase sits at the midpoint
        let mid = lr_at(&s, 55).unwrap();
        assert!((mid - (1e-6 + 2e-4) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn schedule_is_continuous_at_warmup() {
        // treat step as continuous by evaluating the two closed forms at w
        let s = ScheduleConfig::new(3e-3, 1e-5, 37, 400).unwrap();
        let left = s.peak_lr * s.warmup_steps as f64 / s.warmup_steps as f64;
        let right = s.final_lr + (s.peak_lr - s.final_lr) * 0.5 * (1.0 + 0f64.cos());
        assert!((left - right).abs() < 1e-12);
        assert!((lr_at(&s, 37).unwrap() - lr_at(&s, 38).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn schedule_validation() {
        assert!(ScheduleConfig::new(1e-3, 1e-6, 0, 10).is_err());
        assert!(ScheduleConfig::new(1e-3, 1e-6, 10, 10).is_err());
        assert!(ScheduleConfig::new(1e-6, 1e-3, 1, 10).is_err());
        assert!(ScheduleConfig::new(0.0, 0.0, 1, 10).is_ok());
    }
}
