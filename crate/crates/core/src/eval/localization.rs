use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

pub const THRESHOLDS_MM: [f64; 3] = [6.0, 18.0, 30.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub predicted_mm: f64,
    pub true_mm: f64,
}

impl LocalizationResult {
    pub fn abs_error(&self) -> f64 {
        (self.predicted_mm - self.true_mm).abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationMetrics {
    pub mae_mm: f64,
    pub within_6mm: f64,
    pub within_18mm: f64,
    pub within_30mm: f64,
}

impl LocalizationMetrics {
    pub fn within(&self) -> [f64; 3] {
        [self.within_6mm, self.within_18mm, self.within_30mm]
    }
}

/// Mean absolute error and the percentage of errors strictly below each of
/// 6, 18 and 30 mm.
pub fn localization_metrics(results: &[LocalizationResult]) -> Result<LocalizationMetrics> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    for (i, r) in results.iter().enumerate() {
        if !(r.predicted_mm.is_finite() && r.true_mm.is_finite()) {
            return Err(Error::NonFiniteValue { row: i, col: 0 });
        }
        if r.predicted_mm < 0.0 || r.true_mm < 0.0 {
            return Err(Error::Format(format!("localization result {i} has a negative position")));
        }
    }
    let n = results.len() as f64;
    let mae = results.iter().map(LocalizationResult::abs_error).sum::<f64>() / n;
    let pct = |t: f64| 100.0 * results.iter().filter(|r| r.abs_error() < t).count() as f64 / n;
    Ok(LocalizationMetrics {
        mae_mm: mae,
        within_6mm: pct(THRESHOLDS_MM[0]),
        within_18mm: pct(THRESHOLDS_MM[1]),
        within_30mm: pct(THRESHOLDS_MM[2]),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineStrategy {
    Random,
    Middle,
}

/// Scan-agnostic predictions: uniform in `[0, length)` or the midpoint.
pub fn baseline_predict(strategy: BaselineStrategy, lengths_mm: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    if let Some(l) = lengths_mm.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(Error::InvalidConfig(format!("scan length must be positive, got {l}")));
    }
    Ok(lengths_mm
        .iter()
        .map(|&l| match strategy {
            BaselineStrategy::Random => rng.random_range(0.0..l),
            BaselineStrategy::Middle => l / 2.0,
        })
        .collect())
}
