use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::indexed_rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resamples == 0 {
            return Err(Error::InvalidConfig("bootstrap resamples must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bootstrap level must lie in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(rename = "B")]
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
    /// Resamples on which the metric was undefined (e.g. one-class AUC).
    #[serde(default, skip_serializing_if = "is_zero")]
    pub skipped: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap over items. Resample `b` uses its own stream derived
/// from `(seed, b)`, so results do not depend on thread count. Resamples on
/// which `metric` fails are skipped; a failure on the full sample is returned.
pub fn bootstrap_ci<T, F>(samples: &[T], metric: F, cfg: &BootstrapConfig) -> Result<ConfidenceInterval>
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let point = metric(samples)?;
    let n = samples.len();
    let stats: Vec<Option<f64>> = (0..cfg.resamples)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |buf: &mut Vec<T>, b| {
                let mut rng = indexed_rng(cfg.seed, "bootstrap", b as u64);
                buf.clear();
                buf.extend((0..n).map(|_| samples[rng.random_range(0..n)].clone()));
                metric(buf).ok().filter(|v| v.is_finite())
            },
        )
        .collect();
    let mut values: Vec<f64> = stats.iter().flatten().copied().collect();
    let skipped = cfg.resamples - values.len();
    if values.is_empty() {
        return Err(Error::NonFiniteLoss("metric undefined on every bootstrap resample".into()));
    }
    values.sort_by(f64::total_cmp);
    let alpha = 1.0 - cfg.level;
    Ok(ConfidenceInterval {
        point,
        lower: quantile_sorted(&values, alpha / 2.0),
        upper: quantile_sorted(&values, 1.0 - alpha / 2.0),
        resamples: cfg.resamples,
        level: cfg.level,
        seed: cfg.seed,
        skipped,
    })
}

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    fn cfg(resamples: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            resamples,
            level: 0.95,
            seed,
        }
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn degenerate_cases() {
        let ci = bootstrap_ci(&[3.0; 50], |x| mean(x), &cfg(500, 1)).unwrap();
        assert_eq!((ci.point, ci.lower, ci.upper), (3.0, 3.0, 3.0));
        let ci = bootstrap_ci(&[1.5], |x| mean(x), &cfg(100, 1)).unwrap();
        assert_eq!((ci.point, ci.lower, ci.upper), (1.5, 1.5, 1.5));
        assert!(matches!(bootstrap_ci::<f64, _>(&[], |x| mean(x), &cfg(10, 1)), Err(Error::EmptySamples)));
        assert!(bootstrap_ci(&[1.0], |x| mean(x), &cfg(0, 1)).is_err());
    }

    #[test]
    fn bernoulli_width_matches_normal_approximation() {
        let mut rng = rng_for(8, "bernoulli");
        let xs: Vec<f64> = (0..1000).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let ci = bootstrap_ci(&xs, |x| mean(x), &cfg(10_000, 2)).unwrap();
        let expected = 2.0 * 1.96 * (0.25f64 / 1000.0).sqrt();
        assert!((ci.width() / expected - 1.0).abs() < 0.2, "{}", ci.width());
        assert!(ci.lower <= ci.point && ci.point <= ci.upper);
    }

    #[test]
    fn seeded_and_order_independent() {
        let xs: Vec<f64> = (0..200).map(|i| (i as f64).sin()).collect();
        let a = bootstrap_ci(&xs, |x| mean(x), &cfg(300, 5)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| bootstrap_ci(&xs, |x| mean(x), &cfg(300, 5)).unwrap());
        assert_eq!(a, b);
    }
}
