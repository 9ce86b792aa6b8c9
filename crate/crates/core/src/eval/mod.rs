//! Benchmark metrics and confidence intervals.

mod auc;
mod bootstrap;
mod localization;
mod retrieval;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use auc::{auc_counts, auc_from_counts, roc_auc};
pub use bootstrap::{bootstrap_ci, mean, quantile_sorted, BootstrapConfig, ConfidenceInterval};
pub use localization::{
    baseline_predict, localization_metrics, BaselineStrategy, LocalizationMetrics, LocalizationResult, THRESHOLDS_MM,
};
pub use retrieval::{
    average_precisions_at_5, chance_recall_interval, label_iou, map_at_5, merlin_pooled_r1, pooled_hit_rates, recall_at_k, recall_from_ranks, RelevanceRule,
    RetrievalTask, MAP_DEPTH,
};

/// Named intervals in insertion order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricsReport {
    entries: serde_json::Map<String, serde_json::Value>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, ci: &ConfidenceInterval) {
        self.entries
            .insert(name.to_string(), serde_json::to_value(ci).expect("interval serializes"));
    }

    pub fn get(&self, name: &str) -> Option<ConfidenceInterval> {
        self.entries
            .get(name)
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let rows: Vec<(String, ConfidenceInterval)> = self
            .entries
            .keys()
            .filter_map(|k| self.get(k).map(|ci| (k.clone(), ci)))
            .collect();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>9}", "metric", "point", "lower", "upper");
        for (k, ci) in rows {
            let _ = writeln!(out, "{k:<width$}  {:>9.3}  {:>9.3}  {:>9.3}", ci.point, ci.lower, ci.upper);
        }
        out
    }
}
