use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-report set of `(series, image)` pairs.
pub type ReferenceSets = BTreeMap<String, BTreeSet<(u32, u32)>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiningScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl MiningScores {
    fn from_counts(tp: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 1.0 } else { tp as f64 / predicted as f64 };
        let recall = if gold == 0 { 1.0 } else { tp as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            true_positives: tp,
            predicted,
            gold,
        }
    }
}

/// Per-report `(tp, predicted, gold)` counts in gold order; the unit of
/// resampling for confidence intervals.
pub fn mining_counts(predicted: &ReferenceSets, gold: &ReferenceSets) -> Result<Vec<(usize, usize, usize)>> {
    if let Some(id) = predicted.keys().find(|id| !gold.contains_key(*id)) {
        return Err(Error::ConfigMismatch(format!("predicted report `{id}` has no gold annotation")));
    }
    let empty = BTreeSet::new();
    Ok(gold
        .iter()
        .map(|(id, g)| {
            let p = predicted.get(id).unwrap_or(&empty);
            (p.intersection(g).count(), p.len(), g.len())
        })
        .collect())
}

/// Micro-averaged precision/recall/F1 over summed per-report counts.
pub fn scores_from_counts(counts: &[(usize, usize, usize)]) -> MiningScores {
    let (tp, p, g) = counts
        .iter()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    MiningScores::from_counts(tp, p, g)
}

/// Micro-averaged over `(report_id, series, image)` triples. Precision is 1
/// with no predictions and recall is 1 with no gold.
pub fn evaluate_mining(predicted: &ReferenceSets, gold: &ReferenceSets) -> Result<MiningScores> {
    Ok(scores_from_counts(&mining_counts(predicted, gold)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sets(entries: &[(&str, &[(u32, u32)])]) -> ReferenceSets {
        entries
            .iter()
            .map(|(id, refs)| (id.to_string(), refs.iter().copied().collect()))
            .collect()
    }

    #[test]
    fn examples() {
        let gold = sets(&[("r1", &[(1, 2), (3, 4)])]);
        let s = evaluate_mining(&gold, &gold).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let s = evaluate_mining(&sets(&[("r1", &[(1, 2)])]), &gold).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);

        let s = evaluate_mining(&sets(&[("r1", &[(1, 2), (9, 9)])]), &sets(&[("r1", &[(1, 2)])])).unwrap();
        assert_eq!((s.precision, s.recall), (0.5, 1.0));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn conventions_and_errors() {
        let empty = ReferenceSets::new();
        let s = evaluate_mining(&empty, &empty).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = evaluate_mining(&empty, &sets(&[("a", &[(1, 1)])])).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 0.0, 0.0));
        assert!(matches!(
            evaluate_mining(&sets(&[("zzz", &[(1, 1)])]), &sets(&[("a", &[])])),
            Err(Error::ConfigMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn self_comparison_is_perfect(refs in prop::collection::btree_map(
            "[a-z]{1,4}",
            prop::collection::btree_set((1u32..20, 1u32..200), 0..6),
            0..8,
        )) {
            let s = evaluate_mining(&refs, &refs).unwrap();
            prop_assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
    }
}
