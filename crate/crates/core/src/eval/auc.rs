use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Twice the Mann–Whitney U statistic of the positives (ties count one half),
/// with the number of positives and negatives.
pub fn auc_counts(scores: &[f64], labels: &[bool]) -> Result<(u64, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "roc_auc labels",
            expected: scores.len(),
            actual: labels.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteValue { row: i, col: 0 });
    }
    let n_pos = labels.iter().filter(|&&y| y).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    // doubled midrank of a tie block spanning 1-based ranks start..=end is start + end
    let mut doubled_rank_sum = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_mid = (i + 1 + j + 1) as u64;
        let pos_in_block = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        doubled_rank_sum += doubled_mid * pos_in_block;
        i = j + 1;
    }
    Ok((doubled_rank_sum - n_pos * (n_pos + 1), n_pos, n_neg))
}

/// Percentage AUC from doubled U; exact complement symmetry is kept by always
/// dividing the smaller side.
pub fn auc_from_counts(doubled_u: u64, n_pos: u64, n_neg: u64) -> f64 {
    let full = 2 * n_pos * n_neg;
    if 2 * doubled_u <= full {
        100.0 * doubled_u as f64 / full as f64
    } else {
        100.0 - 100.0 * (full - doubled_u) as f64 / full as f64
    }
}

/// P(score⁺ > score⁻) + ½ P(tie), as a percentage.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (u, p, n) = auc_counts(scores, labels)?;
    Ok(auc_from_counts(u, p, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn pairwise(scores: &[f64], labels: &[bool]) -> (u64, u64, u64) {
        let mut doubled = 0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi && !yj {
                    doubled += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        Ordering::Greater => 2,
                        Ordering::Equal => 1,
                        Ordering::Less => 0,
                    };
                }
            }
        }
        let p = labels.iter().filter(|&&y| y).count() as u64;
        (doubled, p, labels.len() as u64 - p)
    }

    #[test]
    fn examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 100.0);
        assert_eq!(roc_auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 50.0);
        assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 75.0);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels)));
        assert!(matches!(roc_auc(&[], &[]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn random_scores_are_near_half() {
        let mut rng = rng_for(17, "auc-random");
        let n = 20_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - 50.0).abs() < 1.5, "{auc}");
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(data in prop::collection::vec((0u8..12, any::<bool>()), 2..300)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64 / 4.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            match auc_counts(&scores, &labels) {
                Ok(counts) => {
                    prop_assert_eq!(counts, pairwise(&scores, &labels));
                    let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
                    let sum = roc_auc(&scores, &labels).unwrap() + roc_auc(&flipped, &labels).unwrap();
                    prop_assert_eq!(sum, 100.0);
                }
                Err(e) => prop_assert!(matches!(e, Error::DegenerateLabels)),
            }
        }

        #[test]
        fn continuous_scores_match_oracle(data in prop::collection::vec((-1e3f64..1e3, any::<bool>()), 2..1000)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let labels: Vec<bool> = data.iter().map(|(_, y)| *y).collect();
            if let Ok(counts) = auc_counts(&scores, &labels) {
                prop_assert_eq!(counts, pairwise(&scores, &labels));
            }
        }
    }
}
