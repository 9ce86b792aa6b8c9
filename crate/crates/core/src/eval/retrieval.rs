use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric::EmbeddingMatrix;
use crate::seed::indexed_rng;

/// Queries, candidates and the designated candidate row for every query.
/// Candidate ids are row indices; equal scores rank the lower id first.
#[derive(Clone, Debug)]
pub struct RetrievalTask {
    queries: EmbeddingMatrix,
    candidates: EmbeddingMatrix,
    targets: Vec<usize>,
}

impl RetrievalTask {
    /// Rows are L2-normalized here so that dot products are cosines.
    pub fn new(queries: &EmbeddingMatrix, candidates: &EmbeddingMatrix, targets: Vec<usize>) -> Result<Self> {
        if queries.rows() == 0 || candidates.rows() == 0 {
            return Err(Error::EmptyTask);
        }
        if queries.dim() != candidates.dim() {
            return Err(Error::DimensionMismatch {
                context: "retrieval embeddings",
                expected: queries.dim(),
                actual: candidates.dim(),
            });
        }
        if targets.len() != queries.rows() {
            return Err(Error::DimensionMismatch {
                context: "retrieval targets",
                expected: queries.rows(),
                actual: targets.len(),
            });
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= candidates.rows()) {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: candidates.rows(),
            });
        }
        Ok(Self {
            queries: queries.normalized_rows()?,
            candidates: candidates.normalized_rows()?,
            targets,
        })
    }

    pub fn num_queries(&self) -> usize {
        self.queries.rows()
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.rows()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Q×C cosine similarities, row-major.
    pub fn similarities(&self) -> Vec<f64> {
        self.queries.gram(&self.candidates).expect("dimensions checked at construction")
    }

    /// 0-based rank of each query's designated candidate.
    pub fn target_ranks(&self) -> Vec<usize> {
        let sims = self.similarities();
        let c = self.num_candidates();
        sims.par_chunks(c)
            .zip(self.targets.par_iter())
            .map(|(row, &t)| rank_of(row, t, None))
            .collect()
    }
}

/// Rank of `target` among `row` (optionally restricted to `subset`).
fn rank_of(row: &[f64], target: usize, subset: Option<&[usize]>) -> usize {
    let st = row[target];
    let beats = |j: usize| j != target && (row[j] > st || (row[j] == st && j < target));
    match subset {
        None => (0..row.len()).filter(|&j| beats(j)).count(),
        Some(s) => s.iter().filter(|&&j| beats(j)).count(),
    }
}

/// Percentage of ranks below `k`.
pub fn recall_from_ranks(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyTask);
    }
    Ok(100.0 * ranks.iter().filter(|&&r| r < k).count() as f64 / ranks.len() as f64)
}

pub fn recall_at_k(task: &RetrievalTask, k: usize) -> Result<f64> {
    if k == 0 || k > task.num_candidates() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} outside 1..={}",
            task.num_candidates()
        )));
    }
    recall_from_ranks(&task.target_ranks(), k)
}

/// Recall@1 inside random pools: for each query, its designated candidate plus
/// `pool_size − 1` distinct others drawn uniformly, averaged over queries and
/// then over trials.
pub fn merlin_pooled_r1(task: &RetrievalTask, pool_size: usize, trials: usize, seed: u64) -> Result<f64> {
    let per_query = pooled_hit_rates(task, pool_size, trials, seed)?;
    Ok(per_query.iter().sum::<f64>() / per_query.len() as f64)
}

/// Per-query percentage of pooled trials in which the designated candidate
/// ranks first. Their mean is [`merlin_pooled_r1`].
pub fn pooled_hit_rates(task: &RetrievalTask, pool_size: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let c = task.num_candidates();
    if pool_size == 0 || c < pool_size {
        return Err(Error::PoolTooSmall {
            pool_size,
            available: c,
        });
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let sims = task.similarities();
    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = indexed_rng(seed, "pooled-recall", trial as u64);
            let mut pool = Vec::with_capacity(pool_size);
            task.targets
                .iter()
                .enumerate()
                .map(|(q, &t)| {
                    pool.clear();
                    pool.extend(
                        sample(&mut rng, c - 1, pool_size - 1)
                            .into_iter()
                            .map(|j| if j >= t { j + 1 } else { j }),
                    );
                    rank_of(&sims[q * c..(q + 1) * c], t, Some(&pool)) == 0
                })
                .collect()
        })
        .collect();
    let mut hits = vec![0usize; task.num_queries()];
    for trial in &per_trial {
        for (h, &hit) in hits.iter_mut().zip(trial) {
            *h += hit as usize;
        }
    }
    Ok(hits.into_iter().map(|h| 100.0 * h as f64 / trials as f64).collect())
}

/// Normal-approximation interval for R@K of a scorer that ranks at random:
/// each query hits with probability `k / pool_size`.
pub fn chance_recall_interval(k: usize, pool_size: usize, num_queries: usize, level: f64) -> Result<(f64, f64, f64)> {
    if k == 0 || k > pool_size || num_queries == 0 {
        return Err(Error::InvalidConfig(format!(
            "chance interval needs 1 <= k ({k}) <= pool ({pool_size}) and queries > 0"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level must lie in (0, 1), got {level}")));
    }
    let p = k as f64 / pool_size as f64;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let half = z * (p * (1.0 - p) / num_queries as f64).sqrt();
    Ok((100.0 * p, 100.0 * (p - half).max(0.0), 100.0 * (p + half).min(1.0)))
}

/// |a ∩ b| / |a ∪ b|, and 1 when both are empty.
pub fn label_iou<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum RelevanceRule {
    /// Relevant iff IoU ≥ threshold.
    Binary { threshold: f64 },
    /// IoU is the gain.
    Graded,
}

impl Default for RelevanceRule {
    fn default() -> Self {
        RelevanceRule::Binary { threshold: 1.0 }
    }
}

impl RelevanceRule {
    pub fn gain(&self, iou: f64) -> f64 {
        match *self {
            RelevanceRule::Binary { threshold } => f64::from(u8::from(iou >= threshold)),
            RelevanceRule::Graded => iou,
        }
    }
}

pub const MAP_DEPTH: usize = 5;

/// Gain-weighted precision summed over the top ranks:
/// Σ_k g_k · (Σ_{j≤k} g_j) / k. With 0/1 gains this is the usual AP numerator.
fn weighted_precision_sum(gains: &[f64]) -> f64 {
    let mut cum = 0.0;
    let mut total = 0.0;
    for (k, &g) in gains.iter().enumerate() {
        cum += g;
        total += g * cum / (k + 1) as f64;
    }
    total
}

/// Average precision over the top `MAP_DEPTH` neighbours of each item, the
/// item itself excluded, normalized by the same sum over the ideal ordering.
/// Items without any relevant neighbour score 0. Returns one AP per query.
pub fn average_precisions_at_5<T: Ord + Sync>(
    sims: &[f64],
    labels: &[BTreeSet<T>],
    rule: RelevanceRule,
) -> Result<Vec<f64>> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::EmptyPool);
    }
    if sims.len() != n * n {
        return Err(Error::DimensionMismatch {
            context: "volume similarity matrix",
            expected: n * n,
            actual: sims.len(),
        });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|q| {
            let row = &sims[q * n..(q + 1) * n];
            let mut order: Vec<usize> = (0..n).filter(|&j| j != q).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
            let gains: Vec<f64> = order
                .iter()
                .take(MAP_DEPTH)
                .map(|&j| rule.gain(label_iou(&labels[q], &labels[j])))
                .collect();
            let mut ideal: Vec<f64> = order.iter().map(|&j| rule.gain(label_iou(&labels[q], &labels[j]))).collect();
            ideal.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
            ideal.truncate(MAP_DEPTH);
            let norm = weighted_precision_sum(&ideal);
            if norm > 0.0 {
                weighted_precision_sum(&gains) / norm
            } else {
                0.0
            }
        })
        .collect())
}

pub fn map_at_5<T: Ord + Sync>(sims: &[f64], labels: &[BTreeSet<T>], rule: RelevanceRule) -> Result<f64> {
    let aps = average_precisions_at_5(sims, labels, rule)?;
    Ok(100.0 * aps.iter().sum::<f64>() / aps.len() as f64)
}
