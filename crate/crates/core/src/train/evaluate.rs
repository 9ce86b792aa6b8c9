use std::collections::BTreeSet;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::Model;
use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::eval::{
    average_precisions_at_5, baseline_predict, bootstrap_ci, mean, pooled_hit_rates, roc_auc, BaselineStrategy,
    BootstrapConfig, ConfidenceInterval, LocalizationResult, MetricsReport, RelevanceRule, RetrievalTask,
    THRESHOLDS_MM,
};
use crate::numeric::{dot, EmbeddingMatrix};
use crate::objectives::{predict_depth, DepthGrid};
use crate::prompts::{averaged_prompt_embedding, classify_finding, VARIANTS};
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub split: Split,
    /// Candidate pool for report→volume recall; volumes outside the split
    /// fill it up as distractors.
    pub retrieval_pool: usize,
    pub recall_ks: Vec<usize>,
    pub pooled_size: usize,
    pub pooled_trials: usize,
    pub relevance: RelevanceRule,
    pub per_finding_auc: bool,
    pub bootstrap: BootstrapConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            retrieval_pool: 1000,
            recall_ks: vec![1, 5, 10],
            pooled_size: 128,
            pooled_trials: 100,
            relevance: RelevanceRule::default(),
            per_finding_auc: true,
            bootstrap: BootstrapConfig::default(),
            seed: 0,
        }
    }
}

/// Volume indices of the retrieval pool: the split's volumes first, then
/// seeded distractors from the rest of the corpus.
pub fn retrieval_pool(corpus: &Corpus, split: Split, pool_size: usize, seed: u64) -> Vec<usize> {
    let mut pool = corpus.split_indices(split);
    let others: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.volumes[i].split != split).collect();
    let need = pool_size.saturating_sub(pool.len()).min(others.len());
    let mut picked = sample(&mut rng_for(seed, "retrieval-distractors"), others.len(), need).into_vec();
    picked.sort_unstable();
    pool.extend(picked.into_iter().map(|i| others[i]));
    pool
}

fn ci_of_mean(values: &[f64], cfg: &BootstrapConfig) -> Result<ConfidenceInterval> {
    bootstrap_ci(values, |xs| mean(xs), cfg)
}

/// Macro average of the per-finding AUCs that are defined on `rows`.
fn macro_auc(rows: &[usize], scores: &[Vec<f64>], labels: &[Vec<Option<bool>>]) -> Result<f64> {
    let mut aucs = Vec::new();
    for q in 0..rows.first().map_or(0, |&r| scores[r].len()) {
        let (s, l): (Vec<f64>, Vec<bool>) = rows
            .iter()
            .filter_map(|&r| labels[r][q].map(|y| (scores[r][q], y)))
            .unzip();
        if let Ok(a) = roc_auc(&s, &l) {
            aucs.push(a);
        }
    }
    if aucs.is_empty() {
        return Err(Error::DegenerateLabels);
    }
    mean(&aucs)
}

/// Run every protocol on one split. Reads the model only.
pub fn evaluate_checkpoint(model: &Model, corpus: &Corpus, cfg: &EvalConfig) -> Result<MetricsReport> {
    cfg.bootstrap.validate()?;
    if model.raw_dim() != corpus.raw_dim() {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint expects {}-d inputs, corpus has {}",
            model.raw_dim(),
            corpus.raw_dim()
        )));
    }
    let split = corpus.split_indices(cfg.split);
    if split.is_empty() {
        return Err(Error::EmptyTask);
    }
    let boot = &cfg.bootstrap;
    let mut report = MetricsReport::new();

    // report → volume retrieval
    let pool = retrieval_pool(corpus, cfg.split, cfg.retrieval_pool, cfg.seed);
    let images = model.image_head.forward_unit(&corpus.images.select_rows(&pool))?.unit;
    let texts = model.text_head.forward_unit(&corpus.texts.select_rows(&split))?.unit;
    let task = RetrievalTask::new(&texts, &images, (0..split.len()).collect())?;
    let ranks = task.target_ranks();
    for &k in &cfg.recall_ks {
        if k == 0 || k > pool.len() {
            return Err(Error::InvalidConfig(format!("recall k = {k} outside 1..={}", pool.len())));
        }
        let hits: Vec<f64> = ranks.iter().map(|&r| if r < k { 100.0 } else { 0.0 }).collect();
        report.insert(&format!("R@{k}"), &ci_of_mean(&hits, boot)?);
    }
    if split.len() >= cfg.pooled_size {
        let own = RetrievalTask::new(&texts, &images.select_rows(&(0..split.len()).collect::<Vec<_>>()), (0..split.len()).collect())?;
        let rates = pooled_hit_rates(&own, cfg.pooled_size, cfg.pooled_trials, cfg.seed)?;
        report.insert(&format!("pooled_R@1/{}", cfg.pooled_size), &ci_of_mean(&rates, boot)?);
    }

    // volume → volume retrieval by shared findings
    let split_images = images.select_rows(&(0..split.len()).collect::<Vec<_>>());
    if split.len() >= 2 {
        let sims = split_images.gram(&split_images)?;
        let label_sets: Vec<BTreeSet<usize>> = split
            .iter()
            .map(|&v| {
                corpus
                    .findings
                    .iter()
                    .enumerate()
                    .filter(|(_, f)| corpus.labels[v].label(f) == Some(true))
                    .map(|(q, _)| q)
                    .collect()
            })
            .collect();
        let aps = average_precisions_at_5(&sims, &label_sets, cfg.relevance)?;
        report.insert("MAP@5", &ci_of_mean(&aps, boot)?);
    }

    // zero-shot classification
    if !corpus.findings.is_empty() {
        let tau = model.tau();
        let mut prompt_pairs = Vec::with_capacity(corpus.findings.len());
        for p in corpus.prompts.entries() {
            let mut avg = Vec::with_capacity(2);
            for embs in [&p.positive_embeddings, &p.negative_embeddings] {
                let raw = embs
                    .as_ref()
                    .ok_or_else(|| Error::ConfigMismatch(format!("finding `{}` lacks prompt embeddings", p.finding)))?;
                let unit = model.text_head.forward_unit(&EmbeddingMatrix::from_rows(raw)?)?.unit;
                debug_assert_eq!(unit.rows(), VARIANTS);
                avg.push(averaged_prompt_embedding(&unit.iter_rows().collect::<Vec<_>>())?);
            }
            prompt_pairs.push((avg.remove(0), avg.remove(0)));
        }
        let labels = corpus.label_matrix();
        // AUC only needs the ranking, so score by the margin rather than the
        // sigmoid, which saturates to exact ties at large temperatures.
        let mut scores = vec![Vec::new(); corpus.len()];
        for (i, &v) in split.iter().enumerate() {
            let z = split_images.row(i);
            scores[v] = prompt_pairs
                .iter()
                .map(|(pos, neg)| classify_finding(z, pos, neg, tau).map(|_| dot(z, pos) - dot(z, neg)))
                .collect::<Result<_>>()?;
        }
        if macro_auc(&split, &scores, &labels).is_ok() {
            let ci = bootstrap_ci(&split, |rows| macro_auc(rows, &scores, &labels), boot)?;
            report.insert("AUC_macro", &ci);
        }
        if cfg.per_finding_auc {
            for (q, f) in corpus.findings.iter().enumerate() {
                let items: Vec<(f64, bool)> = split
                    .iter()
                    .filter_map(|&v| labels[v][q].map(|y| (scores[v][q], y)))
                    .collect();
                let auc = |xs: &[(f64, bool)]| {
                    let (s, l): (Vec<f64>, Vec<bool>) = xs.iter().copied().unzip();
                    roc_auc(&s, &l)
                };
                if auc(&items).is_ok() {
                    report.insert(&format!("AUC/{f}"), &bootstrap_ci(&items, auc, boot)?);
                }
            }
        }
    }

    // snippet localization against scan-agnostic baselines
    let by_volume = corpus.snippets_by_volume();
    let grid = DepthGrid::new(corpus.depth.positions(), corpus.pitch_mm, 0.0)?;
    let mut results = Vec::new();
    for &v in &split {
        if by_volume[v].is_empty() {
            continue;
        }
        let depth = model.image_head.forward_unit(&corpus.depth.volume(v))?.unit;
        let snippets = model
            .text_head
            .forward_unit(&corpus.snippet_embeddings.select_rows(&by_volume[v]))?
            .unit;
        for (k, &j) in by_volume[v].iter().enumerate() {
            results.push(LocalizationResult {
                predicted_mm: predict_depth(&depth, snippets.row(k), &grid)?,
                true_mm: corpus.snippets[j].axial_mm,
            });
        }
    }
    if !results.is_empty() {
        let errors: Vec<f64> = results.iter().map(LocalizationResult::abs_error).collect();
        report.insert("loc_MAE_mm", &ci_of_mean(&errors, boot)?);
        for t in THRESHOLDS_MM {
            let within: Vec<f64> = errors.iter().map(|&e| if e < t { 100.0 } else { 0.0 }).collect();
            report.insert(&format!("loc_within_{t}mm"), &ci_of_mean(&within, boot)?);
        }
        let lengths = vec![grid.extent_mm(); results.len()];
        for (name, strategy) in [("random", BaselineStrategy::Random), ("middle", BaselineStrategy::Middle)] {
            let preds = baseline_predict(strategy, &lengths, &mut rng_for(cfg.seed, "localization-baseline"))?;
            let errors: Vec<f64> = preds.iter().zip(&results).map(|(p, r)| (p - r.true_mm).abs()).collect();
            report.insert(&format!("baseline_{name}_MAE_mm"), &ci_of_mean(&errors, boot)?);
        }
    }
    Ok(report)
}
