//! Seeded synthetic corpora with planted pair, label and depth structure.
//!
//! Every study draws a shared latent `u + label_signal · L`, where `L` sums
//! ±h_q over its labelled findings. Image and report embeddings mix that
//! latent (weight `pair_signal`) with independent noise. Prompt embeddings sit
//! around ±f_q, a direction unrelated to h_q, so a model only scores findings
//! after learning to map one onto the other. Each snippet latent is planted in
//! the local feature of its depth position with weight `depth_signal`.

mod text;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use text::finding_names;

use crate::corpus::{Corpus, DepthFeatures, SnippetItem, Split, VolumeInfo};
use crate::error::{Error, Result};
use crate::mining::{mm_to_depth_index, Report, SeriesGeometry};
use crate::numeric::{l2_normalize, random_unit, EmbeddingMatrix};
use crate::objectives::DepthGrid;
use crate::prompts::{finding_stats, render_prompts, FindingLabelRecord, FindingStats, PromptBank, VariantTemplates};
use crate::seed::{indexed_rng, rng_for, Rng};

/// Noise mixed into each prompt variant around its finding direction.
pub const PROMPT_NOISE: f64 = 0.3;
/// Share of (volume, finding) labels left absent.
pub const ABSENT_RATE: f64 = 0.05;
pub const MAX_SNIPPETS: usize = 3;
/// Slices per depth position; slice thickness is `pitch_mm / SLICES_PER_POSITION`.
pub const SLICES_PER_POSITION: u32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_pairs: usize,
    pub raw_dim: usize,
    pub proj_dim: usize,
    pub n_findings: usize,
    #[serde(rename = "depth_D")]
    pub depth_positions: usize,
    pub pitch_mm: f64,
    pub pair_signal: f64,
    pub label_signal: f64,
    pub depth_signal: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_pairs: 2048,
            raw_dim: 256,
            proj_dim: 64,
            n_findings: 16,
            depth_positions: 32,
            pitch_mm: 12.0,
            pair_signal: 0.8,
            label_signal: 0.8,
            depth_signal: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_pairs == 0 {
            return bad("n_pairs must be at least 1".into());
        }
        if self.raw_dim < 2 || self.proj_dim < 2 {
            return bad(format!("raw_dim and proj_dim must be ≥ 2, got {} and {}", self.raw_dim, self.proj_dim));
        }
        if self.n_findings == 0 {
            return bad("n_findings must be at least 1".into());
        }
        if self.depth_positions == 0 {
            return bad("depth_D must be at least 1".into());
        }
        if !(self.pitch_mm > 0.0 && self.pitch_mm.is_finite()) {
            return bad(format!("pitch_mm must be positive, got {}", self.pitch_mm));
        }
        for (name, v) in [
            ("pair_signal", self.pair_signal),
            ("label_signal", self.label_signal),
            ("depth_signal", self.depth_signal),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    pub fn geometry(&self, series: u32) -> SeriesGeometry {
        let slices = self.depth_positions as u32 * SLICES_PER_POSITION;
        SeriesGeometry {
            series,
            num_slices: slices,
            slice_thickness_mm: self.pitch_mm / SLICES_PER_POSITION as f64,
            first_slice_offset_mm: 0.0,
            axial_length_mm: self.depth_positions as f64 * self.pitch_mm,
        }
    }
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

/// `normalize(a·x + b·y)`, falling back to `x` if the mix cancels.
fn mix(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; x.len()];
    axpy(&mut v, a, x);
    axpy(&mut v, b, y);
    l2_normalize(&v).unwrap_or_else(|_| x.to_vec())
}

/// Encoder outputs are stored as f32; rounding at generation keeps an
/// in-memory corpus identical to one reloaded from disk.
fn stored(x: f64) -> f64 {
    x as f32 as f64
}

struct VolumeDraw {
    labels: Vec<Option<bool>>,
    image: Vec<f64>,
    text: Vec<f64>,
    depth: Vec<f32>,
    snippets: Vec<(SnippetItem, u32, u32, Vec<f64>)>,
    series: u32,
    report: text::ReportText,
}

fn draw_volume(
    cfg: &SynthConfig,
    index: usize,
    prevalence: &[f64],
    image_dirs: &[Vec<f64>],
    names: &[String],
) -> Result<VolumeDraw> {
    let mut rng = indexed_rng(cfg.seed, "synth-volume", index as u64);
    let dim = cfg.raw_dim;
    let q = cfg.n_findings;

    let labels: Vec<Option<bool>> = prevalence
        .iter()
        .map(|&p| (!rng.random_bool(ABSENT_RATE)).then(|| rng.random_bool(p)))
        .collect();
    let mut label_part = vec![0.0; dim];
    for (y, h) in labels.iter().zip(image_dirs) {
        if let Some(y) = y {
            axpy(&mut label_part, if *y { 1.0 } else { -1.0 } / (q as f64).sqrt(), h);
        }
    }
    let u = random_unit(dim, &mut rng);
    let shared = mix(1.0, &u, cfg.label_signal, &label_part);
    let noise_img = random_unit(dim, &mut rng);
    let noise_txt = random_unit(dim, &mut rng);
    let ps = cfg.pair_signal;
    let image = mix(ps, &shared, 1.0 - ps, &noise_img);
    let text = mix(ps, &shared, 1.0 - ps, &noise_txt);

    let series = rng.random_range(2..=6u32);
    let geom = cfg.geometry(series);
    let grid = DepthGrid::new(cfg.depth_positions, cfg.pitch_mm, geom.first_slice_offset_mm)?;
    let k = rng.random_range(1..=MAX_SNIPPETS);
    let mut snippets = Vec::with_capacity(k);
    for _ in 0..k {
        let image_no = rng.random_range(1..=geom.num_slices);
        let mm = geom.first_slice_offset_mm + (image_no as f64 - 0.5) * geom.slice_thickness_mm;
        let d = mm_to_depth_index(mm, &grid)?;
        let latent = random_unit(dim, &mut rng);
        snippets.push((
            SnippetItem {
                volume: index,
                depth_index: d,
                axial_mm: mm,
            },
            series,
            image_no,
            latent,
        ));
    }

    let ds = cfg.depth_signal;
    let mut depth = Vec::with_capacity(cfg.depth_positions * dim);
    for d in 1..=cfg.depth_positions {
        let background = random_unit(dim, &mut rng);
        let mut planted = vec![0.0; dim];
        let mut any = false;
        for (s, _, _, latent) in &snippets {
            if s.depth_index == d {
                axpy(&mut planted, 1.0, latent);
                any = true;
            }
        }
        let feature = if any { mix(ds, &planted, 1.0 - ds, &background) } else { background };
        depth.extend(feature.iter().map(|&x| x as f32));
    }

    let positives: Vec<&str> = labels
        .iter()
        .zip(names)
        .filter(|(y, _)| **y == Some(true))
        .map(|(_, n)| n.as_str())
        .collect();
    let refs: Vec<text::PlantedReference> = snippets
        .iter()
        .map(|(_, s, i, _)| text::PlantedReference { series: *s, image: *i })
        .collect();
    let report = text::render_report(&positives, &refs, &mut rng);

    Ok(VolumeDraw {
        labels,
        image,
        text,
        depth,
        snippets,
        series,
        report,
    })
}

/// Group volumes into patients (one or two studies each) and split patients
/// 80/10/10.
fn assign_patients(cfg: &SynthConfig) -> (Vec<usize>, Vec<Split>) {
    let mut rng = rng_for(cfg.seed, "synth-patients");
    let mut patient_of = Vec::with_capacity(cfg.n_pairs);
    let mut next = 0usize;
    let mut studies_of_current = 0;
    for _ in 0..cfg.n_pairs {
        if studies_of_current == 1 && rng.random_bool(0.3) {
            studies_of_current = 2;
        } else {
            next += 1;
            studies_of_current = 1;
        }
        patient_of.push(next - 1);
    }
    let mut order: Vec<usize> = (0..next).collect();
    order.shuffle(&mut rng);
    let n_train = (next as f64 * 0.8).round() as usize;
    let n_val = (next as f64 * 0.1).round() as usize;
    let mut patient_split = vec![Split::Test; next];
    for (rank, &p) in order.iter().enumerate() {
        patient_split[p] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let splits = patient_of.iter().map(|&p| patient_split[p]).collect();
    (patient_of, splits)
}

fn prompt_bank(cfg: &SynthConfig, names: &[String], rng: &mut Rng) -> Result<PromptBank> {
    let templates = VariantTemplates::default();
    let mut entries = Vec::with_capacity(names.len());
    for name in names {
        let dir = random_unit(cfg.raw_dim, rng);
        let neg_dir: Vec<f64> = dir.iter().map(|x| -x).collect();
        let variants = |center: &[f64], rng: &mut Rng| {
            (0..crate::prompts::VARIANTS)
                .map(|_| {
                    let v = mix(1.0, center, PROMPT_NOISE, &random_unit(cfg.raw_dim, rng));
                    v.into_iter().map(stored).collect::<Vec<_>>()
                })
                .collect::<Vec<_>>()
        };
        let mut p = render_prompts(name, &templates)?;
        p.positive_embeddings = Some(variants(&dir, rng));
        p.negative_embeddings = Some(variants(&neg_dir, rng));
        entries.push(p);
    }
    PromptBank::new(entries)
}

/// Build a corpus; identical configs give bit-identical output.
pub fn generate(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let names = finding_names(cfg.n_findings);
    let mut dir_rng = rng_for(cfg.seed, "synth-directions");
    let image_dirs: Vec<Vec<f64>> = (0..cfg.n_findings).map(|_| random_unit(cfg.raw_dim, &mut dir_rng)).collect();
    let prompts = prompt_bank(cfg, &names, &mut rng_for(cfg.seed, "synth-prompts"))?;
    let mut prev_rng = rng_for(cfg.seed, "synth-prevalence");
    let prevalence: Vec<f64> = (0..cfg.n_findings).map(|_| prev_rng.random_range(0.05..0.5)).collect();

    let draws: Vec<VolumeDraw> = (0..cfg.n_pairs)
        .into_par_iter()
        .map(|i| draw_volume(cfg, i, &prevalence, &image_dirs, &names))
        .collect::<Result<_>>()?;
    let (patient_of, splits) = assign_patients(cfg);

    let n = cfg.n_pairs;
    let dim = cfg.raw_dim;
    let mut images = Vec::with_capacity(n * dim);
    let mut texts = Vec::with_capacity(n * dim);
    let mut depth = Vec::with_capacity(n * cfg.depth_positions * dim);
    let mut volumes = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut snippets = Vec::new();
    let mut snippet_rows = Vec::new();
    let mut reports = Vec::with_capacity(n);
    for (i, d) in draws.into_iter().enumerate() {
        let volume_id = format!("vol-{i:05}");
        let patient_id = format!("pat-{:05}", patient_of[i]);
        images.extend(d.image.iter().copied().map(stored));
        texts.extend(d.text.iter().copied().map(stored));
        depth.extend(d.depth);
        labels.push(FindingLabelRecord {
            volume_id: volume_id.clone(),
            labels: names
                .iter()
                .zip(&d.labels)
                .filter_map(|(name, y)| y.map(|y| (name.clone(), y)))
                .collect(),
        });
        for (item, _, _, latent) in d.snippets {
            snippets.push(item);
            snippet_rows.extend(latent.iter().copied().map(stored));
        }
        reports.push(Report {
            report_id: volume_id.clone(),
            patient_id: patient_id.clone(),
            full_text: d.report.full_text,
            sections: vec![
                ("findings".into(), d.report.findings),
                ("impression".into(), d.report.impression),
            ],
            organ_descriptions: Some(d.report.organ_descriptions),
            no_history_text: Some(d.report.no_history_text),
            series_geometries: vec![cfg.geometry(d.series)],
        });
        volumes.push(VolumeInfo {
            volume_id,
            patient_id,
            split: splits[i],
        });
    }
    let n_snippets = snippets.len();
    let corpus = Corpus {
        findings: names,
        volumes,
        images: EmbeddingMatrix::new(n, dim, images)?,
        texts: EmbeddingMatrix::new(n, dim, texts)?,
        labels,
        prompts,
        depth: DepthFeatures::new(n, cfg.depth_positions, dim, depth)?,
        pitch_mm: cfg.pitch_mm,
        snippets,
        snippet_embeddings: EmbeddingMatrix::new(n_snippets, dim, snippet_rows)?,
        reports,
    };
    corpus.validate()?;
    Ok(corpus)
}

/// Positive/negative counts per finding over the given records (weight 1).
/// A finding with no negatives has an undefined α (`FindingStats::alpha`
/// returns `None`) and is left out of prompt supervision.
pub fn plant_counts<'a>(
    records: impl IntoIterator<Item = &'a FindingLabelRecord>,
    findings: &[String],
) -> Result<BTreeMap<String, FindingStats>> {
    finding_stats(records, findings, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{recall_at_k, RetrievalTask};
    use crate::mining::{mine_reports, ReferenceExtractor};
    use crate::numeric::dot;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_pairs: 120,
            raw_dim: 32,
            proj_dim: 8,
            n_findings: 4,
            depth_positions: 10,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a.images, b.images);
        assert_eq!(a.texts, b.texts);
        assert_eq!(a.depth, b.depth);
        assert_eq!(a.snippet_embeddings, b.snippet_embeddings);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.volumes, b.volumes);
        let c = generate(&small(4)).unwrap();
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn full_pair_signal_makes_pairs_identical() {
        let cfg = SynthConfig {
            pair_signal: 1.0,
            ..small(1)
        };
        let c = generate(&cfg).unwrap();
        for i in 0..c.len() {
            assert_eq!(c.images.row(i), c.texts.row(i));
        }
    }

    #[test]
    fn zero_pair_signal_gives_chance_retrieval() {
        let cfg = SynthConfig {
            pair_signal: 0.0,
            label_signal: 0.0,
            n_pairs: 600,
            raw_dim: 64,
            ..small(2)
        };
        let c = generate(&cfg).unwrap();
        let task = RetrievalTask::new(&c.texts, &c.images, (0..c.len()).collect()).unwrap();
        let r = recall_at_k(&task, 10).unwrap();
        // chance 10/600 = 1.67 %, sd ≈ 0.52 %
        assert!(r < 1.67 + 2.5, "{r}");
    }

    #[test]
    fn planted_depth_is_recoverable() {
        let cfg = SynthConfig {
            depth_signal: 1.0,
            ..small(5)
        };
        let c = generate(&cfg).unwrap();
        for (j, s) in c.snippets.iter().enumerate() {
            let feats = c.depth.volume(s.volume);
            let snip = c.snippet_embeddings.row(j);
            let best = (0..feats.rows())
                .max_by(|&a, &b| dot(feats.row(a), snip).total_cmp(&dot(feats.row(b), snip)).then(b.cmp(&a)))
                .unwrap();
            assert_eq!(best + 1, s.depth_index);
        }
    }

    #[test]
    fn report_references_match_planted_positions() {
        let c = generate(&small(6)).unwrap();
        let (mined, _) = mine_reports(&c.reports, &ReferenceExtractor::default()).unwrap();
        let by_volume = c.snippets_by_volume();
        assert_eq!(mined.len(), c.snippets.len());
        let mut k = 0;
        for (v, idx) in by_volume.iter().enumerate() {
            for &j in idx {
                assert_eq!(mined[k].report_id, c.volumes[v].volume_id);
                assert_eq!(mined[k].depth_index, c.snippets[j].depth_index);
                assert_eq!(mined[k].axial_mm, c.snippets[j].axial_mm);
                k += 1;
            }
        }
    }

    #[test]
    fn splits_follow_patients() {
        let c = generate(&SynthConfig { n_pairs: 1000, ..small(7) }).unwrap();
        let mut split_of = BTreeMap::new();
        for v in &c.volumes {
            assert_eq!(*split_of.entry(v.patient_id.clone()).or_insert(v.split), v.split);
        }
        let frac = |s| c.split_indices(s).len() as f64 / 1000.0;
        assert!((frac(Split::Train) - 0.8).abs() < 0.04);
        assert!((frac(Split::Test) - 0.1).abs() < 0.03);
    }

    #[test]
    fn counts_and_alpha() {
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let recs: Vec<FindingLabelRecord> = (0..1010)
            .map(|i| FindingLabelRecord {
                volume_id: format!("v{i}"),
                labels: [
                    ("a".to_string(), true),
                    ("b".to_string(), i % 2 == 0),
                    ("c".to_string(), i >= 10),
                ]
                .into_iter()
                .collect(),
            })
            .collect();
        let s = plant_counts(&recs, &names).unwrap();
        assert_eq!((s["a"].n_pos, s["a"].n_neg), (1010, 0));
        assert_eq!(s["a"].alpha(), None);
        assert_eq!(s["b"].alpha(), Some(1.0));
        assert_eq!((s["c"].n_pos, s["c"].n_neg), (1000, 10));
        assert_eq!(s["c"].alpha(), Some(20.0));

        let c = generate(&small(8)).unwrap();
        let counts = c.training_counts(1.0).unwrap();
        let train = c.split_indices(Split::Train);
        for f in &c.findings {
            let pos = train.iter().filter(|&&i| c.labels[i].label(f) == Some(true)).count() as u64;
            assert_eq!(counts[f].n_pos, pos);
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate(&SynthConfig { raw_dim: 1, ..small(0) }).is_err());
        assert!(generate(&SynthConfig { pair_signal: 1.5, ..small(0) }).is_err());
        assert!(generate(&SynthConfig { depth_positions: 0, ..small(0) }).is_err());
    }
}
