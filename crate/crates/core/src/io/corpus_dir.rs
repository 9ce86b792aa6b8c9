//! A corpus on disk: one directory of JSON Lines records and `REMB` matrices.
//!
//! ```text
//! corpus.json              findings, pitch, depth positions
//! volumes.jsonl labels.jsonl prompts.jsonl snippets.jsonl reports.jsonl
//! images.remb texts.remb   one row per volume, ids = volume ids
//! depth.remb               volumes × positions rows
//! prompts.remb             per finding: positive variants then negative
//! snippets.remb            one row per snippet record
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::embeddings::{read_embeddings, write_embeddings, EmbeddingFile};
use super::jsonl::{read_jsonl, write_jsonl};
use crate::corpus::{Corpus, DepthFeatures, SnippetItem, VolumeInfo};
use crate::error::{Error, Result};
use crate::mining::Report;
use crate::numeric::EmbeddingMatrix;
use crate::prompts::{FindingLabelRecord, FindingPrompts, PromptBank, VARIANTS};

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusMeta {
    format_version: u32,
    findings: Vec<String>,
    pitch_mm: f64,
    depth_positions: usize,
}

pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    corpus.validate()?;
    fs::create_dir_all(dir)?;
    let meta = CorpusMeta {
        format_version: CORPUS_FORMAT_VERSION,
        findings: corpus.findings.clone(),
        pitch_mm: corpus.pitch_mm,
        depth_positions: corpus.depth.positions(),
    };
    fs::write(dir.join("corpus.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    write_jsonl(&dir.join("volumes.jsonl"), &corpus.volumes)?;
    write_jsonl(&dir.join("labels.jsonl"), &corpus.labels)?;
    write_jsonl(&dir.join("snippets.jsonl"), &corpus.snippets)?;
    write_jsonl(&dir.join("reports.jsonl"), &corpus.reports)?;

    let ids: Vec<String> = corpus.volumes.iter().map(|v| v.volume_id.clone()).collect();
    write_embeddings(&dir.join("images.remb"), &EmbeddingFile::from_matrix(&corpus.images, Some(ids.clone()))?)?;
    write_embeddings(&dir.join("texts.remb"), &EmbeddingFile::from_matrix(&corpus.texts, Some(ids))?)?;
    write_embeddings(
        &dir.join("depth.remb"),
        &EmbeddingFile::new(corpus.depth.dim(), corpus.depth.as_slice().to_vec(), None)?,
    )?;
    let snippet_file = if corpus.snippets.is_empty() {
        EmbeddingFile::new(corpus.raw_dim(), Vec::new(), None)?
    } else {
        EmbeddingFile::from_matrix(&corpus.snippet_embeddings, None)?
    };
    write_embeddings(&dir.join("snippets.remb"), &snippet_file)?;

    let mut texts = Vec::with_capacity(corpus.prompts.len());
    let mut rows: Vec<f32> = Vec::new();
    for p in corpus.prompts.entries() {
        for embs in [&p.positive_embeddings, &p.negative_embeddings] {
            let embs = embs
                .as_ref()
                .ok_or_else(|| Error::ConfigMismatch(format!("finding `{}` lacks prompt embeddings", p.finding)))?;
            rows.extend(embs.iter().flatten().map(|&x| x as f32));
        }
        texts.push(FindingPrompts {
            positive_embeddings: None,
            negative_embeddings: None,
            ..p.clone()
        });
    }
    write_jsonl(&dir.join("prompts.jsonl"), &texts)?;
    write_embeddings(&dir.join("prompts.remb"), &EmbeddingFile::new(corpus.raw_dim(), rows, None)?)?;
    Ok(())
}

fn matrix_rows(file: &EmbeddingFile, name: &str, rows: usize, dim: usize) -> Result<EmbeddingMatrix> {
    if file.header.count != rows || file.header.dim != dim {
        return Err(Error::Format(format!(
            "{name}: {}×{} rows, expected {rows}×{dim}",
            file.header.count, file.header.dim
        )));
    }
    if rows == 0 {
        return Ok(EmbeddingMatrix::zeros(0, dim));
    }
    file.to_matrix()
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let meta: CorpusMeta = serde_json::from_str(&fs::read_to_string(dir.join("corpus.json"))?)
        .map_err(|e| Error::Format(format!("corpus.json: {e}")))?;
    if meta.format_version != CORPUS_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported corpus format {}", meta.format_version)));
    }
    let volumes: Vec<VolumeInfo> = read_jsonl(&dir.join("volumes.jsonl"))?;
    let labels: Vec<FindingLabelRecord> = read_jsonl(&dir.join("labels.jsonl"))?;
    let snippets: Vec<SnippetItem> = read_jsonl(&dir.join("snippets.jsonl"))?;
    let reports: Vec<Report> = read_jsonl(&dir.join("reports.jsonl"))?;
    let prompt_texts: Vec<FindingPrompts> = read_jsonl(&dir.join("prompts.jsonl"))?;

    let images = read_embeddings(&dir.join("images.remb"))?;
    let dim = images.header.dim;
    let n = volumes.len();
    if let Some(ids) = &images.header.ids {
        if let Some((i, _)) = ids.iter().zip(&volumes).enumerate().find(|(_, (id, v))| **id != v.volume_id) {
            return Err(Error::Format(format!("images.remb row {i} is not volume `{}`", volumes[i].volume_id)));
        }
    }
    let images = matrix_rows(&images, "images.remb", n, dim)?;
    let texts = matrix_rows(&read_embeddings(&dir.join("texts.remb"))?, "texts.remb", n, dim)?;
    let depth_file = read_embeddings(&dir.join("depth.remb"))?;
    if depth_file.header.count != n * meta.depth_positions || depth_file.header.dim != dim {
        return Err(Error::Format(format!(
            "depth.remb: {}×{} rows, expected {}×{dim}",
            depth_file.header.count,
            depth_file.header.dim,
            n * meta.depth_positions
        )));
    }
    let depth = DepthFeatures::new(n, meta.depth_positions, dim, depth_file.data)?;
    let snippet_embeddings = matrix_rows(
        &read_embeddings(&dir.join("snippets.remb"))?,
        "snippets.remb",
        snippets.len(),
        dim,
    )?;

    let prompt_rows = matrix_rows(
        &read_embeddings(&dir.join("prompts.remb"))?,
        "prompts.remb",
        prompt_texts.len() * 2 * VARIANTS,
        dim,
    )?;
    let mut entries = Vec::with_capacity(prompt_texts.len());
    for (q, mut p) in prompt_texts.into_iter().enumerate() {
        let block = |offset: usize| -> Vec<Vec<f64>> {
            (0..VARIANTS)
                .map(|k| prompt_rows.row(q * 2 * VARIANTS + offset + k).to_vec())
                .collect()
        };
        p.positive_embeddings = Some(block(0));
        p.negative_embeddings = Some(block(VARIANTS));
        entries.push(p);
    }

    let corpus = Corpus {
        findings: meta.findings,
        volumes,
        images,
        texts,
        labels,
        prompts: PromptBank::new(entries)?,
        depth,
        pitch_mm: meta.pitch_mm,
        snippets,
        snippet_embeddings,
        reports,
    };
    corpus.validate()?;
    Ok(corpus)
}
