//! In-memory training/evaluation corpus of precomputed encoder outputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mining::Report;
use crate::numeric::EmbeddingMatrix;
use crate::prompts::{FindingLabelRecord, FindingStats, PromptBank};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeInfo {
    pub volume_id: String,
    pub patient_id: String,
    pub split: Split,
}

/// A snippet tied to one depth position of one volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnippetItem {
    pub volume: usize,
    pub depth_index: usize,
    pub axial_mm: f64,
}

/// Per-position local features of every volume, stored as f32 to halve the
/// footprint. Rows are `volume × positions + (d − 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFeatures {
    volumes: usize,
    positions: usize,
    dim: usize,
    data: Vec<f32>,
}

impl DepthFeatures {
    pub fn new(volumes: usize, positions: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != volumes * positions * dim {
            return Err(Error::DimensionMismatch {
                context: "depth features",
                expected: volumes * positions * dim,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: i / dim.max(1),
                col: i % dim.max(1),
            });
        }
        Ok(Self {
            volumes,
            positions,
            dim,
            data,
        })
    }

    pub fn volumes(&self) -> usize {
        self.volumes
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// All positions of one volume as a `positions × dim` f64 matrix.
    pub fn volume(&self, v: usize) -> EmbeddingMatrix {
        let block = self.positions * self.dim;
        let data = self.data[v * block..(v + 1) * block].iter().map(|&x| x as f64).collect();
        EmbeddingMatrix::new(self.positions, self.dim, data).expect("shape fixed at construction")
    }
}

/// Everything the trainer and the evaluation protocols read. Row `i` of
/// `images`, `texts` and `depth` and entry `i` of `volumes`/`labels` describe
/// the same study.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub findings: Vec<String>,
    pub volumes: Vec<VolumeInfo>,
    pub images: EmbeddingMatrix,
    pub texts: EmbeddingMatrix,
    pub labels: Vec<FindingLabelRecord>,
    /// Prompt variants with cached raw text embeddings.
    pub prompts: PromptBank,
    pub depth: DepthFeatures,
    pub pitch_mm: f64,
    pub snippets: Vec<SnippetItem>,
    pub snippet_embeddings: EmbeddingMatrix,
    pub reports: Vec<Report>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn raw_dim(&self) -> usize {
        self.images.dim()
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.volumes[i].split == split).collect()
    }

    /// Snippet indices grouped by volume.
    pub fn snippets_by_volume(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (j, s) in self.snippets.iter().enumerate() {
            out[s.volume].push(j);
        }
        out
    }

    /// Dense label lookup: `[volume][finding]`.
    pub fn label_matrix(&self) -> Vec<Vec<Option<bool>>> {
        self.labels
            .iter()
            .map(|r| self.findings.iter().map(|f| r.label(f)).collect())
            .collect()
    }

    /// Positive/negative counts over the training split.
    pub fn training_counts(&self, default_weight: f64) -> Result<BTreeMap<String, FindingStats>> {
        let train = self.split_indices(Split::Train);
        crate::prompts::finding_stats(train.iter().map(|&i| &self.labels[i]), &self.findings, default_weight)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let raw = self.images.dim();
        let check = |context: &'static str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                })
            }
        };
        check("image rows", n, self.images.rows())?;
        check("text rows", n, self.texts.rows())?;
        check("text dim", raw, self.texts.dim())?;
        check("label records", n, self.labels.len())?;
        check("depth volumes", n, self.depth.volumes())?;
        check("depth dim", raw, self.depth.dim())?;
        check("snippet embeddings", self.snippets.len(), self.snippet_embeddings.rows())?;
        if !self.snippets.is_empty() {
            check("snippet dim", raw, self.snippet_embeddings.dim())?;
        }
        if self.findings.len() != self.prompts.len() || self.findings.iter().zip(self.prompts.findings()).any(|(a, b)| a != b) {
            return Err(Error::ConfigMismatch("prompt bank must list the findings in corpus order".into()));
        }
        for p in self.prompts.entries() {
            for embs in [&p.positive_embeddings, &p.negative_embeddings] {
                match embs {
                    Some(e) => check("prompt embedding dim", raw, e[0].len())?,
                    None => {
                        return Err(Error::ConfigMismatch(format!(
                            "finding `{}` has no cached prompt embeddings",
                            p.finding
                        )))
                    }
                }
            }
        }
        for (v, r) in self.volumes.iter().zip(&self.labels) {
            if v.volume_id != r.volume_id {
                return Err(Error::ConfigMismatch(format!(
                    "label record `{}` out of order with volume `{}`",
                    r.volume_id, v.volume_id
                )));
            }
        }
        let vocab = self.findings.iter().cloned().collect();
        for r in &self.labels {
            r.validate(&vocab)?;
        }
        for s in &self.snippets {
            if s.volume >= n {
                return Err(Error::IndexOutOfRange { index: s.volume, len: n });
            }
            if s.depth_index < 1 || s.depth_index > self.depth.positions() {
                return Err(Error::IndexOutOfRange {
                    index: s.depth_index,
                    len: self.depth.positions(),
                });
            }
        }
        if !(self.pitch_mm > 0.0) {
            return Err(Error::InvalidConfig("pitch_mm must be positive".into()));
        }
        Ok(())
    }
}
