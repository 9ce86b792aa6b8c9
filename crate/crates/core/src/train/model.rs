use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::numeric::{EmbeddingMatrix, ProjectionHead, UnitProjection};
use crate::objectives::{
    gaussian_soft_target, localization_loss, prompt_loss_scaled, siglip_loss, DepthGrid, LossWeights, PromptEntry,
    PromptLossInputs, SigLipParams,
};
use crate::prompts::VARIANTS;
use crate::seed::indexed_rng;

/// Upper bound on the learned temperature, as log t.
pub const MAX_LOG_TEMPERATURE: f64 = 4.605_170_185_988_092; // ln 100

/// Trainable parameters: two projection heads plus the contrastive scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub image_head: ProjectionHead,
    pub text_head: ProjectionHead,
    pub log_temperature: f64,
    pub bias: f64,
}

impl Model {
    pub fn init(raw_dim: usize, proj_dim: usize, seed: u64) -> Self {
        let defaults = SigLipParams::default();
        Self {
            image_head: ProjectionHead::random(raw_dim, proj_dim, &mut indexed_rng(seed, "init-head", 0)),
            text_head: ProjectionHead::random(raw_dim, proj_dim, &mut indexed_rng(seed, "init-head", 1)),
            log_temperature: defaults.temperature_t.ln(),
            bias: defaults.bias_b,
        }
    }

    pub fn raw_dim(&self) -> usize {
        self.image_head.in_dim
    }

    pub fn proj_dim(&self) -> usize {
        self.image_head.out_dim
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    /// Shared temperature τ = 1/t used by the prompt and classification scores.
    pub fn tau(&self) -> f64 {
        (-self.log_temperature).exp()
    }

    pub fn siglip_params(&self) -> SigLipParams {
        SigLipParams {
            temperature_t: self.temperature(),
            bias_b: self.bias,
        }
    }

    pub fn num_params(&self) -> usize {
        self.image_head.num_params() + self.text_head.num_params() + 2
    }

    /// Parameters in checkpoint order: image weight, image bias, text weight,
    /// text bias, log t, b.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend(&self.image_head.weight);
        v.extend(&self.image_head.bias);
        v.extend(&self.text_head.weight);
        v.extend(&self.text_head.bias);
        v.push(self.log_temperature);
        v.push(self.bias);
        v
    }

    pub fn unflatten(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                context: "flat parameters",
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        let mut rest = params;
        for dst in [
            &mut self.image_head.weight,
            &mut self.image_head.bias,
            &mut self.text_head.weight,
            &mut self.text_head.bias,
        ] {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        }
        self.log_temperature = rest[0];
        self.bias = rest[1];
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub image_weight: Vec<f64>,
    pub image_bias: Vec<f64>,
    pub text_weight: Vec<f64>,
    pub text_bias: Vec<f64>,
    pub log_temperature: f64,
    pub bias: f64,
}

impl ModelGrads {
    pub fn zeros(model: &Model) -> Self {
        Self {
            image_weight: vec![0.0; model.image_head.weight.len()],
            image_bias: vec![0.0; model.image_head.bias.len()],
            text_weight: vec![0.0; model.text_head.weight.len()],
            text_bias: vec![0.0; model.text_head.bias.len()],
            log_temperature: 0.0,
            bias: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        v.extend(&self.image_weight);
        v.extend(&self.image_bias);
        v.extend(&self.text_weight);
        v.extend(&self.text_bias);
        v.push(self.log_temperature);
        v.push(self.bias);
        v
    }

    pub fn add_scaled(&mut self, other: &ModelGrads, scale: f64) {
        let pairs = [
            (&mut self.image_weight, &other.image_weight),
            (&mut self.image_bias, &other.image_bias),
            (&mut self.text_weight, &other.text_weight),
            (&mut self.text_bias, &other.text_bias),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        self.log_temperature += scale * other.log_temperature;
        self.bias += scale * other.bias;
    }
}

/// Which losses contribute and how.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSettings {
    pub enable_global: bool,
    pub enable_prompt: bool,
    pub enable_loc: bool,
    pub weights: LossWeights,
    pub loc_tau: f64,
    pub loc_sigma: f64,
    pub max_prompt_findings: usize,
}

/// α and w of one finding; `None` excludes it from prompt supervision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FindingWeights {
    pub alpha_pos: u64,
    pub alpha_neg: u64,
    pub weight: f64,
}

/// Component losses of one batch; disabled components are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BatchLosses {
    pub global: Option<f64>,
    pub prompt: Option<f64>,
    pub loc: Option<f64>,
    pub total: f64,
}

/// The combined training objective over batches of one corpus.
pub struct Objective<'a> {
    corpus: &'a Corpus,
    settings: ObjectiveSettings,
    findings: Vec<Option<FindingWeights>>,
    labels: Vec<Vec<Option<bool>>>,
    snippets_by_volume: Vec<Vec<usize>>,
    grid: DepthGrid,
    /// Raw prompt embeddings, `VARIANTS` positives then `VARIANTS` negatives per finding.
    prompt_raw: EmbeddingMatrix,
}

const ROW_CHUNK: usize = 128;

/// Σ over rows of the head's parameter gradient, reduced in fixed chunk order
/// so the result does not depend on the thread count.
fn head_param_grads(head: &ProjectionHead, rows: &[(&[f64], &[f64])]) -> (Vec<f64>, Vec<f64>) {
    let partials: Vec<(Vec<f64>, Vec<f64>)> = rows
        .par_chunks(ROW_CHUNK)
        .map(|chunk| {
            let mut w = vec![0.0; head.weight.len()];
            let mut b = vec![0.0; head.bias.len()];
            for (x, g) in chunk {
                head.accumulate_row(x, g, &mut w, &mut b);
            }
            (w, b)
        })
        .collect();
    let mut w = vec![0.0; head.weight.len()];
    let mut b = vec![0.0; head.bias.len()];
    for (pw, pb) in partials {
        w.iter_mut().zip(&pw).for_each(|(a, x)| *a += x);
        b.iter_mut().zip(&pb).for_each(|(a, x)| *a += x);
    }
    (w, b)
}

/// Per-volume results gathered in parallel and merged in batch order.
struct VolumePart {
    prompt_loss: f64,
    prompt_grad_z: Vec<f64>,
    prompt_grads: Vec<(usize, Vec<f64>)>,
    prompt_grad_tau: f64,
    loc_loss: f64,
    depth_input: Option<EmbeddingMatrix>,
    depth_upstream: Option<EmbeddingMatrix>,
    snippet_upstream: Vec<(usize, Vec<f64>)>,
}

impl<'a> Objective<'a> {
    pub fn new(corpus: &'a Corpus, settings: ObjectiveSettings, findings: Vec<Option<FindingWeights>>) -> Result<Self> {
        if findings.len() != corpus.findings.len() {
            return Err(Error::DimensionMismatch {
                context: "finding weights",
                expected: corpus.findings.len(),
                actual: findings.len(),
            });
        }
        let mut rows = Vec::with_capacity(corpus.findings.len() * 2 * VARIANTS);
        for p in corpus.prompts.entries() {
            for embs in [&p.positive_embeddings, &p.negative_embeddings] {
                let embs = embs.as_ref().ok_or_else(|| {
                    Error::ConfigMismatch(format!("finding `{}` lacks prompt embeddings", p.finding))
                })?;
                rows.extend(embs.iter().cloned());
            }
        }
        let prompt_raw = if rows.is_empty() {
            EmbeddingMatrix::zeros(0, corpus.raw_dim())
        } else {
            EmbeddingMatrix::from_rows(&rows)?
        };
        Ok(Self {
            corpus,
            settings,
            findings,
            labels: corpus.label_matrix(),
            snippets_by_volume: corpus.snippets_by_volume(),
            grid: DepthGrid::new(corpus.depth.positions(), corpus.pitch_mm, 0.0)?,
            prompt_raw,
        })
    }

    pub fn settings(&self) -> &ObjectiveSettings {
        &self.settings
    }

    /// Supervised (volume, finding, pos variant, neg variant) choices of one
    /// batch, drawn from the `(seed, step)` stream.
    fn prompt_choices(&self, batch: &[usize], seed: u64, step: u64) -> Vec<Vec<(usize, usize, usize)>> {
        let mut rng = indexed_rng(seed, "prompt-variants", step);
        batch
            .iter()
            .map(|&v| {
                let valid: Vec<usize> = (0..self.findings.len())
                    .filter(|&q| self.findings[q].is_some() && self.labels[v][q].is_some())
                    .collect();
                let chosen: Vec<usize> = if valid.len() > self.settings.max_prompt_findings {
                    let mut idx = sample(&mut rng, valid.len(), self.settings.max_prompt_findings).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|i| valid[i]).collect()
                } else {
                    valid
                };
                chosen
                    .into_iter()
                    .map(|q| (q, rng.random_range(0..VARIANTS), rng.random_range(0..VARIANTS)))
                    .collect()
            })
            .collect()
    }

    /// Loss and gradients of the combined objective on one batch. `step`
    /// selects the prompt-variant draw.
    pub fn evaluate(&self, model: &Model, batch: &[usize], seed: u64, step: u64) -> Result<(BatchLosses, ModelGrads)> {
        let s = &self.settings;
        let corpus = self.corpus;
        let n = batch.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let proj = model.proj_dim();
        let mut grads = ModelGrads::zeros(model);
        let mut losses = BatchLosses::default();

        let img_raw = corpus.images.select_rows(batch);
        let img: UnitProjection = model.image_head.forward_unit(&img_raw)?;
        let mut g_img = EmbeddingMatrix::zeros(n, proj);
        let mut txt_part = None;

        if s.enable_global {
            let txt_raw = corpus.texts.select_rows(batch);
            let txt = model.text_head.forward_unit(&txt_raw)?;
            let out = siglip_loss(&img.unit, &txt.unit, &model.siglip_params())?;
            losses.global = Some(out.loss);
            g_img.as_mut_slice().iter_mut().zip(out.grad_img.as_slice()).for_each(|(a, b)| *a += b);
            grads.log_temperature += out.grad_t * model.temperature();
            grads.bias += out.grad_b;
            txt_part = Some((txt_raw, txt.backward(&out.grad_txt)));
        }

        let choices = if s.enable_prompt {
            self.prompt_choices(batch, seed, step)
        } else {
            vec![Vec::new(); n]
        };
        let m_batch: usize = choices.iter().map(Vec::len).sum();
        let prompt_unit = if s.enable_prompt && m_batch > 0 {
            Some(model.text_head.forward_unit(&self.prompt_raw)?)
        } else {
            None
        };
        let tau = model.tau();
        let lambda = s.weights.lambda;
        let beta = s.weights.beta;
        let n_snippets: usize = if s.enable_loc {
            batch.iter().map(|&v| self.snippets_by_volume[v].len()).sum()
        } else {
            0
        };

        let parts: Vec<VolumePart> = batch
            .par_iter()
            .enumerate()
            .map(|(bi, &v)| -> Result<VolumePart> {
                let mut part = VolumePart {
                    prompt_loss: 0.0,
                    prompt_grad_z: vec![0.0; proj],
                    prompt_grads: Vec::new(),
                    prompt_grad_tau: 0.0,
                    loc_loss: 0.0,
                    depth_input: None,
                    depth_upstream: None,
                    snippet_upstream: Vec::new(),
                };
                if let (Some(pu), false) = (&prompt_unit, choices[bi].is_empty()) {
                    let rows: Vec<(usize, usize)> = choices[bi]
                        .iter()
                        .map(|&(q, pv, nv)| (q * 2 * VARIANTS + pv, q * 2 * VARIANTS + VARIANTS + nv))
                        .collect();
                    let entries = choices[bi]
                        .iter()
                        .zip(&rows)
                        .map(|(&(q, _, _), &(pr, nr))| {
                            let fw = self.findings[q].expect("only supervised findings are chosen");
                            PromptEntry {
                                pos: pu.unit.row(pr).to_vec(),
                                neg: pu.unit.row(nr).to_vec(),
                                label: self.labels[v][q].expect("only labelled findings are chosen"),
                                weight: fw.weight,
                                n_pos: fw.alpha_pos,
                                n_neg: fw.alpha_neg,
                            }
                        })
                        .collect();
                    let inputs = PromptLossInputs {
                        z: img.unit.row(bi).to_vec(),
                        entries,
                        tau,
                    };
                    let out = prompt_loss_scaled(&inputs, 1.0 / m_batch as f64)?;
                    part.prompt_loss = out.loss;
                    part.prompt_grad_z = out.grad_z.iter().map(|g| lambda * g).collect();
                    part.prompt_grad_tau = lambda * out.grad_tau;
                    for ((pr, nr), (gp, gn)) in rows.iter().zip(out.grad_pos.iter().zip(&out.grad_neg)) {
                        part.prompt_grads.push((*pr, gp.iter().map(|g| lambda * g).collect()));
                        part.prompt_grads.push((*nr, gn.iter().map(|g| lambda * g).collect()));
                    }
                }
                let snippets = &self.snippets_by_volume[v];
                if s.enable_loc && !snippets.is_empty() {
                    let depth_raw = corpus.depth.volume(v);
                    let depth = model.image_head.forward_unit(&depth_raw)?;
                    let mut g_depth = EmbeddingMatrix::zeros(depth_raw.rows(), proj);
                    let scale = beta / n_snippets as f64;
                    for &j in snippets {
                        let snip_raw = EmbeddingMatrix::new(1, corpus.raw_dim(), corpus.snippet_embeddings.row(j).to_vec())?;
                        let snip = model.text_head.forward_unit(&snip_raw)?;
                        let target = gaussian_soft_target(&self.grid, corpus.snippets[j].depth_index, s.loc_sigma)?;
                        let out = localization_loss(&depth.unit, snip.unit.row(0), &target, s.loc_tau)?;
                        part.loc_loss += out.loss / n_snippets as f64;
                        g_depth
                            .as_mut_slice()
                            .iter_mut()
                            .zip(out.grad_depth.as_slice())
                            .for_each(|(a, b)| *a += scale * b);
                        let g_snip = EmbeddingMatrix::new(1, proj, out.grad_snippet.iter().map(|g| scale * g).collect())?;
                        part.snippet_upstream.push((j, snip.backward(&g_snip).into_vec()));
                    }
                    part.depth_upstream = Some(depth.backward(&g_depth));
                    part.depth_input = Some(depth_raw);
                }
                Ok(part)
            })
            .collect::<Result<_>>()?;

        let mut g_prompt = prompt_unit.as_ref().map(|pu| EmbeddingMatrix::zeros(pu.unit.rows(), proj));
        let mut prompt_total = 0.0;
        let mut loc_total = 0.0;
        for (bi, part) in parts.iter().enumerate() {
            prompt_total += part.prompt_loss;
            loc_total += part.loc_loss;
            g_img.row_mut(bi).iter_mut().zip(&part.prompt_grad_z).for_each(|(a, b)| *a += b);
            // τ = exp(−log t)
            grads.log_temperature -= part.prompt_grad_tau * tau;
            if let Some(gp) = g_prompt.as_mut() {
                for (row, g) in &part.prompt_grads {
                    gp.row_mut(*row).iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
            }
        }
        if s.enable_prompt {
            losses.prompt = Some(prompt_total);
        }
        if s.enable_loc {
            losses.loc = Some(loc_total);
        }
        losses.total = losses.global.unwrap_or(0.0)
            + lambda * losses.prompt.unwrap_or(0.0)
            + beta * losses.loc.unwrap_or(0.0);
        if !losses.total.is_finite() {
            return Err(Error::NonFiniteLoss(format!(
                "global {:?}, prompt {:?}, loc {:?}",
                losses.global, losses.prompt, losses.loc
            )));
        }

        let up_img = img.backward(&g_img);
        let mut image_rows: Vec<(&[f64], &[f64])> = (0..n).map(|i| (img_raw.row(i), up_img.row(i))).collect();
        for part in &parts {
            if let (Some(x), Some(g)) = (&part.depth_input, &part.depth_upstream) {
                image_rows.extend((0..x.rows()).map(|d| (x.row(d), g.row(d))));
            }
        }
        let (w, b) = head_param_grads(&model.image_head, &image_rows);
        grads.image_weight = w;
        grads.image_bias = b;

        let mut text_rows: Vec<(&[f64], &[f64])> = Vec::new();
        if let Some((raw, up)) = &txt_part {
            text_rows.extend((0..n).map(|i| (raw.row(i), up.row(i))));
        }
        let up_prompt = match (&prompt_unit, &g_prompt) {
            (Some(pu), Some(gp)) => Some(pu.backward(gp)),
            _ => None,
        };
        if let Some(up) = &up_prompt {
            text_rows.extend((0..up.rows()).map(|r| (self.prompt_raw.row(r), up.row(r))));
        }
        for part in &parts {
            for (j, g) in &part.snippet_upstream {
                text_rows.push((corpus.snippet_embeddings.row(*j), g.as_slice()));
            }
        }
        let (w, b) = head_param_grads(&model.text_head, &text_rows);
        grads.text_weight = w;
        grads.text_bias = b;
        Ok((losses, grads))
    }
}
