//! Seeded finite-difference sweeps over every hand-derived gradient.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    finite_difference_check, gaussian_soft_target, localization_loss, prompt_loss, siglip_loss, DepthGrid,
    PromptEntry, PromptLossInputs, SigLipParams,
};
use crate::error::Result;
use crate::numeric::{random_unit, EmbeddingMatrix, ProjectionHead};
use crate::seed::{indexed_rng, Rng};

/// Coarse step of the extrapolated differences. Losses here reach ~20 at
/// small temperatures, so steps near 1e-6 drown in rounding noise.
pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckedFunction {
    Siglip,
    Prompt,
    Localization,
    HeadBackward,
}

impl CheckedFunction {
    pub const ALL: [CheckedFunction; 4] = [Self::Siglip, Self::Prompt, Self::Localization, Self::HeadBackward];

    pub fn name(self) -> &'static str {
        match self {
            Self::Siglip => "siglip",
            Self::Prompt => "prompt",
            Self::Localization => "localization",
            Self::HeadBackward => "head-backward",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }
}

impl fmt::Display for CheckedFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub function: CheckedFunction,
    pub trial: usize,
    /// Shape and scalar settings of the random configuration.
    pub config: String,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub seed: u64,
    pub tolerance: f64,
    pub trials: Vec<TrialResult>,
}

impl FidelityReport {
    pub fn passed(&self) -> bool {
        self.trials.iter().all(|t| t.max_rel_err < self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(|t| !(t.max_rel_err < self.tolerance))
    }

    pub fn worst(&self, function: CheckedFunction) -> Option<f64> {
        self.trials
            .iter()
            .filter(|t| t.function == function)
            .map(|t| t.max_rel_err)
            .reduce(f64::max)
    }
}

/// Hook applied to each analytic gradient before comparison; used to show the
/// check catches a wrong derivative.
pub type GradientTamper<'a> = &'a dyn Fn(CheckedFunction, &mut [f64]);

/// Configuration label, parameters, analytic gradient and the loss to probe.
type Trial = (String, Vec<f64>, Vec<f64>, Box<dyn Fn(&[f64]) -> f64>);

fn unit_rows(n: usize, dim: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n).map(|_| random_unit(dim, rng)).collect()
}

fn siglip_trial(rng: &mut Rng) -> Result<Trial> {
    let n = rng.random_range(2..=6);
    let dim = rng.random_range(2..=8);
    let t = rng.random_range(1.0..20.0);
    let b = rng.random_range(-12.0..2.0);
    let img = EmbeddingMatrix::from_rows(&unit_rows(n, dim, rng))?;
    let txt = EmbeddingMatrix::from_rows(&unit_rows(n, dim, rng))?;
    let out = siglip_loss(&img, &txt, &SigLipParams::new(t, b)?)?;
    let mut params = img.as_slice().to_vec();
    params.extend_from_slice(txt.as_slice());
    params.extend([t, b]);
    let mut grad = out.grad_img.into_vec();
    grad.extend(out.grad_txt.into_vec());
    grad.extend([out.grad_t, out.grad_b]);
    let loss = move |p: &[f64]| {
        let nd = n * dim;
        let img = EmbeddingMatrix::new(n, dim, p[..nd].to_vec()).expect("shape");
        let txt = EmbeddingMatrix::new(n, dim, p[nd..2 * nd].to_vec()).expect("shape");
        let params = SigLipParams {
            temperature_t: p[2 * nd],
            bias_b: p[2 * nd + 1],
        };
        siglip_loss(&img, &txt, &params).map_or(f64::NAN, |o| o.loss)
    };
    Ok((format!("n={n} dim={dim} t={t:.3} b={b:.3}"), params, grad, Box::new(loss)))
}

fn prompt_trial(rng: &mut Rng) -> Result<Trial> {
    let m = rng.random_range(1..=6);
    let dim = rng.random_range(2..=8);
    let tau = rng.random_range(0.05..1.0);
    let entries: Vec<PromptEntry> = (0..m)
        .map(|k| {
            // the first entry is always a clamped positive, so every trial
            // exercises the α = 20 branch
            let (label, n_pos, n_neg) = if k == 0 {
                (true, rng.random_range(200..2000), rng.random_range(1..10))
            } else {
                (rng.random_bool(0.5), rng.random_range(0..100), rng.random_range(1..100))
            };
            PromptEntry {
                pos: random_unit(dim, rng),
                neg: random_unit(dim, rng),
                label,
                weight: rng.random_range(0.5..2.0),
                n_pos,
                n_neg,
            }
        })
        .collect();
    let inputs = PromptLossInputs {
        z: random_unit(dim, rng),
        entries,
        tau,
    };
    let out = prompt_loss(&inputs)?;
    let mut params = inputs.z.clone();
    let mut grad = out.grad_z.clone();
    for (k, e) in inputs.entries.iter().enumerate() {
        params.extend_from_slice(&e.pos);
        params.extend_from_slice(&e.neg);
        grad.extend_from_slice(&out.grad_pos[k]);
        grad.extend_from_slice(&out.grad_neg[k]);
    }
    params.push(tau);
    grad.push(out.grad_tau);
    let config = format!("m={m} dim={dim} tau={tau:.3}");
    let loss = move |p: &[f64]| {
        let mut probe = inputs.clone();
        probe.z.copy_from_slice(&p[..dim]);
        for (k, e) in probe.entries.iter_mut().enumerate() {
            let off = dim + 2 * k * dim;
            e.pos.copy_from_slice(&p[off..off + dim]);
            e.neg.copy_from_slice(&p[off + dim..off + 2 * dim]);
        }
        probe.tau = p[p.len() - 1];
        prompt_loss(&probe).map_or(f64::NAN, |o| o.loss)
    };
    Ok((config, params, grad, Box::new(loss)))
}

fn localization_trial(rng: &mut Rng) -> Result<Trial> {
    let d = rng.random_range(1..=40);
    let dim = rng.random_range(2..=8);
    let d_star = rng.random_range(1..=d);
    let tau = rng.random_range(0.05..1.0);
    let depth = EmbeddingMatrix::from_rows(&unit_rows(d, dim, rng))?;
    let snippet = random_unit(dim, rng);
    let grid = DepthGrid::new(d, 12.0, 0.0)?;
    let target = gaussian_soft_target(&grid, d_star, 2.0)?;
    let out = localization_loss(&depth, &snippet, &target, tau)?;
    let mut params = depth.as_slice().to_vec();
    params.extend_from_slice(&snippet);
    let mut grad = out.grad_depth.into_vec();
    grad.extend(out.grad_snippet);
    let loss = move |p: &[f64]| {
        let depth = EmbeddingMatrix::new(d, dim, p[..d * dim].to_vec()).expect("shape");
        localization_loss(&depth, &p[d * dim..], &target, tau).map_or(f64::NAN, |o| o.loss)
    };
    Ok((format!("D={d} dim={dim} d*={d_star} tau={tau:.3}"), params, grad, Box::new(loss)))
}

/// Linear readout of the normalized head output, differentiated through the
/// normalization and the affine map.
fn head_trial(rng: &mut Rng) -> Result<Trial> {
    let n = rng.random_range(1..=5);
    let in_dim = rng.random_range(2..=10);
    let out_dim = rng.random_range(2..=6);
    let mut head = ProjectionHead::random(in_dim, out_dim, rng);
    head.bias = (0..out_dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    let x = EmbeddingMatrix::from_rows(&unit_rows(n, in_dim, rng))?;
    let c = EmbeddingMatrix::from_rows(&unit_rows(n, out_dim, rng))?;
    let unit = head.forward_unit(&x)?;
    let grads = head.backward(&x, &unit.backward(&c))?;
    let mut params = head.weight.clone();
    params.extend_from_slice(&head.bias);
    params.extend_from_slice(x.as_slice());
    let mut grad = grads.weight;
    grad.extend(grads.bias);
    grad.extend(grads.input.into_vec());
    let loss = move |p: &[f64]| {
        let nw = in_dim * out_dim;
        let h = ProjectionHead {
            in_dim,
            out_dim,
            weight: p[..nw].to_vec(),
            bias: p[nw..nw + out_dim].to_vec(),
        };
        let x = EmbeddingMatrix::new(n, in_dim, p[nw + out_dim..].to_vec()).expect("shape");
        h.forward_unit(&x)
            .map_or(f64::NAN, |u| u.unit.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum())
    };
    Ok((format!("n={n} in={in_dim} out={out_dim}"), params, grad, Box::new(loss)))
}

/// `trials` random configurations of each function, each from its own
/// `(seed, function, trial)` stream.
pub fn gradient_fidelity(seed: u64, trials: usize, tamper: Option<GradientTamper>) -> Result<FidelityReport> {
    let mut out = Vec::with_capacity(trials * CheckedFunction::ALL.len());
    for function in CheckedFunction::ALL {
        for trial in 0..trials {
            let mut rng = indexed_rng(seed, &format!("gradcheck-{function}"), trial as u64);
            let (config, params, mut grad, loss) = match function {
                CheckedFunction::Siglip => siglip_trial(&mut rng)?,
                CheckedFunction::Prompt => prompt_trial(&mut rng)?,
                CheckedFunction::Localization => localization_trial(&mut rng)?,
                CheckedFunction::HeadBackward => head_trial(&mut rng)?,
            };
            if let Some(t) = tamper {
                t(function, &mut grad);
            }
            let max_rel_err = finite_difference_check(|p| loss(p), &params, &grad, FD_STEP)?;
            out.push(TrialResult {
                function,
                trial,
                config,
                max_rel_err,
            });
        }
    }
    Ok(FidelityReport {
        seed,
        tolerance: FD_TOLERANCE,
        trials: out,
    })
}
