//! Prompt variants per finding, label bookkeeping and zero-shot scoring.

mod bank;
mod labels;

use serde::{Deserialize, Serialize};

pub use bank::{
    render_prompts, render_template, sample_variant, sample_variant_index, FindingPrompts, Polarity, PromptBank,
    VariantTemplates, PLACEHOLDER, VARIANTS,
};
pub use labels::{finding_stats, map_labels, ClassMapping, FindingLabelRecord, FindingStats, TargetClass};

use crate::error::{Error, Result};
use crate::numeric::{dot, l2_normalize};
use crate::objectives::sigmoid;

/// Mean of the variant embeddings, re-normalized.
pub fn averaged_prompt_embedding<V: AsRef<[f64]>>(variants: &[V]) -> Result<Vec<f64>> {
    let Some(first) = variants.first() else {
        return Err(Error::EmptyBatch);
    };
    let dim = first.as_ref().len();
    let mut mean = vec![0.0; dim];
    for v in variants {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "prompt variants",
                expected: dim,
                actual: v.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = variants.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    l2_normalize(&mean)
}

/// Two-way softmax probability of the positive prompt.
pub fn classify_finding(z: &[f64], pos: &[f64], neg: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTau(tau));
    }
    for v in [pos, neg] {
        if v.len() != z.len() {
            return Err(Error::DimensionMismatch {
                context: "classify_finding",
                expected: z.len(),
                actual: v.len(),
            });
        }
    }
    Ok(sigmoid((dot(z, pos) - dot(z, neg)) / tau))
}

/// One positive/negative rendering pair used at inference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceTemplate {
    pub positive: String,
    pub negative: String,
}

/// Seven default inference template pairs. Only the first is a standard
/// wording; the others are stand-ins meant to be overridden in config.
pub fn default_inference_templates() -> Vec<InferenceTemplate> {
    [
        ("{a} is present.", "{a} is not present."),
        ("There is {a}.", "There is no {a}."),
        ("{a} is seen.", "No {a} is seen."),
        ("Findings consistent with {a}.", "No findings consistent with {a}."),
        ("{a} is observed.", "{a} is not observed."),
        ("The scan shows {a}.", "The scan shows no {a}."),
        ("Evidence of {a}.", "No evidence of {a}."),
    ]
    .iter()
    .map(|(p, n)| InferenceTemplate {
        positive: p.to_string(),
        negative: n.to_string(),
    })
    .collect()
}

/// Average of per-template probabilities; `pairs` holds the (positive,
/// negative) unit embeddings of each template.
pub fn classify_with_templates<V: AsRef<[f64]>>(z: &[f64], pairs: &[(V, V)], tau: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = 0.0;
    for (p, n) in pairs {
        sum += classify_finding(z, p.as_ref(), n.as_ref(), tau)?;
    }
    Ok(sum / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averaging() {
        let v = vec![0.6, 0.8];
        let m = averaged_prompt_embedding(&[&v, &v, &v]).unwrap();
        assert!((m[0] - 0.6).abs() < 1e-15 && (m[1] - 0.8).abs() < 1e-15);
        let e = averaged_prompt_embedding(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((e[0] - 2.0 / 5f64.sqrt()).abs() < 1e-12 && (e[1] - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert!((e[0] - 0.8944).abs() < 1e-4 && (e[1] - 0.4472).abs() < 1e-4);
        let cancel = averaged_prompt_embedding(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(cancel, Err(Error::ZeroVector { .. })));

        let a = [0.6, 0.8, 0.0];
        let b = [0.0, 0.6, 0.8];
        let c = [1.0, 0.0, 0.0];
        let x = averaged_prompt_embedding(&[a, b, c]).unwrap();
        let y = averaged_prompt_embedding(&[c, a, b]).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn classification() {
        let z = [1.0, 0.0];
        let p = [0.6, 0.8];
        assert!((classify_finding(&z, &p, &p, 0.1).unwrap() - 0.5).abs() < 1e-15);

        let tau = 0.07;
        let gap = tau * 9f64.ln();
        let theta = 0.3f64;
        let pos = [theta.cos(), theta.sin()];
        let neg_cos = theta.cos() - gap;
        let neg = [neg_cos, (1.0 - neg_cos * neg_cos).sqrt()];
        assert!((classify_finding(&z, &pos, &neg, tau).unwrap() - 0.9).abs() < 1e-12);

        let q = classify_finding(&z, &z, &[0.0, 1.0], 0.1).unwrap();
        let expect = 1.0 / (1.0 + (-10f64).exp());
        assert!((q - expect).abs() < 1e-15 && (q - 0.99995).abs() < 1e-5);

        assert!(matches!(classify_finding(&z, &z, &z, 0.0), Err(Error::NonPositiveTau(_))));
        assert!(matches!(classify_finding(&z, &z, &z, -1.0), Err(Error::NonPositiveTau(_))));
    }

    #[test]
    fn complement_and_shift_invariance() {
        let z = [0.3, -0.2, 0.9];
        let pos = [0.5, 0.5, 0.1];
        let neg = [-0.4, 0.2, 0.3];
        for tau in [0.01, 0.1, 1.0] {
            let a = classify_finding(&z, &pos, &neg, tau).unwrap();
            let b = classify_finding(&z, &neg, &pos, tau).unwrap();
            assert!((a + b - 1.0).abs() < 1e-12);
        }
        // adding a multiple of z to both prompts raises both similarities equally
        let zz = dot(&z, &z);
        let shift = |v: &[f64]| v.iter().zip(&z).map(|(a, b)| a + 0.7 * b / zz).collect::<Vec<_>>();
        let a = classify_finding(&z, &pos, &neg, 0.2).unwrap();
        let b = classify_finding(&z, &shift(&pos), &shift(&neg), 0.2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn template_average() {
        let templates = default_inference_templates();
        assert_eq!(templates.len(), 7);
        for t in &templates {
            render_template("x", &t.positive).unwrap();
            render_template("x", &t.negative).unwrap();
        }
        let z = [1.0, 0.0];
        let pairs = vec![(vec![1.0, 0.0], vec![0.0, 1.0]), (vec![0.0, 1.0], vec![1.0, 0.0])];
        assert!((classify_with_templates(&z, &pairs, 0.1).unwrap() - 0.5).abs() < 1e-12);
    }
}
