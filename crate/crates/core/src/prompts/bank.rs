use std::collections::{BTreeSet, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

pub const VARIANTS: usize = 3;
pub const PLACEHOLDER: &str = "{a}";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

/// Three positive and three negative templates, each with a single `{a}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantTemplates {
    pub positives: [String; VARIANTS],
    pub negatives: [String; VARIANTS],
}

impl Default for VariantTemplates {
    fn default() -> Self {
        Self {
            positives: [
                "{a} is present.".into(),
                "There is {a}.".into(),
                "Evidence of {a} is seen.".into(),
            ],
            negatives: [
                "No {a} is identified.".into(),
                "There is no {a}.".into(),
                "No evidence of {a} is seen.".into(),
            ],
        }
    }
}

/// Substitute `finding` into a template and upper-case the first letter.
pub fn render_template(finding: &str, template: &str) -> Result<String> {
    if template.matches(PLACEHOLDER).count() != 1 {
        return Err(Error::MissingPlaceholder(template.to_string()));
    }
    let filled = template.replacen(PLACEHOLDER, finding.trim(), 1);
    let trimmed = filled.trim();
    let mut chars = trimmed.chars();
    Ok(match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    })
}

/// Prompt variants for one finding, optionally with cached unit embeddings
/// (same order as the texts).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindingPrompts {
    pub finding: String,
    pub positives: Vec<String>,
    pub negatives: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_embeddings: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_embeddings: Option<Vec<Vec<f64>>>,
}

impl FindingPrompts {
    pub fn new(finding: &str, positives: Vec<String>, negatives: Vec<String>) -> Result<Self> {
        let p = Self {
            finding: finding.to_string(),
            positives,
            negatives,
            positive_embeddings: None,
            negative_embeddings: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn variants(&self, polarity: Polarity) -> &[String] {
        match polarity {
            Polarity::Positive => &self.positives,
            Polarity::Negative => &self.negatives,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Format(format!("finding `{}`: {msg}", self.finding)));
        if self.finding.trim().is_empty() {
            return Err(Error::Format("empty finding name".into()));
        }
        if self.positives.len() != VARIANTS || self.negatives.len() != VARIANTS {
            return bad(format!(
                "need {VARIANTS} positive and {VARIANTS} negative variants, got {} and {}",
                self.positives.len(),
                self.negatives.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for v in self.positives.iter().chain(&self.negatives) {
            if v.trim().is_empty() {
                return bad("empty variant".into());
            }
            if !seen.insert(v.as_str()) {
                return bad(format!("duplicate variant `{v}`"));
            }
        }
        for embs in [&self.positive_embeddings, &self.negative_embeddings].into_iter().flatten() {
            if embs.len() != VARIANTS {
                return bad(format!("{} cached embeddings, expected {VARIANTS}", embs.len()));
            }
            if embs.iter().any(|e| e.len() != embs[0].len()) {
                return bad("cached embeddings differ in dimension".into());
            }
        }
        Ok(())
    }
}

pub fn render_prompts(finding: &str, templates: &VariantTemplates) -> Result<FindingPrompts> {
    let render = |ts: &[String; VARIANTS]| ts.iter().map(|t| render_template(finding, t)).collect::<Result<Vec<_>>>();
    FindingPrompts::new(finding, render(&templates.positives)?, render(&templates.negatives)?)
}

/// Findings in insertion order with name lookup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PromptBank {
    entries: Vec<FindingPrompts>,
    index: HashMap<String, usize>,
}

impl PromptBank {
    pub fn new(entries: Vec<FindingPrompts>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            e.validate()?;
            if index.insert(e.finding.clone(), i).is_some() {
                return Err(Error::Format(format!("finding `{}` listed twice", e.finding)));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn from_findings<S: AsRef<str>>(findings: &[S], templates: &VariantTemplates) -> Result<Self> {
        Self::new(
            findings
                .iter()
                .map(|f| render_prompts(f.as_ref(), templates))
                .collect::<Result<_>>()?,
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[FindingPrompts] {
        &self.entries
    }

    pub fn position(&self, finding: &str) -> Option<usize> {
        self.index.get(finding).copied()
    }

    pub fn get(&self, finding: &str) -> Result<&FindingPrompts> {
        self.position(finding)
            .map(|i| &self.entries[i])
            .ok_or_else(|| Error::UnknownFinding(finding.to_string()))
    }

    pub fn findings(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.finding.as_str())
    }
}

/// Uniform index into the three variants of one polarity.
pub fn sample_variant_index(rng: &mut Rng) -> usize {
    rng.random_range(0..VARIANTS)
}

pub fn sample_variant<'a>(bank: &'a PromptBank, finding: &str, polarity: Polarity, rng: &mut Rng) -> Result<&'a str> {
    let entry = bank.get(finding)?;
    Ok(&entry.variants(polarity)[sample_variant_index(rng)])
}
