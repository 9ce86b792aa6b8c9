use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::objectives::alpha_weight;

/// Finding labels of one volume. Findings missing from `labels` are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingLabelRecord {
    pub volume_id: String,
    #[serde(with = "binary_map")]
    pub labels: BTreeMap<String, bool>,
}

impl FindingLabelRecord {
    pub fn label(&self, finding: &str) -> Option<bool> {
        self.labels.get(finding).copied()
    }

    pub fn validate(&self, vocabulary: &BTreeSet<String>) -> Result<()> {
        match self.labels.keys().find(|k| !vocabulary.contains(*k)) {
            Some(k) => Err(Error::UnknownFinding(k.clone())),
            None => Ok(()),
        }
    }
}

mod binary_map {
    use super::*;
    use serde::de::Error as _;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, bool>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let ints: BTreeMap<&str, u8> = m.iter().map(|(k, v)| (k.as_str(), u8::from(*v))).collect();
        ints.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<String, bool>, D::Error> {
        BTreeMap::<String, u8>::deserialize(d)?
            .into_iter()
            .map(|(k, v)| match v {
                0 => Ok((k, false)),
                1 => Ok((k, true)),
                other => Err(D::Error::custom(format!("label for `{k}` must be 0 or 1, got {other}"))),
            })
            .collect()
    }
}

/// Dataset-level counts for one finding, plus its loss weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FindingStats {
    pub n_pos: u64,
    pub n_neg: u64,
    pub weight: f64,
}

impl FindingStats {
    pub fn alpha(&self) -> Option<f64> {
        alpha_weight(self.n_pos, self.n_neg)
    }
}

/// Count positives and negatives per finding over `records`; every finding in
/// `vocabulary` gets an entry with weight `default_weight`.
pub fn finding_stats<'a>(
    records: impl IntoIterator<Item = &'a FindingLabelRecord>,
    vocabulary: &[String],
    default_weight: f64,
) -> Result<BTreeMap<String, FindingStats>> {
    let mut stats: BTreeMap<String, FindingStats> = vocabulary
        .iter()
        .map(|f| {
            (
                f.clone(),
                FindingStats {
                    n_pos: 0,
                    n_neg: 0,
                    weight: default_weight,
                },
            )
        })
        .collect();
    for r in records {
        for (f, &y) in &r.labels {
            let s = stats.get_mut(f).ok_or_else(|| Error::UnknownFinding(f.clone()))?;
            if y {
                s.n_pos += 1;
            } else {
                s.n_neg += 1;
            }
        }
    }
    Ok(stats)
}

/// Target classes, each defined as the union of its source findings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassMapping {
    pub classes: Vec<TargetClass>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetClass {
    pub name: String,
    pub sources: Vec<String>,
}

impl ClassMapping {
    pub fn validate(&self) -> Result<()> {
        match self.classes.iter().find(|c| c.sources.is_empty()) {
            Some(c) => Err(Error::UnmappedClass(c.name.clone())),
            None => Ok(()),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.classes.iter().map(|c| c.name.as_str())
    }
}

/// Class is positive if any source is positive, negative if at least one
/// source is labelled and none positive, and absent otherwise.
pub fn map_labels(record: &FindingLabelRecord, mapping: &ClassMapping) -> Result<Vec<Option<bool>>> {
    mapping.validate()?;
    Ok(mapping
        .classes
        .iter()
        .map(|c| {
            c.sources
                .iter()
                .filter_map(|s| record.label(s))
                .fold(None, |acc: Option<bool>, y| Some(acc.unwrap_or(false) || y))
        })
        .collect())
}
