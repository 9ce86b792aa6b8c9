//! Report-level text augmentations applied during contrastive training.
//!
//! Branches are tried in order and the first one that fires wins, so at most
//! one augmentation is applied per call:
//! organ-description replacement, then history removal, then findings drop.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::report::Report;
use crate::seed::Rng;

pub const AUGMENT_PROB: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Augmentation {
    OrganDescriptions,
    HistoryRemoved,
    FindingsDropped,
    Unchanged,
}

/// Returns the training text for `report` and which branch produced it.
pub fn augment_report(report: &Report, rng: &mut Rng) -> (String, Augmentation) {
    augment_report_with(report, rng, AUGMENT_PROB)
}

pub fn augment_report_with(report: &Report, rng: &mut Rng, prob: f64) -> (String, Augmentation) {
    // one draw per branch keeps the stream layout fixed regardless of which
    // substitute texts a report carries
    let draws: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    if draws[0] < prob {
        if let Some(t) = report.organ_descriptions.as_deref().filter(|t| !t.is_empty()) {
            return (t.to_string(), Augmentation::OrganDescriptions);
        }
    }
    if draws[1] < prob {
        if let Some(t) = report.no_history_text.as_deref().filter(|t| !t.is_empty()) {
            return (t.to_string(), Augmentation::HistoryRemoved);
        }
    }
    if draws[2] < prob {
        if let Some(t) = drop_findings(report) {
            return (t, Augmentation::FindingsDropped);
        }
    }
    (report.full_text.clone(), Augmentation::Unchanged)
}

/// `full_text` with the findings section (and a directly preceding
/// "Findings:" heading) cut out. `None` if the report has no locatable
/// findings section or nothing would remain.
pub fn drop_findings(report: &Report) -> Option<String> {
    let findings = report.section("findings")?.trim();
    if findings.is_empty() {
        return None;
    }
    let text = &report.full_text;
    let start = text.find(findings)?;
    let end = start + findings.len();

    let before = &text[..start];
    let trimmed = before.trim_end();
    let cut_start = trimmed
        .len()
        .checked_sub("findings:".len())
        .filter(|&p| trimmed.is_char_boundary(p) && trimmed[p..].eq_ignore_ascii_case("findings:"))
        .unwrap_or(start);

    let mut out = String::with_capacity(text.len());
    out.push_str(text[..cut_start].trim_end());
    let rest = text[end..].trim_start();
    if !out.is_empty() && !rest.is_empty() {
        out.push('\n');
    }
    out.push_str(rest);
    let out = out.trim().to_string();
    (!out.is_empty()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use std::collections::HashMap;

    fn report() -> Report {
        Report {
            report_id: "r".into(),
            patient_id: "p".into(),
            full_text: "Findings: Small hepatic cyst. Lungs clear.\nImpression: No acute disease.".into(),
            sections: vec![
                ("findings".into(), "Small hepatic cyst. Lungs clear.".into()),
                ("impression".into(), "No acute disease.".into()),
            ],
            organ_descriptions: Some("Liver: cyst. Lungs: clear.".into()),
            no_history_text: Some("Findings: Small hepatic cyst.".into()),
            series_geometries: vec![],
        }
    }

    #[test]
    fn forced_branches() {
        let r = report();
        let mut rng = rng_for(0, "aug");
        assert_eq!(
            augment_report_with(&r, &mut rng, 1.0),
            ("Liver: cyst. Lungs: clear.".into(), Augmentation::OrganDescriptions)
        );
        assert_eq!(augment_report_with(&r, &mut rng, 0.0), (r.full_text.clone(), Augmentation::Unchanged));
    }

    #[test]
    fn findings_drop_keeps_impression() {
        let out = drop_findings(&report()).unwrap();
        assert_eq!(out, "Impression: No acute disease.");
        assert!(!out.contains("hepatic"));
    }

    #[test]
    fn missing_substitutes_skip_branch() {
        let mut r = report();
        r.organ_descriptions = None;
        r.no_history_text = None;
        let mut rng = rng_for(0, "aug");
        let (_, which) = augment_report_with(&r, &mut rng, 1.0);
        assert_eq!(which, Augmentation::FindingsDropped);
        r.sections.clear();
        assert_eq!(augment_report_with(&r, &mut rng, 1.0).1, Augmentation::Unchanged);
    }

    #[test]
    fn branch_frequencies() {
        let r = report();
        let mut rng = rng_for(42, "aug-freq");
        let mut counts: HashMap<Augmentation, usize> = HashMap::new();
        let n = 10_000;
        for _ in 0..n {
            *counts.entry(augment_report(&r, &mut rng).1).or_default() += 1;
        }
        let freq = |a| counts.get(&a).copied().unwrap_or(0) as f64 / n as f64;
        assert!((freq(Augmentation::OrganDescriptions) - 0.2).abs() < 0.02);
        assert!((freq(Augmentation::HistoryRemoved) - 0.16).abs() < 0.02);
        assert!((freq(Augmentation::FindingsDropped) - 0.128).abs() < 0.02);
    }
}
