//! Mining slice references ("series 4, image 38", "(3/72)") from report text
//! and turning them into snippet–depth pairs.

mod augment;
mod quality;
mod references;
mod report;
mod scrub;

use serde::{Deserialize, Serialize};

pub use augment::{augment_report, augment_report_with, drop_findings, Augmentation, AUGMENT_PROB};
pub use quality::{evaluate_mining, mining_counts, scores_from_counts, MiningScores, ReferenceSets};
pub use references::{sentence_spans, ReferenceExtractor, ReferencePattern, SliceReference, DEFAULT_PATTERNS};
pub use report::{mm_to_depth_index, reference_to_mm, Report, SeriesGeometry};
pub use scrub::{default_scrub_rules, scrub_identifiers, ScrubRule};

use crate::error::{Error, Result};
use crate::objectives::DEFAULT_PITCH_MM;

/// One mined snippet, serialized as a line of the snippets JSON Lines file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub report_id: String,
    pub series: u32,
    pub image: u32,
    pub snippet: String,
    pub axial_mm: f64,
    pub depth_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MiningStats {
    pub reports: usize,
    pub references: usize,
    pub snippets: usize,
    /// Matches per pattern name, in pattern order.
    pub per_pattern: Vec<(String, usize)>,
    pub unknown_series: usize,
    pub out_of_range: usize,
    pub no_sentence: usize,
}

impl MiningStats {
    pub fn for_extractor(extractor: &ReferenceExtractor) -> Self {
        Self {
            per_pattern: extractor.patterns().iter().map(|p| (p.name.clone(), 0)).collect(),
            ..Default::default()
        }
    }
}

/// Extract, cut and position every reference in a report. References whose
/// series has no geometry or whose image lies outside the series are counted
/// in `stats` and skipped.
pub fn mine_report(
    report: &Report,
    extractor: &ReferenceExtractor,
    pitch_mm: f64,
    stats: &mut MiningStats,
) -> Result<Vec<Snippet>> {
    stats.reports += 1;
    let refs = extractor.extract_references(&report.full_text);
    let mut out = Vec::new();
    for r in refs {
        stats.references += 1;
        if let Some(slot) = stats.per_pattern.get_mut(r.pattern) {
            slot.1 += 1;
        }
        let Some(geom) = report.geometry(r.series) else {
            stats.unknown_series += 1;
            continue;
        };
        let axial_mm = match reference_to_mm(&r, geom) {
            Ok(mm) => mm,
            Err(Error::ImageOutOfRange { .. }) => {
                stats.out_of_range += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let grid = geom.depth_grid(pitch_mm)?;
        let depth_index = match mm_to_depth_index(axial_mm, &grid) {
            Ok(d) => d,
            Err(Error::OutOfVolume { .. }) => {
                stats.out_of_range += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let text = match extractor.snippet_for(&report.full_text, &r) {
            Ok(t) => t,
            Err(Error::NoSentenceFound) => {
                stats.no_sentence += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(Snippet {
            report_id: report.report_id.clone(),
            series: r.series,
            image: r.image,
            snippet: text,
            axial_mm,
            depth_index,
        });
    }
    stats.snippets += out.len();
    Ok(out)
}

pub fn mine_reports(reports: &[Report], extractor: &ReferenceExtractor) -> Result<(Vec<Snippet>, MiningStats)> {
    let mut stats = MiningStats::for_extractor(extractor);
    let mut all = Vec::new();
    for r in reports {
        all.extend(mine_report(r, extractor, DEFAULT_PITCH_MM, &mut stats)?);
    }
    Ok((all, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mines_example_sentence() {
        let report = Report {
            report_id: "r1".into(),
            patient_id: "p1".into(),
            full_text: "Findings: hepatic lesion, see series 4, image 38. Spleen normal (2/5).".into(),
            sections: vec![],
            organ_descriptions: None,
            no_history_text: None,
            series_geometries: vec![SeriesGeometry {
                series: 4,
                num_slices: 120,
                slice_thickness_mm: 3.0,
                first_slice_offset_mm: 0.0,
                axial_length_mm: 360.0,
            }],
        };
        let ex = ReferenceExtractor::default();
        let (snips, stats) = mine_reports(&[report], &ex).unwrap();
        assert_eq!(snips.len(), 1);
        let s = &snips[0];
        assert_eq!((s.series, s.image), (4, 38));
        assert_eq!(s.snippet, "hepatic lesion");
        assert_eq!(s.axial_mm, 112.5);
        assert_eq!(s.depth_index, 10);
        assert_eq!(stats.references, 2);
        assert_eq!(stats.unknown_series, 1);
        assert_eq!(stats.per_pattern[0], ("verbose-en".to_string(), 1));
        assert_eq!(stats.per_pattern[2], ("compact".to_string(), 1));
    }
}
