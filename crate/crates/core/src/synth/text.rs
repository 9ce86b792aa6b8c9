//! Report text for synthetic studies. Sentences are assembled from small
//! phrase pools; slice references use the surface forms the miner accepts.

use rand::seq::IndexedRandom;
use rand::Rng as _;

use crate::seed::Rng;

const FINDING_NAMES: &[&str] = &[
    "pleural effusion",
    "emphysema",
    "atelectasis",
    "lung nodule",
    "consolidation",
    "cardiomegaly",
    "pericardial effusion",
    "hiatal hernia",
    "lymphadenopathy",
    "bronchiectasis",
    "arterial wall calcification",
    "hepatic steatosis",
    "renal cyst",
    "splenomegaly",
    "gallstones",
    "ascites",
    "mosaic attenuation",
    "interlobular septal thickening",
    "peribronchial thickening",
    "adrenal nodule",
    "diverticulosis",
    "vertebral compression fracture",
    "aortic aneurysm",
    "pulmonary fibrosis",
];

/// Vocabulary of `n` distinct finding names.
pub fn finding_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| match FINDING_NAMES.get(i) {
            Some(name) => name.to_string(),
            None => format!("finding {}", i + 1),
        })
        .collect()
}

const LESIONS: &[&str] = &[
    "hypodense hepatic lesion",
    "small pulmonary nodule",
    "simple renal cyst",
    "enlarged mediastinal lymph node",
    "calcified granuloma",
    "sclerotic bone island",
    "subpleural opacity",
    "adrenal thickening",
    "focal splenic lesion",
    "ground-glass opacity",
];

const ORGANS: &[&str] = &["Lungs", "Liver", "Kidneys", "Spleen", "Bones", "Mediastinum"];

const HISTORIES: &[&str] = &[
    "Follow-up of known malignancy.",
    "Cough and fever for two weeks.",
    "Staging examination.",
    "Abdominal pain.",
    "Dyspnea on exertion.",
];

pub(crate) struct PlantedReference {
    pub series: u32,
    pub image: u32,
}

fn reference_text(r: &PlantedReference, rng: &mut Rng) -> String {
    match rng.random_range(0..4) {
        0 => format!("see series {}, image {}", r.series, r.image),
        1 => format!("series {}, image {}", r.series, r.image),
        2 => format!("cf. series {} / img {}", r.series, r.image),
        _ => format!("({}/{})", r.series, r.image),
    }
}

fn sentence_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub(crate) struct ReportText {
    pub full_text: String,
    pub findings: String,
    pub impression: String,
    pub organ_descriptions: String,
    pub no_history_text: String,
}

/// One sentence per planted reference, plus sentences naming the positive
/// findings.
pub(crate) fn render_report(positives: &[&str], references: &[PlantedReference], rng: &mut Rng) -> ReportText {
    let mut sentences = Vec::new();
    for r in references {
        let lesion = LESIONS.choose(rng).expect("non-empty pool");
        let size = rng.random_range(3..=25);
        let reference = reference_text(r, rng);
        let sentence = if reference.starts_with('(') {
            format!("{} measuring {size} mm {reference}.", sentence_case(lesion))
        } else {
            format!("{} measuring {size} mm, {reference}.", sentence_case(lesion))
        };
        sentences.push(sentence);
    }
    for f in positives {
        sentences.push(format!("{} is present.", sentence_case(f)));
    }
    if positives.is_empty() {
        sentences.push("No acute abnormality.".to_string());
    }
    let findings = sentences.join(" ");
    let impression = if positives.is_empty() {
        "No acute findings.".to_string()
    } else {
        format!("{}.", sentence_case(&positives.join(", ")))
    };
    let history = HISTORIES.choose(rng).expect("non-empty pool");
    let body = format!("Findings: {findings}\nImpression: {impression}");
    let organ_descriptions = ORGANS
        .iter()
        .map(|o| format!("{o}: unremarkable."))
        .collect::<Vec<_>>()
        .join(" ");
    ReportText {
        full_text: format!("History: {history}\n{body}"),
        findings,
        impression,
        organ_descriptions,
        no_history_text: body,
    }
}
