use regex::Regex;

use crate::error::{Error, Result};

/// One identifier-scrubbing rule.
#[derive(Clone, Debug)]
pub struct ScrubRule {
    pattern: Regex,
    replacement: String,
}

impl ScrubRule {
    pub fn new(pattern: &str, replacement: &str) -> Result<Self> {
        let regex = Regex::new(pattern).map_err(|e| Error::InvalidPattern {
            pattern: pattern.to_string(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            pattern: regex,
            replacement: replacement.to_string(),
        })
    }
}

/// Rules for synthetic text: physician titles with a surname, labelled
/// patient names, and long numeric record ids. Not fit for real PHI.
pub fn default_scrub_rules() -> Vec<ScrubRule> {
    [
        (r"\b(?:Dr|Prof)\.?\s+[A-Z][a-zA-Z\-]+", "[PHYSICIAN]"),
        (r"(?i)\b(?:patient|name)\s*:\s*[A-Z][a-zA-Z\-]+(?:\s+[A-Z][a-zA-Z\-]+)?", "[PATIENT]"),
        (r"\b\d{7,}\b", "[ID]"),
    ]
    .iter()
    .map(|(p, r)| ScrubRule::new(p, r).expect("built-in rule"))
    .collect()
}

/// Apply every rule once, in order, replacing all matches. Replacements are
/// inserted literally (no `$group` expansion).
pub fn scrub_identifiers(text: &str, rules: &[ScrubRule]) -> String {
    rules.iter().fold(text.to_string(), |acc, rule| {
        rule.pattern
            .replace_all(&acc, regex::NoExpand(&rule.replacement))
            .into_owned()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let rules = default_scrub_rules();
        assert_eq!(scrub_identifiers("No focal lesion.", &rules), "No focal lesion.");
        assert_eq!(scrub_identifiers("Dr. Smith", &rules), "[PHYSICIAN]");
        let t = "Name: John Doe, MRN 12345678. Reviewed by Prof. Meier; see series 4, image 38.";
        let once = scrub_identifiers(t, &rules);
        assert_eq!(once, "[PATIENT], MRN [ID]. Reviewed by [PHYSICIAN]; see series 4, image 38.");
        assert_eq!(scrub_identifiers(&once, &rules), once);
    }

    #[test]
    fn invalid_rule() {
        assert!(matches!(ScrubRule::new("(", "x"), Err(Error::InvalidPattern { .. })));
    }
}
