//! Slice-reference extraction and snippet cutting.
//!
//! A pattern file holds one pattern per line:
//!
//! ```text
//! # comment
//! <name> = <regex>
//! ```
//!
//! Each regex must define the named groups `series` and `image`, both
//! matching decimal integers. Blank lines and lines starting with `#` are
//! ignored. Patterns are tried together; at each position the leftmost match
//! wins, then the longest, then the earliest-listed pattern.

use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// English and German reference patterns.
pub const DEFAULT_PATTERNS: &str = r"# verbose: optional see/cf. + series N + separator + image M
verbose-en = (?i)(?:\b(?:see|cf\.)\s+)?\bseries\s*(?:no\.\s*)?(?P<series>\d+)\s*[,;/]?\s*(?:image|img\.?)\s*(?:no\.\s*)?(?P<image>\d+)
# German originals: siehe/vgl. + Serie N + Bild/Bild-Nr. M
verbose-de = (?i)(?:\b(?:siehe|vgl\.)\s+)?\bserie\s*(?P<series>\d+)\s*[,;/]?\s*(?:bild|img\.?)\s*(?:nr\.\s*)?(?P<image>\d+)
# compact: (S/I)
compact = \(\s*(?P<series>\d+)\s*/\s*(?P<image>\d+)\s*\)
";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceReference {
    pub series: u32,
    pub image: u32,
    /// Byte offsets `[start, end)` into the source text.
    pub char_span: (usize, usize),
    pub surface_form: String,
    /// Index of the pattern that produced the match.
    pub pattern: usize,
}

impl SliceReference {
    pub fn span(&self) -> Range<usize> {
        self.char_span.0..self.char_span.1
    }
}

#[derive(Clone, Debug)]
pub struct ReferencePattern {
    pub name: String,
    regex: Regex,
}

impl ReferencePattern {
    pub fn new(name: &str, pattern: &str) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidPattern {
            pattern: pattern.to_string(),
            reason,
        };
        let regex = Regex::new(pattern).map_err(|e| invalid(e.to_string()))?;
        for group in ["series", "image"] {
            if !regex.capture_names().flatten().any(|n| n == group) {
                return Err(invalid(format!("missing named group `{group}`")));
            }
        }
        Ok(Self {
            name: name.to_string(),
            regex,
        })
    }

    pub fn as_str(&self) -> &str {
        self.regex.as_str()
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceExtractor {
    patterns: Vec<ReferencePattern>,
}

impl Default for ReferenceExtractor {
    fn default() -> Self {
        Self::from_config(DEFAULT_PATTERNS).expect("built-in patterns are valid")
    }
}

impl ReferenceExtractor {
    pub fn new(patterns: Vec<ReferencePattern>) -> Self {
        Self { patterns }
    }

    /// Parse the line-oriented pattern config described in the module docs.
    pub fn from_config(config: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        for (lineno, line) in config.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, regex) = line.split_once('=').ok_or_else(|| Error::InvalidPattern {
                pattern: line.to_string(),
                reason: format!("line {}: expected `<name> = <regex>`", lineno + 1),
            })?;
            patterns.push(ReferencePattern::new(name.trim(), regex.trim())?);
        }
        if patterns.is_empty() {
            return Err(Error::InvalidPattern {
                pattern: String::new(),
                reason: "pattern config defines no patterns".into(),
            });
        }
        Ok(Self { patterns })
    }

    pub fn patterns(&self) -> &[ReferencePattern] {
        &self.patterns
    }

    /// Left-to-right, non-overlapping references in `text`.
    pub fn extract_references(&self, text: &str) -> Vec<SliceReference> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos <= text.len() {
            let mut best: Option<(usize, regex::Captures<'_>)> = None;
            for (pi, p) in self.patterns.iter().enumerate() {
                let Some(caps) = p.regex.captures_at(text, pos) else {
                    continue;
                };
                let m = caps.get(0).expect("group 0");
                let better = match &best {
                    None => true,
                    Some((_, b)) => {
                        let bm = b.get(0).expect("group 0");
                        m.start() < bm.start() || (m.start() == bm.start() && m.end() > bm.end())
                    }
                };
                if better {
                    best = Some((pi, caps));
                }
            }
            let Some((pi, caps)) = best else { break };
            let m = caps.get(0).expect("group 0");
            let number = |g: &str| caps.name(g).and_then(|v| v.as_str().parse::<u32>().ok());
            if let (Some(series), Some(image)) = (number("series"), number("image")) {
                if series > 0 && image > 0 {
                    out.push(SliceReference {
                        series,
                        image,
                        char_span: (m.start(), m.end()),
                        surface_form: m.as_str().to_string(),
                        pattern: pi,
                    });
                }
            }
            pos = if m.end() > m.start() {
                m.end()
            } else {
                next_char_boundary(text, m.end())
            };
        }
        out
    }

    /// The sentence holding `reference`, with reference text and emptied
    /// brackets removed. Falls back to the nearest earlier (then later)
    /// sentence if nothing is left.
    pub fn snippet_for(&self, text: &str, reference: &SliceReference) -> Result<String> {
        let span = reference.span();
        if span.end > text.len() || span.start >= span.end || !text.is_char_boundary(span.start) {
            return Err(Error::NoSentenceFound);
        }
        let refs = self.extract_references(text);
        let mut protected: Vec<Range<usize>> = refs.iter().map(|r| r.span()).collect();
        protected.push(span.clone());
        let sentences = sentence_spans(text, &protected);
        let Some(home) = sentences
            .iter()
            .position(|s| s.start <= span.start && span.start < s.end.max(s.start + 1))
        else {
            return Err(Error::NoSentenceFound);
        };
        let order = std::iter::once(home)
            .chain((0..home).rev())
            .chain(home + 1..sentences.len());
        for idx in order {
            let cleaned = self.clean_sentence(&text[sentences[idx].clone()]);
            if !cleaned.is_empty() {
                return Ok(cleaned);
            }
        }
        Err(Error::NoSentenceFound)
    }

    fn clean_sentence(&self, sentence: &str) -> String {
        let mut s = sentence.to_string();
        loop {
            let refs = self.extract_references(&s);
            if refs.is_empty() {
                break;
            }
            for r in refs.iter().rev() {
                s.replace_range(r.span(), " ");
            }
        }
        loop {
            let next = EMPTY_BRACKETS.replace_all(&s, " ").into_owned();
            if next == s {
                break;
            }
            s = next;
        }
        let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
        let collapsed = collapsed.replace(" ,", ",").replace(" ;", ";");
        collapsed
            .trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | ':' | '-' | '.'))
            .to_string()
    }
}

fn next_char_boundary(text: &str, mut i: usize) -> usize {
    i += 1;
    while i < text.len() && !text.is_char_boundary(i) {
        i += 1;
    }
    i
}

static EMPTY_BRACKETS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*[,;]?\s*\)|\[\s*[,;]?\s*\]").expect("static regex"));

const ABBREVIATIONS: &[&str] = &["cf", "dr", "prof", "no", "nr", "vgl", "ca", "approx", "e", "e.g", "i", "i.e", "z", "z.b", "img"];

/// Trimmed, non-empty sentence byte ranges. Terminators are `.`, `;`, `:`
/// and newline; a terminator does not split inside a protected range, inside
/// a decimal number, or after a listed abbreviation.
pub fn sentence_spans(text: &str, protected: &[Range<usize>]) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let push = |spans: &mut Vec<Range<usize>>, a: usize, b: usize| {
        let raw = &text[a..b];
        let lead = raw.len() - raw.trim_start().len();
        let trail = raw.len() - raw.trim_end().len();
        if a + lead < b - trail {
            spans.push(a + lead..b - trail);
        }
    };
    for (i, ch) in text.char_indices() {
        if !matches!(ch, '.' | ';' | ':' | '\n') {
            continue;
        }
        if protected.iter().any(|r| r.start <= i && i < r.end) {
            continue;
        }
        if ch == '.' {
            let prev_digit = i > 0 && bytes[i - 1].is_ascii_digit();
            let next_digit = i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit();
            if prev_digit && next_digit {
                continue;
            }
            let word_start = text[..i]
                .rfind(|c: char| c.is_whitespace() || c == '(')
                .map(|p| p + 1)
                .unwrap_or(0);
            let word = text[word_start..i].to_ascii_lowercase();
            if ABBREVIATIONS.contains(&word.as_str()) {
                continue;
            }
        }
        push(&mut spans, start, i);
        start = i + ch.len_utf8();
    }
    push(&mut spans, start, text.len());
    spans
}
