//! Extraction of (item, choice, rationale) triples from free-text quiz answers.
//!
//! A response is split into blocks at question markers that start a line
//! (`**Question 12**:`, `Question 12:`, `12.`). Within a block the choice is
//! taken from, in order of preference:
//!
//! 1. a digit with a matching legend label, `a 4 (Moderately Accurate)`;
//! 2. a bare digit opening the block, `Question 12: 4`;
//! 3. a legend label on its own, `Question 12: Very Accurate`;
//! 4. a digit after a choice word, `a 4 seems right`.
//!
//! Blocks without any of these, blocks whose digit contradicts its label, and
//! blocks for items outside the chunk are counted as unparsed fragments.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::{Regex, RegexBuilder};

use super::{likert_label, AnswerSheet, ItemChunk, ParseReport, LIKERT_LABELS};

const LABEL_ALTERNATION: &str = r"very\s+inaccurate|moderately\s+inaccurate|neither\s+accurate\s+nor\s+inaccurate|neither\s+inaccurate\s+nor\s+accurate|moderately\s+accurate|very\s+accurate";

fn build(pattern: &str) -> Regex {
    RegexBuilder::new(pattern)
        .case_insensitive(true)
        .multi_line(true)
        .build()
        .expect("static regex compiles")
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        build(
            r"^[ \t]*(?:[-*•+>][ \t]*)?(?:\*\*|__)?[ \t]*(?:(?:question|item|q)[ \t]*#?[ \t]*(\d{1,4})[ \t]*(?:\*\*|__)?[ \t]*[:.)\-–—]?|(\d{1,4})[ \t]*[.):][ \t])[ \t]*(?:\*\*|__)?",
        )
    })
}

fn labelled_digit_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        build(&format!(
            r"(?:\b(?:an?)\s+)?\b([1-5])\s*\(\s*({LABEL_ALTERNATION})\s*\)"
        ))
    })
}

fn leading_digit_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| build(r"\A[\s*_]*([1-5])(?:\s*/\s*5)?[\s*_]*(?:[.,;:\-–—]|\s|\z)"))
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| build(&format!(r"\b(?:{LABEL_ALTERNATION})\b")))
}

fn choice_word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        build(
            r"\b(?:an?|choose|chose|chosen|select|selected|pick|picked|answer|rating|rated|score|choice)\s*(?:is|of|:|=)?\s*([1-5])\b(?:\s*(?:[.,;!)]|$|is\b|seems\b|fits\b|would\b|because\b|as\b|since\b|given\b))",
        )
    })
}

fn label_value(label: &str) -> Option<u8> {
    let norm: String = label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_ascii_lowercase();
    if norm == "neither inaccurate nor accurate" {
        return Some(3);
    }
    LIKERT_LABELS
        .iter()
        .position(|l| l.to_ascii_lowercase() == norm)
        .map(|i| i as u8 + 1)
}

struct Marker {
    item_id: Option<u16>,
    bare_numeric: bool,
    start: usize,
    body_start: usize,
}

fn markers(text: &str) -> Vec<Marker> {
    marker_re()
        .captures_iter(text)
        .map(|caps| {
            let whole = caps.get(0).expect("match");
            let (num, bare) = match (caps.get(1), caps.get(2)) {
                (Some(m), _) => (m.as_str(), false),
                (None, Some(m)) => (m.as_str(), true),
                _ => unreachable!("one alternative always captures"),
            };
            Marker {
                item_id: num.parse().ok(),
                bare_numeric: bare,
                start: whole.start(),
                body_start: whole.end(),
            }
        })
        .collect()
}

#[derive(Debug, PartialEq)]
enum Extracted {
    Choice { value: u8, span: (usize, usize) },
    Contradiction,
    Nothing,
}

fn extract_choice(body: &str) -> Extracted {
    let mut contradiction = false;
    for caps in labelled_digit_re().captures_iter(body) {
        let digit: u8 = caps[1].parse().expect("single digit");
        if label_value(&caps[2]) == Some(digit) {
            let m = caps.get(0).expect("match");
            return Extracted::Choice { value: digit, span: (m.start(), m.end()) };
        }
        contradiction = true;
    }
    if contradiction {
        return Extracted::Contradiction;
    }
    if let Some(caps) = leading_digit_re().captures(body) {
        let m = caps.get(1).expect("digit group");
        return Extracted::Choice {
            value: caps[1].parse().expect("single digit"),
            span: (m.start(), m.end()),
        };
    }
    if let Some(m) = label_re().find(body) {
        if let Some(value) = label_value(m.as_str()) {
            return Extracted::Choice { value, span: (m.start(), m.end()) };
        }
    }
    if let Some(caps) = choice_word_re().captures(body) {
        let whole = caps.get(0).expect("match");
        let digit = caps.get(1).expect("digit group");
        return Extracted::Choice {
            value: caps[1].parse().expect("single digit"),
            span: (whole.start(), digit.end()),
        };
    }
    Extracted::Nothing
}

fn clean_rationale(before: &str, after: &str) -> Option<String> {
    let trim = |s: &str| -> String {
        s.trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | '.' | ';' | ':' | '*' | '_' | '-' | '–' | '—'))
            .to_string()
    };
    let joined = [trim(before), trim(after)]
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    let collapsed = joined.split_whitespace().collect::<Vec<_>>().join(" ");
    (!collapsed.is_empty()).then_some(collapsed)
}

/// A numbered list `1. Very Inaccurate` ... `5. Very Accurate` is the scale
/// legend echoed back, not five answers.
fn legend_echo(text: &str, marks: &[Marker], bodies: &[&str]) -> Vec<bool> {
    let mut skip = vec![false; marks.len()];
    let is_legend_line = |i: usize, n: u16| {
        marks[i].bare_numeric
            && marks[i].item_id == Some(n)
            && label_value(bodies[i].trim().trim_end_matches(['.', ',', ';'])) == Some(n as u8)
    };
    let _ = text;
    let mut i = 0;
    while i + 5 <= marks.len() {
        if (0..5).all(|k| is_legend_line(i + k, k as u16 + 1)) {
            skip[i..i + 5].iter_mut().for_each(|s| *s = true);
            i += 5;
        } else {
            i += 1;
        }
    }
    skip
}

/// Parse one chunk's response. The returned sheet has an empty `persona_id`.
pub fn parse_quiz_response(text: &str, chunk: &ItemChunk) -> (AnswerSheet, ParseReport) {
    let marks = markers(text);
    let bodies: Vec<&str> = marks
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let end = marks.get(i + 1).map_or(text.len(), |next| next.start);
            &text[m.body_start..end.max(m.body_start)]
        })
        .collect();
    let skip = legend_echo(text, &marks, &bodies);

    let mut answers: BTreeMap<u16, u8> = BTreeMap::new();
    let mut rationales: BTreeMap<u16, String> = BTreeMap::new();
    let mut conflicts: Vec<u16> = Vec::new();
    let mut unparsed = 0usize;

    for ((mark, body), skipped) in marks.iter().zip(&bodies).zip(skip) {
        if skipped {
            unparsed += 1;
            continue;
        }
        let Some(item_id) = mark.item_id.filter(|id| chunk.contains(*id)) else {
            unparsed += 1;
            continue;
        };
        match extract_choice(body) {
            Extracted::Choice { value, span } => {
                debug_assert!((1..=5).contains(&value));
                match answers.get(&item_id) {
                    Some(&existing) if existing != value => {
                        if !conflicts.contains(&item_id) {
                            conflicts.push(item_id);
                        }
                    }
                    Some(_) => {}
                    None => {
                        answers.insert(item_id, value);
                        if let Some(r) = clean_rationale(&body[..span.0], &body[span.1..]) {
                            rationales.insert(item_id, r);
                        }
                    }
                }
            }
            Extracted::Contradiction | Extracted::Nothing => unparsed += 1,
        }
    }

    conflicts.sort_unstable();
    let missing_ids: Vec<u16> = chunk
        .item_ids()
        .into_iter()
        .filter(|id| !answers.contains_key(id))
        .collect();
    let report = ParseReport {
        answered_count: answers.len(),
        missing_ids,
        conflict_ids: conflicts,
        unparsed_fragments: unparsed,
    };
    let sheet = AnswerSheet {
        persona_id: String::new(),
        answers,
        rationales,
        source_chunks: Vec::new(),
    };
    (sheet, report)
}

/// Render a sheet in the canonical `- **Question k**: rationale, a c (label).` form.
pub fn render_canonical(sheet: &AnswerSheet) -> String {
    let mut out = String::new();
    for (&item_id, &choice) in &sheet.answers {
        let label = likert_label(choice).unwrap_or("?");
        match sheet.rationales.get(&item_id) {
            Some(r) => out.push_str(&format!("- **Question {item_id}**: {r}, a {choice} ({label}).\n")),
            None => out.push_str(&format!("- **Question {item_id}**: a {choice} ({label}).\n")),
        }
    }
    out
}
