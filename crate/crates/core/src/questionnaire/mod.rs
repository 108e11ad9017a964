//! IPIP-NEO-120 administration: item bank, chunking, quiz prompts, parsing
//! free-text responses, and merging per-chunk answer sheets.

mod administer;
mod parse;
mod prompt;
mod sheet;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::traits::{Domain, FacetCode};

pub use administer::{administer_chunk, reask_chunk, reask_missing, QuizExchange, QuizKind, ReaskOutcome};
pub use parse::{parse_quiz_response, render_canonical};
pub use prompt::{build_quiz_prompt, likert_legend, RATIONALE_DIRECTIVE};
pub use sheet::{merge_answer_sheets, AnswerSheet, ParseReport};

#[derive(Debug, Error)]
pub enum QuestionnaireError {
    #[error("item bank invalid: {0}")]
    BankInvalid(String),
    #[error("answer sheets belong to different personas: `{0}` and `{1}`")]
    PersonaMismatch(String, String),
    #[error(transparent)]
    Template(#[from] crate::template::TemplateError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Keying {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Keying {
    pub fn sign(self) -> i8 {
        match self {
            Keying::Plus => 1,
            Keying::Minus => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertItem {
    pub item_id: u16,
    pub text: String,
    pub facet: FacetCode,
    pub keying: Keying,
}

/// The five response options, index 0 = choice 1.
pub const LIKERT_LABELS: [&str; 5] = [
    "Very Inaccurate",
    "Moderately Inaccurate",
    "Neither Accurate Nor Inaccurate",
    "Moderately Accurate",
    "Very Accurate",
];

pub fn likert_label(choice: u8) -> Option<&'static str> {
    LIKERT_LABELS.get(usize::from(choice).checked_sub(1)?).copied()
}

pub const BANK_SIZE: usize = 120;
pub const ITEMS_PER_FACET: usize = 4;

/// A validated 120-item bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemBank {
    items: Vec<LikertItem>,
    digest: String,
}

impl ItemBank {
    /// Parse the tab-separated bank format:
    /// `item_id <TAB> domain <TAB> facet <TAB> keying(+/-) <TAB> text`.
    /// Lines starting with `#` and blank lines are ignored.
    pub fn parse(text: &str) -> Result<ItemBank, QuestionnaireError> {
        let bad = |line: usize, msg: &str| QuestionnaireError::BankInvalid(format!("line {line}: {msg}"));
        let mut items = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let trimmed = line.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.splitn(5, '\t').collect();
            if fields.len() != 5 {
                return Err(bad(line_no, "expected 5 tab-separated fields"));
            }
            let item_id: u16 = fields[0].trim().parse().map_err(|_| bad(line_no, "bad item_id"))?;
            let domain = fields[1]
                .trim()
                .chars()
                .next()
                .and_then(Domain::from_code)
                .ok_or_else(|| bad(line_no, "bad domain"))?;
            let facet: FacetCode = fields[2].trim().parse().map_err(|e: String| bad(line_no, &e))?;
            if facet.domain != domain {
                return Err(bad(line_no, "facet does not belong to domain"));
            }
            let keying = match fields[3].trim() {
                "+" | "plus" | "+1" => Keying::Plus,
                "-" | "−" | "minus" | "-1" => Keying::Minus,
                "" => return Err(bad(line_no, "keying missing")),
                _ => return Err(bad(line_no, "bad keying")),
            };
            let text = fields[4].trim();
            if text.is_empty() {
                return Err(bad(line_no, "empty item text"));
            }
            items.push(LikertItem {
                item_id,
                text: text.to_string(),
                facet,
                keying,
            });
        }
        Self::from_items(items, sha256_hex(text.as_bytes()))
    }

    fn from_items(mut items: Vec<LikertItem>, digest: String) -> Result<ItemBank, QuestionnaireError> {
        if items.len() != BANK_SIZE {
            return Err(QuestionnaireError::BankInvalid(format!(
                "expected {BANK_SIZE} items, found {}",
                items.len()
            )));
        }
        items.sort_by_key(|i| i.item_id);
        for (expected, item) in (1..).zip(&items) {
            if item.item_id != expected {
                return Err(QuestionnaireError::BankInvalid(format!(
                    "item ids must be 1..={BANK_SIZE} without gaps or duplicates (found {} at position {expected})",
                    item.item_id
                )));
            }
        }
        for facet in FacetCode::all() {
            let count = items.iter().filter(|i| i.facet == facet).count();
            if count != ITEMS_PER_FACET {
                return Err(QuestionnaireError::BankInvalid(format!(
                    "facet {facet} has {count} items, expected {ITEMS_PER_FACET}"
                )));
            }
        }
        Ok(ItemBank { items, digest })
    }

    /// The bundled public-domain IPIP-NEO-120 bank.
    pub fn bundled() -> ItemBank {
        ItemBank::parse(crate::assets::ITEM_BANK_120).expect("bundled item bank is valid")
    }

    pub fn items(&self) -> &[LikertItem] {
        &self.items
    }

    pub fn get(&self, item_id: u16) -> Option<&LikertItem> {
        self.items
            .get(usize::from(item_id).checked_sub(1)?)
            .filter(|i| i.item_id == item_id)
    }

    pub fn item_ids(&self) -> Vec<u16> {
        self.items.iter().map(|i| i.item_id).collect()
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

pub fn load_item_bank(path: &Path) -> Result<ItemBank, QuestionnaireError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| QuestionnaireError::BankInvalid(format!("{}: {e}", path.display())))?;
    ItemBank::parse(&text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemChunk {
    pub chunk_index: usize,
    pub items: Vec<LikertItem>,
}

impl ItemChunk {
    pub fn item_ids(&self) -> Vec<u16> {
        self.items.iter().map(|i| i.item_id).collect()
    }

    pub fn contains(&self, item_id: u16) -> bool {
        self.items.iter().any(|i| i.item_id == item_id)
    }
}

/// Split items into consecutive chunks of `chunk_size` (clamped to at least 1);
/// the last chunk may be short.
pub fn chunk_items(items: &[LikertItem], chunk_size: usize) -> Vec<ItemChunk> {
    items
        .chunks(chunk_size.max(1))
        .enumerate()
        .map(|(chunk_index, items)| ItemChunk {
            chunk_index,
            items: items.to_vec(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_bank_structure() {
        let bank = ItemBank::bundled();
        assert_eq!(bank.items().len(), 120);
        for facet in FacetCode::all() {
            assert_eq!(bank.items().iter().filter(|i| i.facet == facet).count(), 4);
        }
        // The bank cycles N, E, O, A, C and advances the facet every five items.
        for item in bank.items() {
            let k = usize::from(item.item_id - 1);
            assert_eq!(item.facet.domain, Domain::ALL[k % 5]);
            assert_eq!(usize::from(item.facet.index), (k % 30) / 5 + 1);
        }
        let minus = bank.items().iter().filter(|i| i.keying == Keying::Minus).count();
        assert_eq!(minus, 55);
        assert_eq!(bank.get(1).unwrap().text, "Worry about things");
        assert!(bank.get(0).is_none());
        assert!(bank.get(121).is_none());
    }

    fn bundled_lines() -> Vec<&'static str> {
        crate::assets::ITEM_BANK_120.lines().collect()
    }

    #[test]
    fn bank_with_119_items() {
        let text = bundled_lines()[..120].join("\n");
        assert!(matches!(ItemBank::parse(&text), Err(QuestionnaireError::BankInvalid(_))));
    }

    #[test]
    fn facet_with_five_items() {
        let mut lines: Vec<String> = bundled_lines().iter().map(|s| s.to_string()).collect();
        // Item 2 (E1) relabelled as N1 -> N1 has 5 items, E1 has 3.
        lines[2] = "2\tN\tN1\t+\tMake friends easily".to_string();
        let err = ItemBank::parse(&lines.join("\n")).unwrap_err();
        assert!(err.to_string().contains("facet"), "{err}");
    }

    #[test]
    fn missing_keying() {
        let mut lines: Vec<String> = bundled_lines().iter().map(|s| s.to_string()).collect();
        lines[1] = "1\tN\tN1\t\tWorry about things".to_string();
        let err = ItemBank::parse(&lines.join("\n")).unwrap_err();
        assert!(err.to_string().contains("keying"), "{err}");
    }

    #[test]
    fn chunking() {
        let bank = ItemBank::bundled();
        let sizes = |n| chunk_items(bank.items(), n).iter().map(|c| c.items.len()).collect::<Vec<_>>();
        assert_eq!(sizes(20), vec![20; 6]);
        assert_eq!(sizes(120), vec![120]);
        assert_eq!(sizes(50), vec![50, 50, 20]);
        let chunks = chunk_items(bank.items(), 20);
        assert_eq!(chunks[0].item_ids(), (1..=20).collect::<Vec<u16>>());
        assert_eq!(chunks[5].chunk_index, 5);
    }
}
