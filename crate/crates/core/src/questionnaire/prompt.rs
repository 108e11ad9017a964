use std::collections::BTreeMap;

use super::{ItemChunk, LIKERT_LABELS};
use crate::persona::EnrichedPersona;
use crate::template::{PromptTemplate, RenderedPrompt, TemplateError};

/// Sentence the bundled quiz template uses to force a rationale per item.
pub const RATIONALE_DIRECTIVE: &str = "You must not pick an answer at random: for every question, think about the person above and give a one-sentence rationale before stating your choice.";

/// `1 = Very Inaccurate` ... `5 = Very Accurate`, one per line.
pub fn likert_legend() -> String {
    LIKERT_LABELS
        .iter()
        .enumerate()
        .map(|(i, label)| format!("{} = {label}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn item_lines(chunk: &ItemChunk) -> String {
    chunk
        .items
        .iter()
        .map(|item| format!("Question {}: {}", item.item_id, item.text))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_quiz_prompt(
    tpl: &PromptTemplate,
    persona: &EnrichedPersona,
    chunk: &ItemChunk,
) -> Result<RenderedPrompt, TemplateError> {
    let vars = BTreeMap::from([
        ("persona_narrative", persona.narrative.trim().to_string()),
        ("likert_legend", likert_legend()),
        ("items", item_lines(chunk)),
    ]);
    tpl.render(&["persona_narrative", "items"], &vars)
}
