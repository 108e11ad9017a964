use serde::{Deserialize, Serialize};

use super::{
    build_quiz_prompt, merge_answer_sheets, parse_quiz_response, AnswerSheet, ItemBank, ItemChunk, ParseReport,
    QuestionnaireError,
};
use crate::gateway::{ChatRequest, Gateway, MockContext};
use crate::persona::EnrichedPersona;
use crate::template::PromptTemplate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuizKind {
    /// One of the regular chunks.
    Chunk,
    /// A follow-up asking only the items still missing.
    Reask,
}

impl QuizKind {
    pub fn name(self) -> &'static str {
        match self {
            QuizKind::Chunk => "chunk",
            QuizKind::Reask => "reask",
        }
    }
}

/// One quiz request and its verbatim response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizExchange {
    pub persona_id: String,
    pub kind: QuizKind,
    /// Chunk position for [`QuizKind::Chunk`], 0-based attempt for [`QuizKind::Reask`].
    pub chunk_index: usize,
    pub request_id: String,
    pub prompt_digest: String,
    pub item_ids: Vec<u16>,
    pub response_text: String,
    pub attempt_count: u32,
    pub report: ParseReport,
}

impl QuizExchange {
    /// `"<persona_id>/<kind>/<chunk_index>"`, the id answer sheets cite.
    pub fn reference(&self) -> String {
        format!("{}/{}/{}", self.persona_id, self.kind.name(), self.chunk_index)
    }

    /// Re-derive the partial sheet from the stored response text.
    pub fn partial_sheet(&self, bank: &ItemBank) -> AnswerSheet {
        let chunk = ItemChunk {
            chunk_index: self.chunk_index,
            items: self.item_ids.iter().filter_map(|id| bank.get(*id).cloned()).collect(),
        };
        let (mut sheet, _) = parse_quiz_response(&self.response_text, &chunk);
        sheet.persona_id = self.persona_id.clone();
        sheet.source_chunks = vec![self.reference()];
        sheet
    }
}

/// Send one chunk and parse the reply.
pub fn administer_chunk(
    gateway: &Gateway,
    tpl: &PromptTemplate,
    persona: &EnrichedPersona,
    chunk: &ItemChunk,
    kind: QuizKind,
) -> Result<(AnswerSheet, QuizExchange), QuestionnaireError> {
    let prompt = build_quiz_prompt(tpl, persona, chunk)?;
    let request_id = format!("{}/quiz/{}/{}", persona.persona_id, kind.name(), chunk.chunk_index);
    let req = ChatRequest::new(&request_id, &prompt.system, &prompt.user, &gateway.config().model_id);
    let ctx = MockContext::Quiz {
        skeleton: persona.skeleton.clone(),
        items: chunk.items.clone(),
    };
    let resp = gateway.complete(&req, Some(&ctx))?;
    let (mut sheet, report) = parse_quiz_response(&resp.text, chunk);
    let exchange = QuizExchange {
        persona_id: persona.persona_id.clone(),
        kind,
        chunk_index: chunk.chunk_index,
        request_id,
        prompt_digest: prompt.digest(),
        item_ids: chunk.item_ids(),
        response_text: resp.text,
        attempt_count: resp.attempt_count,
        report,
    };
    sheet.persona_id = persona.persona_id.clone();
    sheet.source_chunks = vec![exchange.reference()];
    Ok((sheet, exchange))
}

/// A chunk of the still-missing items for re-ask number `attempt` (0-based).
pub fn reask_chunk(bank: &ItemBank, missing: &[u16], attempt: usize) -> ItemChunk {
    ItemChunk {
        chunk_index: attempt,
        items: missing.iter().filter_map(|id| bank.get(*id).cloned()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReaskOutcome {
    pub sheet: AnswerSheet,
    pub report: ParseReport,
    pub exchanges: Vec<QuizExchange>,
}

/// Ask again for missing items, up to `cap` times, merging each reply
/// after the existing answers (first answer wins).
pub fn reask_missing(
    gateway: &Gateway,
    tpl: &PromptTemplate,
    persona: &EnrichedPersona,
    bank: &ItemBank,
    sheet: &AnswerSheet,
    report: &ParseReport,
    cap: usize,
) -> Result<ReaskOutcome, QuestionnaireError> {
    let universe = bank.item_ids();
    let mut sheet = sheet.clone();
    let mut report = report.clone();
    let mut exchanges = Vec::new();
    for attempt in 0..cap {
        if report.missing_ids.is_empty() {
            break;
        }
        let chunk = reask_chunk(bank, &report.missing_ids, attempt);
        let (partial, exchange) = administer_chunk(gateway, tpl, persona, &chunk, QuizKind::Reask)?;
        let (merged, mut merged_report) = merge_answer_sheets(&[sheet, partial], &universe)?;
        merged_report.absorb(&report);
        merged_report.absorb(&exchange.report);
        sheet = merged;
        report = merged_report;
        exchanges.push(exchange);
    }
    Ok(ReaskOutcome {
        sheet,
        report,
        exchanges,
    })
}
