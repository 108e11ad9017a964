use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::QuestionnaireError;

/// Item id to Likert choice for one persona, possibly assembled from several chunks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSheet {
    pub persona_id: String,
    pub answers: BTreeMap<u16, u8>,
    #[serde(default)]
    pub rationales: BTreeMap<u16, String>,
    /// References to the quiz transcripts the answers came from,
    /// `"<persona_id>/<chunk_index>/<attempt>"`.
    #[serde(default)]
    pub source_chunks: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub answered_count: usize,
    pub missing_ids: Vec<u16>,
    pub conflict_ids: Vec<u16>,
    pub unparsed_fragments: usize,
}

impl ParseReport {
    /// Fold conflicts and unparsed fragments seen inside a single response
    /// into a merged report.
    pub fn absorb(&mut self, partial: &ParseReport) {
        self.unparsed_fragments += partial.unparsed_fragments;
        for &id in &partial.conflict_ids {
            if !self.conflict_ids.contains(&id) {
                self.conflict_ids.push(id);
            }
        }
        self.conflict_ids.sort_unstable();
    }
}

/// Union of partial sheets in the given order. An item answered twice with
/// the same choice is kept once; with different choices the first answer
/// stays and the item is listed in `conflict_ids`. `universe` is the full set
/// of item ids the sheet should cover.
pub fn merge_answer_sheets(
    partials: &[AnswerSheet],
    universe: &[u16],
) -> Result<(AnswerSheet, ParseReport), QuestionnaireError> {
    let persona_id = partials.first().map(|p| p.persona_id.clone()).unwrap_or_default();
    if let Some(other) = partials.iter().find(|p| p.persona_id != persona_id) {
        return Err(QuestionnaireError::PersonaMismatch(persona_id, other.persona_id.clone()));
    }
    let mut merged = AnswerSheet {
        persona_id,
        ..AnswerSheet::default()
    };
    let mut conflicts = Vec::new();
    for partial in partials {
        for (&id, &choice) in &partial.answers {
            match merged.answers.get(&id) {
                None => {
                    merged.answers.insert(id, choice);
                    if let Some(r) = partial.rationales.get(&id) {
                        merged.rationales.insert(id, r.clone());
                    }
                }
                Some(&first) if first != choice => {
                    if !conflicts.contains(&id) {
                        conflicts.push(id);
                    }
                }
                Some(_) => {}
            }
        }
        for src in &partial.source_chunks {
            if !merged.source_chunks.contains(src) {
                merged.source_chunks.push(src.clone());
            }
        }
    }
    conflicts.sort_unstable();
    let mut missing_ids: Vec<u16> = universe
        .iter()
        .copied()
        .filter(|id| !merged.answers.contains_key(id))
        .collect();
    missing_ids.sort_unstable();
    missing_ids.dedup();
    let report = ParseReport {
        answered_count: merged.answers.len(),
        missing_ids,
        conflict_ids: conflicts,
        unparsed_fragments: 0,
    };
    Ok((merged, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sheet(id: &str, answers: &[(u16, u8)]) -> AnswerSheet {
        AnswerSheet {
            persona_id: id.into(),
            answers: answers.iter().copied().collect(),
            ..AnswerSheet::default()
        }
    }

    fn universe() -> Vec<u16> {
        (1..=120).collect()
    }

    #[test]
    fn six_disjoint_chunks() {
        let partials: Vec<AnswerSheet> = (0..6u16)
            .map(|c| sheet("p", &(c * 20 + 1..=c * 20 + 20).map(|i| (i, 3)).collect::<Vec<_>>()))
            .collect();
        let (merged, report) = merge_answer_sheets(&partials, &universe()).unwrap();
        assert_eq!(merged.answers.len(), 120);
        assert!(report.missing_ids.is_empty());
        assert_eq!(report.answered_count + report.missing_ids.len(), 120);
    }

    #[test]
    fn first_wins_on_conflict() {
        let (merged, report) =
            merge_answer_sheets(&[sheet("p", &[(7, 4)]), sheet("p", &[(7, 2)])], &universe()).unwrap();
        assert_eq!(merged.answers[&7], 4);
        assert_eq!(report.conflict_ids, vec![7]);
    }

    #[test]
    fn fifty_answered() {
        let a = sheet("p", &(1..=30).map(|i| (i, 2)).collect::<Vec<_>>());
        let b = sheet("p", &(31..=50).map(|i| (i, 5)).collect::<Vec<_>>());
        let (_, report) = merge_answer_sheets(&[a, b], &universe()).unwrap();
        assert_eq!(report.missing_ids.len(), 70);
    }

    #[test]
    fn mismatch() {
        let err = merge_answer_sheets(&[sheet("p", &[]), sheet("q", &[])], &universe()).unwrap_err();
        assert!(matches!(err, QuestionnaireError::PersonaMismatch(a, b) if a == "p" && b == "q"));
    }

    fn partial_strategy() -> impl Strategy<Value = Vec<AnswerSheet>> {
        proptest::collection::vec(proptest::collection::btree_map(1u16..=120, 1u8..=5, 0..40), 0..6).prop_map(
            |maps| {
                // Make the partials conflict-free by letting each item keep the
                // choice of its first occurrence.
                let mut seen = BTreeMap::new();
                maps.into_iter()
                    .map(|m| {
                        let answers = m
                            .into_iter()
                            .map(|(k, v)| (k, *seen.entry(k).or_insert(v)))
                            .collect();
                        AnswerSheet {
                            persona_id: "p".into(),
                            answers,
                            ..AnswerSheet::default()
                        }
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn merge_is_idempotent_and_order_free(partials in partial_strategy(), rot in 0usize..6) {
            let (once, r1) = merge_answer_sheets(&partials, &universe()).unwrap();
            let (twice, r2) = merge_answer_sheets(&[once.clone(), once.clone()], &universe()).unwrap();
            prop_assert_eq!(&once.answers, &twice.answers);
            prop_assert_eq!(&r1, &r2);
            let mut rotated = partials.clone();
            if !rotated.is_empty() {
                let k = rot % rotated.len();
                rotated.rotate_left(k);
                rotated.reverse();
            }
            let (other, r3) = merge_answer_sheets(&rotated, &universe()).unwrap();
            prop_assert_eq!(&once.answers, &other.answers);
            prop_assert_eq!(&r1, &r3);
            prop_assert_eq!(r1.answered_count + r1.missing_ids.len(), 120);
        }
    }
}
