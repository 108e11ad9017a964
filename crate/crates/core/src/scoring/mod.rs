//! IPIP-NEO-120 scoring: keyed item sums per facet, domain totals, cohort
//! norming and percentiles.

mod norms;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::questionnaire::{AnswerSheet, ItemBank, Keying, ITEMS_PER_FACET};
use crate::traits::{Domain, FacetCode, Trait};

pub use norms::{Cohort, NormEntry, NormSex, NormTable, PercentileMap, Scale};

/// A facet needs at least this many answered items to be scored.
pub const MIN_ANSWERS_PER_FACET: usize = 2;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoringError {
    #[error("facets with fewer than {MIN_ANSWERS_PER_FACET} answers: {}", list(.0))]
    InsufficientAnswers(Vec<FacetCode>),
    #[error("item {item_id}: {reason}")]
    InvalidAnswer { item_id: u16, reason: String },
    #[error("no norm cohort for {0}")]
    CohortMissing(String),
    #[error("norm table invalid: {0}")]
    NormInvalid(String),
}

fn list(facets: &[FacetCode]) -> String {
    facets.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Reverse-score minus-keyed items.
pub fn keyed_value(choice: u8, keying: Keying) -> u8 {
    match keying {
        Keying::Plus => choice,
        Keying::Minus => 6 - choice,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScores {
    pub facet_raw: BTreeMap<FacetCode, f64>,
    pub domain_raw: BTreeMap<Domain, f64>,
    /// Answered items per facet.
    pub completeness: BTreeMap<FacetCode, u8>,
}

/// Keyed sums per facet, rescaled by `4 / answered` when items are missing,
/// and domain totals over their six facets.
pub fn raw_scores(sheet: &AnswerSheet, bank: &ItemBank) -> Result<RawScores, ScoringError> {
    let mut sums: BTreeMap<FacetCode, (u32, u8)> = FacetCode::all().map(|f| (f, (0, 0))).collect();
    for (&item_id, &choice) in &sheet.answers {
        let item = bank.get(item_id).ok_or_else(|| ScoringError::InvalidAnswer {
            item_id,
            reason: "not in the item bank".into(),
        })?;
        if !(1..=5).contains(&choice) {
            return Err(ScoringError::InvalidAnswer {
                item_id,
                reason: format!("choice {choice} outside 1..=5"),
            });
        }
        let slot = sums.get_mut(&item.facet).expect("every facet present");
        slot.0 += u32::from(keyed_value(choice, item.keying));
        slot.1 += 1;
    }
    let short: Vec<FacetCode> = sums
        .iter()
        .filter(|(_, (_, n))| usize::from(*n) < MIN_ANSWERS_PER_FACET)
        .map(|(f, _)| *f)
        .collect();
    if !short.is_empty() {
        return Err(ScoringError::InsufficientAnswers(short));
    }
    let facet_raw: BTreeMap<FacetCode, f64> = sums
        .iter()
        .map(|(f, (sum, n))| {
            let raw = if usize::from(*n) == ITEMS_PER_FACET {
                f64::from(*sum)
            } else {
                f64::from(*sum) * ITEMS_PER_FACET as f64 / f64::from(*n)
            };
            (*f, raw)
        })
        .collect();
    let domain_raw = Domain::ALL
        .into_iter()
        .map(|d| {
            let total = facet_raw.iter().filter(|(f, _)| f.domain == d).map(|(_, v)| v).sum();
            (d, total)
        })
        .collect();
    let completeness = sums.iter().map(|(f, (_, n))| (*f, *n)).collect();
    Ok(RawScores {
        facet_raw,
        domain_raw,
        completeness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleScore {
    pub raw: f64,
    pub normed: f64,
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalityResult {
    pub persona_id: String,
    pub cohort: Cohort,
    pub facets: BTreeMap<FacetCode, ScaleScore>,
    pub domains: BTreeMap<Domain, ScaleScore>,
    pub completeness: BTreeMap<FacetCode, u8>,
    pub norm_version: String,
}

impl PersonalityResult {
    pub fn domain(&self, d: Domain) -> &ScaleScore {
        &self.domains[&d]
    }

    pub fn trait_score(&self, t: Trait) -> &ScaleScore {
        self.domain(t.domain())
    }

    pub fn is_complete(&self) -> bool {
        self.completeness.values().all(|n| usize::from(*n) == ITEMS_PER_FACET)
    }
}

/// Facet and domain scores after norming.
pub type NormalizedScores = (BTreeMap<FacetCode, ScaleScore>, BTreeMap<Domain, ScaleScore>);

/// Norm raw scores for one cohort.
pub fn normalize(
    raw: &RawScores,
    norms: &NormTable,
    cohort: &Cohort,
) -> Result<NormalizedScores, ScoringError> {
    let score = |scale: Scale, raw: f64| -> Result<ScaleScore, ScoringError> {
        let (normed, percentile) = norms.normalize(scale, raw, cohort)?;
        Ok(ScaleScore {
            raw,
            normed,
            percentile,
        })
    };
    let facets = raw
        .facet_raw
        .iter()
        .map(|(f, r)| Ok((*f, score(Scale::Facet(*f), *r)?)))
        .collect::<Result<_, ScoringError>>()?;
    let domains = raw
        .domain_raw
        .iter()
        .map(|(d, r)| Ok((*d, score(Scale::Domain(*d), *r)?)))
        .collect::<Result<_, ScoringError>>()?;
    Ok((facets, domains))
}

pub fn score(
    sheet: &AnswerSheet,
    bank: &ItemBank,
    norms: &NormTable,
    cohort: &Cohort,
) -> Result<PersonalityResult, ScoringError> {
    let raw = raw_scores(sheet, bank)?;
    let (facets, domains) = normalize(&raw, norms, cohort)?;
    Ok(PersonalityResult {
        persona_id: sheet.persona_id.clone(),
        cohort: *cohort,
        facets,
        domains,
        completeness: raw.completeness,
        norm_version: norms.version().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sheet_from(choices: &[u8]) -> AnswerSheet {
        AnswerSheet {
            persona_id: "p".into(),
            answers: (1..=120u16).zip(choices.iter().copied()).collect(),
            ..AnswerSheet::default()
        }
    }

    /// Independent recomputation: for each facet, loop over all items.
    fn brute_force(choices: &[u8], bank: &ItemBank) -> BTreeMap<FacetCode, f64> {
        let mut out = BTreeMap::new();
        for facet in FacetCode::all() {
            let mut total = 0u32;
            for (idx, item) in bank.items().iter().enumerate() {
                if item.facet == facet {
                    let c = u32::from(choices[idx]);
                    total += if item.keying == Keying::Minus { 6 - c } else { c };
                }
            }
            out.insert(facet, f64::from(total));
        }
        out
    }

    #[test]
    fn keyed_values() {
        assert_eq!(keyed_value(3, Keying::Minus), 3);
        assert_eq!(keyed_value(5, Keying::Minus), 1);
        assert_eq!(keyed_value(2, Keying::Plus), 2);
    }

    #[test]
    fn neutral_sheet() {
        let bank = ItemBank::bundled();
        let raw = raw_scores(&sheet_from(&[3; 120]), &bank).unwrap();
        assert!(raw.facet_raw.values().all(|v| *v == 12.0));
        assert!(raw.domain_raw.values().all(|v| *v == 72.0));
        let unit = NormTable::bundled("unit").unwrap();
        let r = score(&sheet_from(&[3; 120]), &bank, &unit, &Cohort::new("", 40)).unwrap();
        assert!(r.facets.values().all(|s| s.normed == 50.0));
        assert!(r.domains.values().all(|s| s.normed == 50.0));
        assert!(r.is_complete());
    }

    #[test]
    fn all_fives() {
        let bank = ItemBank::bundled();
        let raw = raw_scores(&sheet_from(&[5; 120]), &bank).unwrap();
        for facet in FacetCode::all() {
            let plus = bank
                .items()
                .iter()
                .filter(|i| i.facet == facet && i.keying == Keying::Plus)
                .count();
            assert_eq!(raw.facet_raw[&facet], (plus * 5 + (4 - plus)) as f64);
            if plus == 4 {
                assert_eq!(raw.facet_raw[&facet], 20.0);
            }
        }
    }

    #[test]
    fn rescales_partial_facets() {
        let bank = ItemBank::bundled();
        let mut sheet = sheet_from(&[3; 120]);
        // Items 1 and 31 are two of N1's four items.
        sheet.answers.remove(&1);
        sheet.answers.remove(&31);
        let raw = raw_scores(&sheet, &bank).unwrap();
        let n1: FacetCode = "N1".parse().unwrap();
        assert_eq!(raw.facet_raw[&n1], 12.0);
        assert_eq!(raw.completeness[&n1], 2);
    }

    #[test]
    fn insufficient_answers_names_facets() {
        let bank = ItemBank::bundled();
        let mut sheet = sheet_from(&[3; 120]);
        for id in [1, 31, 61] {
            sheet.answers.remove(&id);
        }
        for id in [2, 32, 62, 92] {
            sheet.answers.remove(&id);
        }
        let err = raw_scores(&sheet, &bank).unwrap_err();
        assert_eq!(
            err,
            ScoringError::InsufficientAnswers(vec!["N1".parse().unwrap(), "E1".parse().unwrap()])
        );
        assert!(err.to_string().contains("N1, E1"));
    }

    #[test]
    fn invalid_answers() {
        let bank = ItemBank::bundled();
        let mut sheet = sheet_from(&[3; 120]);
        sheet.answers.insert(7, 6);
        assert!(matches!(raw_scores(&sheet, &bank), Err(ScoringError::InvalidAnswer { item_id: 7, .. })));
        let mut sheet = sheet_from(&[3; 120]);
        sheet.answers.insert(121, 3);
        assert!(raw_scores(&sheet, &bank).is_err());
    }

    fn choices() -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(1u8..=5, 120)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn matches_brute_force_and_ranges(c in choices()) {
            let bank = ItemBank::bundled();
            let raw = raw_scores(&sheet_from(&c), &bank).unwrap();
            prop_assert_eq!(&raw.facet_raw, &brute_force(&c, &bank));
            for d in Domain::ALL {
                let sum: f64 = raw.facet_raw.iter().filter(|(f, _)| f.domain == d).map(|(_, v)| v).sum();
                prop_assert_eq!(raw.domain_raw[&d], sum);
                prop_assert!((24.0..=120.0).contains(&raw.domain_raw[&d]));
            }
            prop_assert!(raw.facet_raw.values().all(|v| (4.0..=20.0).contains(v)));
            let norms = NormTable::bundled("ipip-neo-120").unwrap();
            let r = score(&sheet_from(&c), &bank, &norms, &Cohort::new("Female", 33)).unwrap();
            prop_assert!(r.domains.values().chain(r.facets.values()).all(|s| (1.0..=99.0).contains(&s.percentile)));
        }

        #[test]
        fn reflection(c in choices()) {
            let bank = ItemBank::bundled();
            let flipped: Vec<u8> = c.iter().map(|x| 6 - x).collect();
            let a = raw_scores(&sheet_from(&c), &bank).unwrap();
            let b = raw_scores(&sheet_from(&flipped), &bank).unwrap();
            for f in FacetCode::all() {
                prop_assert_eq!(b.facet_raw[&f], 24.0 - a.facet_raw[&f]);
            }
        }

        #[test]
        fn monotone_in_single_item(c in choices(), idx in 0usize..120, sex in prop::sample::select(vec!["Male", "Female", ""]), age in 16u32..90) {
            prop_assume!(c[idx] < 5);
            let bank = ItemBank::bundled();
            let norms = NormTable::bundled("ipip-neo-120").unwrap();
            let cohort = Cohort::new(sex, age);
            let mut up = c.clone();
            up[idx] += 1;
            let a = score(&sheet_from(&c), &bank, &norms, &cohort).unwrap();
            let b = score(&sheet_from(&up), &bank, &norms, &cohort).unwrap();
            let item = &bank.items()[idx];
            let (lo, hi) = if item.keying == Keying::Plus { (&a, &b) } else { (&b, &a) };
            let f = item.facet;
            let d = f.domain;
            prop_assert!(hi.facets[&f].raw > lo.facets[&f].raw);
            prop_assert!(hi.facets[&f].normed > lo.facets[&f].normed);
            prop_assert!(hi.facets[&f].percentile >= lo.facets[&f].percentile);
            prop_assert!(hi.domains[&d].raw > lo.domains[&d].raw);
            prop_assert!(hi.domains[&d].normed > lo.domains[&d].normed);
            prop_assert!(hi.domains[&d].percentile >= lo.domains[&d].percentile);
        }

        #[test]
        fn norming_preserves_order(a in choices(), b in choices()) {
            let bank = ItemBank::bundled();
            let norms = NormTable::bundled("ipip-neo-120").unwrap();
            let cohort = Cohort::new("Male", 45);
            let ra = score(&sheet_from(&a), &bank, &norms, &cohort).unwrap();
            let rb = score(&sheet_from(&b), &bank, &norms, &cohort).unwrap();
            for d in Domain::ALL {
                prop_assert_eq!(
                    ra.domain(d).raw.partial_cmp(&rb.domain(d).raw),
                    ra.domain(d).normed.partial_cmp(&rb.domain(d).normed)
                );
            }
        }
    }
}
