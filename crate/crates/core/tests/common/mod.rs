//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use vpop_core::census::CensusRecord;
use vpop_core::questionnaire::{chunk_items, likert_label, AnswerSheet, ItemBank, ItemChunk};
use vpop_core::scoring::{Cohort, PersonalityResult, ScaleScore};
use vpop_core::{Domain, FacetCode};

// ---------------------------------------------------------------------------
// Reference scoring fixture

#[derive(Debug, Deserialize)]
pub struct RefScore {
    pub raw: f64,
    pub normed: f64,
    pub percentile: f64,
}

#[derive(Debug, Deserialize)]
pub struct RefCase {
    pub sex: String,
    pub age: u32,
    pub choices: Vec<u8>,
    pub facets: BTreeMap<String, RefScore>,
    pub domains: BTreeMap<String, RefScore>,
}

#[derive(Debug, Deserialize)]
struct RefFile {
    cases: Vec<RefCase>,
}

pub fn reference_cases() -> Vec<RefCase> {
    let text = include_str!("../fixtures/reference_scoring.json");
    serde_json::from_str::<RefFile>(text).unwrap().cases
}

/// Normed scores agree to floating-point noise.
pub const NORMED_TOL: f64 = 1e-9;
/// The percentile map is a 0.1-step linear interpolation of the reference
/// curve, and the reference range is clamped to 1..=99 here.
pub const PERCENTILE_TOL: f64 = 1e-3;

impl RefCase {
    pub fn sheet(&self) -> AnswerSheet {
        AnswerSheet {
            persona_id: format!("ref-{}-{}", self.sex, self.age),
            answers: (1..=120u16).zip(self.choices.iter().copied()).collect(),
            ..AnswerSheet::default()
        }
    }

    pub fn cohort(&self) -> Cohort {
        Cohort::new(&self.sex, self.age)
    }

    /// Every scale on which `result` disagrees with the fixture.
    pub fn mismatches(&self, result: &PersonalityResult) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |code: &str, got: &ScaleScore, want: &RefScore| {
            let want_pct = want.percentile.clamp(1.0, 99.0);
            if got.raw != want.raw
                || (got.normed - want.normed).abs() > NORMED_TOL
                || (got.percentile - want_pct).abs() > PERCENTILE_TOL
            {
                out.push(format!(
                    "{code}: got ({}, {:.6}, {:.4}) want ({}, {:.6}, {:.4})",
                    got.raw, got.normed, got.percentile, want.raw, want.normed, want_pct
                ));
            }
        };
        for f in FacetCode::all() {
            check(&f.to_string(), &result.facets[&f], &self.facets[&f.to_string()]);
        }
        for d in Domain::ALL {
            let code = d.code().to_string();
            check(&code, result.domain(d), &self.domains[&code]);
        }
        if result.facets.len() != 30 || result.domains.len() != 5 {
            out.push("scale count".into());
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Synthetic quiz transcripts

/// What the transcript was generated from.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub kind: &'static str,
    pub text: String,
    /// Answers actually written into the text.
    pub truth: BTreeMap<u16, u8>,
    /// Answers the parser is expected to recover.
    pub expected_answered: usize,
}

const RATIONALES: [&str; 8] = [
    "Given the steady office routine described in the background",
    "As someone who plans weekends around family",
    "Considering the long hours at work",
    "Based on the calm temperament implied by the profile",
    "Thinking about how they treat colleagues",
    "This seems consistent with a practical outlook",
    "Hard to say, but the narrative leans this way, so",
    "Reflecting on the described hobbies",
];

const VERBS: [&str; 4] = ["is chosen", "seems appropriate", "fits best", "is likely"];

pub fn full_chunk() -> ItemChunk {
    chunk_items(ItemBank::bundled().items(), 120).remove(0)
}

fn label(c: u8) -> &'static str {
    likert_label(c).unwrap()
}

fn figure_line(rng: &mut ChaCha8Rng, id: u16, text: &str, c: u8) -> String {
    let r = RATIONALES[rng.gen_range(0..RATIONALES.len())];
    let v = VERBS[rng.gen_range(0..VERBS.len())];
    format!("- **Question {id}**: \"{text}.\" {r}, a {c} ({}) {v}.", label(c))
}

fn truth(rng: &mut ChaCha8Rng) -> Vec<u8> {
    (0..120).map(|_| rng.gen_range(1..=5)).collect()
}

fn figure_style(seed: u64, keep: &dyn Fn(u16) -> bool, kind: &'static str) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices = truth(&mut rng);
    let bank = ItemBank::bundled();
    let mut lines = vec!["Here's the breakdown of the choices:".to_string(), String::new()];
    let mut written = BTreeMap::new();
    for item in bank.items() {
        if keep(item.item_id) {
            let c = choices[usize::from(item.item_id) - 1];
            lines.push(figure_line(&mut rng, item.item_id, &item.text, c));
            written.insert(item.item_id, c);
        }
    }
    let n = written.len();
    Transcript {
        kind,
        text: lines.join("\n"),
        truth: written,
        expected_answered: n,
    }
}

/// Figure-style transcript cut off inside the line for item 50.
fn truncated(seed: u64) -> Transcript {
    let mut t = figure_style(seed, &|id| id <= 50, "truncated");
    let cut = t.text.rfind("- **Question 50**").unwrap();
    let tail = &t.text[cut..];
    let keep = tail.find("\" ").map_or(tail.len(), |i| i + 8);
    t.text.truncate(cut + keep);
    t.truth.remove(&50);
    t.expected_answered = 49;
    t
}

fn label_only(seed: u64) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices = truth(&mut rng);
    let text = (1..=120u16)
        .map(|id| format!("Question {id}: {}", label(choices[usize::from(id) - 1])))
        .collect::<Vec<_>>()
        .join("\n");
    Transcript {
        kind: "label-only",
        text,
        truth: (1..=120u16).zip(choices).collect(),
        expected_answered: 120,
    }
}

fn terse(seed: u64) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices = truth(&mut rng);
    let text = (1..=120u16)
        .map(|id| match id % 3 {
            0 => format!("{id}. {}", choices[usize::from(id) - 1]),
            1 => format!("Q{id}: {}/5", choices[usize::from(id) - 1]),
            _ => format!("**Question {id}:** {}", choices[usize::from(id) - 1]),
        })
        .collect::<Vec<_>>()
        .join("\n");
    Transcript {
        kind: "terse",
        text,
        truth: (1..=120u16).zip(choices).collect(),
        expected_answered: 120,
    }
}

fn skipping(seed: u64) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut ids: Vec<u16> = (1..=120).collect();
    ids.shuffle(&mut rng);
    let dropped: Vec<u16> = ids[..19].to_vec();
    figure_style(seed, &move |id| !dropped.contains(&id), "101-of-120")
}

fn garbage(seed: u64) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = [
        "lorem", "accurate", "maybe", "inaccurate-ish", "the", "question", "very", "hmm", "###", "**", "-", "n/a",
        "six", "seven", "zero", "(", ")", "?",
    ];
    let text = (0..40)
        .map(|_| {
            (0..rng.gen_range(1..12))
                .map(|_| words[rng.gen_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join("\n");
    Transcript {
        kind: "garbage",
        text,
        truth: BTreeMap::new(),
        expected_answered: 0,
    }
}

/// The 24-transcript corpus.
pub fn transcript_corpus() -> Vec<Transcript> {
    let mut out = Vec::new();
    for s in 0..6 {
        out.push(figure_style(100 + s, &|_| true, "figure"));
    }
    for s in 0..4 {
        out.push(label_only(200 + s));
        out.push(terse(300 + s));
        out.push(truncated(400 + s));
    }
    for s in 0..3 {
        out.push(skipping(500 + s));
        out.push(garbage(600 + s));
    }
    out
}

// ---------------------------------------------------------------------------
// Sampling

/// Pearson goodness-of-fit p-value of `draws` against the proportions in `source`.
pub fn chi_square_p(source: &[CensusRecord], draws: &[&CensusRecord], field: fn(&CensusRecord) -> &str) -> f64 {
    let mut expected: BTreeMap<&str, f64> = BTreeMap::new();
    for r in source {
        *expected.entry(field(r)).or_default() += 1.0;
    }
    let mut observed: BTreeMap<&str, f64> = BTreeMap::new();
    for r in draws {
        *observed.entry(field(r)).or_default() += 1.0;
    }
    let scale = draws.len() as f64 / source.len() as f64;
    let stat: f64 = expected
        .iter()
        .map(|(k, e)| {
            let e = e * scale;
            let o = observed.get(k).copied().unwrap_or(0.0);
            (o - e).powi(2) / e
        })
        .sum();
    let df = (expected.len() - 1) as f64;
    1.0 - ChiSquared::new(df).unwrap().cdf(stat)
}

