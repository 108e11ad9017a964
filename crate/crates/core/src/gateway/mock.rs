//! Offline provider.
//!
//! A [`MockProfile`] either replays scripted responses keyed by prompt digest
//! or synthesizes answers from a latent Big Five vector computed from the
//! persona's census fields. Profiles are TOML:
//!
//! ```toml
//! mode = "persona_conditioned"
//! noise_seed = 7
//! noise_fraction = 0.1
//!
//! [traits.conscientiousness]
//! base = 30
//! max = 95
//! linear = { age = 0.5 }
//!
//! [traits.extraversion.categorical.sex]
//! Female = 4
//! ```
//!
//! Traits without a rule sit at 50.
//!
//! Quiz answers quantize the latent `t` with dithering: `c = floor(t/25 + u) + 1`
//! where `u` is a seeded uniform draw per (persona, item), so the expected
//! choice is exactly `t/25 + 1`. Minus-keyed items answer `6 - c`. A seeded
//! `noise_fraction` of items is then moved one step up or down.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendReply, ChatRequest, ChatResponse, GatewayError};
use crate::census::{FieldValue, SkeletalPersona};
use crate::digest::{prompt_digest, seed_from_parts};
use crate::questionnaire::{likert_label, Keying, LikertItem};
use crate::traits::Trait;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    Scripted,
    #[default]
    PersonaConditioned,
}

/// Rule for one latent trait, evaluated on a skeleton.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraitRule {
    #[serde(default = "fifty")]
    pub base: f64,
    /// Coefficient per integer column.
    #[serde(default)]
    pub linear: BTreeMap<String, f64>,
    /// Offset per (categorical column, value).
    #[serde(default)]
    pub categorical: BTreeMap<String, BTreeMap<String, f64>>,
    /// Replaces `base` when the age falls in a `low_high` range such as `20_29`.
    #[serde(default)]
    pub by_age_bin: BTreeMap<String, f64>,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
}

fn fifty() -> f64 {
    50.0
}

impl Default for TraitRule {
    fn default() -> Self {
        TraitRule {
            base: 50.0,
            linear: BTreeMap::new(),
            categorical: BTreeMap::new(),
            by_age_bin: BTreeMap::new(),
            min: None,
            max: None,
        }
    }
}

fn parse_range(label: &str) -> Option<(u32, u32)> {
    let (lo, hi) = label.split_once(['_', '-'])?;
    Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
}

impl TraitRule {
    pub fn evaluate(&self, skel: &SkeletalPersona) -> f64 {
        let rec = &skel.record;
        let mut t = self
            .by_age_bin
            .iter()
            .find(|(label, _)| parse_range(label).is_some_and(|(lo, hi)| (lo..=hi).contains(&rec.age)))
            .map_or(self.base, |(_, v)| *v);
        for (column, coef) in &self.linear {
            if let Some(FieldValue::Int(v)) = rec.value(column) {
                t += coef * v as f64;
            }
        }
        for (column, offsets) in &self.categorical {
            if let Some(FieldValue::Cat(v)) = rec.value(column) {
                t += offsets.get(v).copied().unwrap_or(0.0);
            }
        }
        if let Some(lo) = self.min {
            t = t.max(lo);
        }
        if let Some(hi) = self.max {
            t = t.min(hi);
        }
        t.clamp(0.0, 100.0)
    }

    fn validate(&self, name: Trait) -> Result<(), GatewayError> {
        let bad = |msg: String| GatewayError::Config(format!("traits.{}: {msg}", name.name()));
        for column in self.linear.keys() {
            match crate::census::canonical_column(column) {
                Some(c) if crate::census::ADULT_COLUMNS
                    .iter()
                    .any(|(n, k)| *n == c && *k == crate::census::ColumnKind::Integer) => {}
                _ => return Err(bad(format!("`{column}` is not an integer column"))),
            }
        }
        for column in self.categorical.keys() {
            match crate::census::canonical_column(column) {
                Some(c) if crate::census::ADULT_COLUMNS
                    .iter()
                    .any(|(n, k)| *n == c && *k == crate::census::ColumnKind::Categorical) => {}
                _ => return Err(bad(format!("`{column}` is not a categorical column"))),
            }
        }
        if let Some(label) = self.by_age_bin.keys().find(|l| parse_range(l).is_none()) {
            return Err(bad(format!("age bin `{label}` is not `low_high`")));
        }
        Ok(())
    }
}

/// Latent trait function: one rule per trait, 50 where no rule is given.
pub type TraitFunction = BTreeMap<Trait, TraitRule>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockProfile {
    #[serde(default)]
    pub mode: MockMode,
    #[serde(default)]
    pub script: BTreeMap<String, String>,
    #[serde(default)]
    pub traits: TraitFunction,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub noise_fraction: f64,
    /// Items the mock never answers.
    #[serde(default)]
    pub withhold_items: Vec<u16>,
    /// Stop answering after this many items in one response.
    #[serde(default)]
    pub max_items_per_response: Option<usize>,
}

impl Default for MockProfile {
    fn default() -> Self {
        MockProfile {
            mode: MockMode::PersonaConditioned,
            script: BTreeMap::new(),
            traits: TraitFunction::new(),
            noise_seed: 0,
            noise_fraction: 0.0,
            withhold_items: Vec::new(),
            max_items_per_response: None,
        }
    }
}

impl MockProfile {
    pub fn from_toml(text: &str) -> Result<MockProfile, GatewayError> {
        let profile: MockProfile =
            toml::from_str(text).map_err(|e| GatewayError::Config(format!("mock profile: {e}")))?;
        if !(0.0..=1.0).contains(&profile.noise_fraction) {
            return Err(GatewayError::Config("noise_fraction must lie in [0, 1]".into()));
        }
        for (name, rule) in &profile.traits {
            rule.validate(*name)?;
        }
        Ok(profile)
    }

    pub fn scripted(script: BTreeMap<String, String>) -> MockProfile {
        MockProfile {
            mode: MockMode::Scripted,
            script,
            ..MockProfile::default()
        }
    }

    /// Latent vector in curve order (E, A, C, N, O).
    pub fn latent(&self, skel: &SkeletalPersona) -> [f64; 5] {
        Trait::ALL.map(|t| self.traits.get(&t).map_or(50.0, |r| r.evaluate(skel)))
    }

    /// Choice for one item: dithered quantization of the latent trait,
    /// optional one-step noise, then keying.
    pub fn choice(&self, skel: &SkeletalPersona, item: &LikertItem) -> u8 {
        let t = self.latent(skel)[item.facet.domain.as_trait().index()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed_from_parts(&[
            "mock-choice",
            &self.noise_seed.to_string(),
            &skel.persona_id,
            &item.item_id.to_string(),
        ]));
        let u: f64 = rng.gen();
        let mut c = ((t / 25.0 + u).floor() as i32 + 1).clamp(1, 5);
        if rng.gen::<f64>() < self.noise_fraction {
            c = (c + if rng.gen_bool(0.5) { 1 } else { -1 }).clamp(1, 5);
        }
        let c = c as u8;
        match item.keying {
            Keying::Plus => c,
            Keying::Minus => 6 - c,
        }
    }
}

/// What the persona-conditioned mock needs besides the prompt text.
#[derive(Debug, Clone, PartialEq)]
pub enum MockContext {
    Enrichment {
        skeleton: SkeletalPersona,
        generation_index: u32,
    },
    Quiz {
        skeleton: SkeletalPersona,
        items: Vec<LikertItem>,
    },
    Elicitation {
        skeleton: SkeletalPersona,
        /// Domain scores in curve order (E, A, C, N, O).
        scores: [f64; 5],
    },
}

fn pronoun(sex: &str) -> (&'static str, &'static str) {
    match sex {
        "Female" => ("She", "her"),
        "Male" => ("He", "his"),
        _ => ("They", "their"),
    }
}

fn enrichment_text(skel: &SkeletalPersona, generation_index: u32) -> String {
    let r = &skel.record;
    let (subj, poss) = pronoun(&r.sex);
    let openers = [
        "Meet a person whose days follow a familiar rhythm.",
        "This is someone shaped by steady routines and a few surprises.",
        "Here is a portrait drawn from ordinary details.",
    ];
    let opener = openers[generation_index as usize % openers.len()];
    format!(
        "{opener} {subj} is {age} years old, {race}, {marital}, and lives in {country}. \
         {subj} finished {edu} ({edu_num} years of schooling) and works as {occ} in the {wc} sector, \
         about {hours} hours a week, with an income bracket of {income}.\n\n\
         At home {subj_l} is described as {rel}. {poss_u} habits are practical and {poss} appearance is unremarkable \
         in a crowd. (Variant {generation_index}.)",
        age = r.age,
        race = r.race,
        marital = r.marital_status,
        country = r.native_country,
        edu = r.education,
        edu_num = r.education_num,
        occ = r.occupation,
        wc = r.workclass,
        hours = r.hours_per_week,
        income = r.income_bracket,
        subj_l = subj.to_lowercase(),
        rel = r.relationship,
        poss_u = {
            let mut s = poss.to_string();
            s[..1].make_ascii_uppercase();
            s
        },
    )
}

fn level(score: f64) -> &'static str {
    match score {
        s if s < 35.0 => "low",
        s if s < 65.0 => "moderate",
        _ => "high",
    }
}

fn elicitation_text(skel: &SkeletalPersona, scores: &[f64; 5]) -> String {
    let (subj, _) = pronoun(&skel.record.sex);
    let paragraphs: Vec<String> = Trait::ALL
        .iter()
        .map(|t| {
            let s = scores[t.index()];
            format!(
                "With a {} score in {} ({s:.0}), {} shows this in everyday choices.",
                level(s),
                t.name(),
                subj.to_lowercase()
            )
        })
        .collect();
    format!(
        "{}\n\n{}\n\n{}",
        paragraphs[..2].join(" "),
        paragraphs[2..4].join(" "),
        paragraphs[4]
    )
}

fn quiz_text(profile: &MockProfile, skel: &SkeletalPersona, items: &[LikertItem]) -> String {
    let latent = profile.latent(skel);
    let mut out = String::from("Here's the breakdown of the choices:\n\n");
    let limit = profile.max_items_per_response.unwrap_or(usize::MAX);
    for item in items
        .iter()
        .filter(|i| !profile.withhold_items.contains(&i.item_id))
        .take(limit)
    {
        let c = profile.choice(skel, item);
        let t = item.facet.domain.as_trait();
        out.push_str(&format!(
            "- **Question {}**: \"{}.\" With {} around {:.0} out of 100, a {c} ({}) is chosen.\n",
            item.item_id,
            item.text,
            t.name(),
            latent[t.index()],
            likert_label(c).expect("choice in 1..=5"),
        ));
    }
    out
}

/// Deterministic response for `req`. Scripted mode looks up the prompt
/// digest; persona-conditioned mode needs `context`.
pub fn complete_mock(
    profile: &MockProfile,
    req: &ChatRequest,
    context: Option<&MockContext>,
) -> Result<ChatResponse, GatewayError> {
    let text = match profile.mode {
        MockMode::Scripted => {
            let digest = prompt_digest(&req.system_text, &req.user_text);
            profile
                .script
                .get(&digest)
                .cloned()
                .ok_or(GatewayError::UnscriptedPrompt(digest))?
        }
        MockMode::PersonaConditioned => match context.ok_or(GatewayError::MissingContext)? {
            MockContext::Enrichment {
                skeleton,
                generation_index,
            } => enrichment_text(skeleton, *generation_index),
            MockContext::Quiz { skeleton, items } => quiz_text(profile, skeleton, items),
            MockContext::Elicitation { skeleton, scores } => elicitation_text(skeleton, scores),
        },
    };
    Ok(ChatResponse {
        request_id: req.request_id.clone(),
        text,
        latency_ms: 0,
        attempt_count: 1,
        provider_meta: BTreeMap::from([("backend".to_string(), "mock".to_string())]),
    })
}

pub struct MockBackend {
    profile: MockProfile,
}

impl MockBackend {
    pub fn new(profile: MockProfile) -> MockBackend {
        MockBackend { profile }
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }
}

impl Backend for MockBackend {
    fn send(&self, req: &ChatRequest, ctx: Option<&MockContext>) -> Result<BackendReply, GatewayError> {
        let resp = complete_mock(&self.profile, req, ctx)?;
        Ok(BackendReply {
            text: resp.text,
            meta: resp.provider_meta,
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> &str {
        "mock"
    }
}
