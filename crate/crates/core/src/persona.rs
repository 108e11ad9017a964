//! Persona enrichment and personality-elicited "deep" personas.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::TRAIT_DEFINITIONS;
use crate::census::SkeletalPersona;
use crate::gateway::{ChatRequest, Gateway, GatewayError, MockContext};
use crate::scoring::PersonalityResult;
use crate::template::{PromptTemplate, RenderedPrompt, TemplateError};
use crate::traits::{Domain, FacetCode, Trait};

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("personality result belongs to `{result}`, persona is `{persona}`")]
    PersonaResultMismatch { persona: String, result: String },
    #[error("missing dependency: {0}")]
    MissingDependency(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichedPersona {
    pub persona_id: String,
    pub skeleton: SkeletalPersona,
    pub narrative: String,
    pub prompt_digest: String,
    pub model_id: String,
    pub generation_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitedPersona {
    pub persona_id: String,
    /// Reference to the score record, `score/<persona_id>`.
    pub source_result: String,
    pub narrative: String,
    pub prompt_digest: String,
    pub model_id: String,
}

/// `name: value` lines for every skeleton attribute.
pub fn skeleton_fields(skel: &SkeletalPersona) -> String {
    skel.record
        .labeled_fields()
        .into_iter()
        .map(|(name, value)| format!("{name}: {value}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_enrichment_prompt(tpl: &PromptTemplate, skel: &SkeletalPersona) -> Result<RenderedPrompt, TemplateError> {
    let vars = BTreeMap::from([("skeleton_fields", skeleton_fields(skel))]);
    tpl.render(&["skeleton_fields"], &vars)
}

fn request(id: String, prompt: &RenderedPrompt, gateway: &Gateway) -> ChatRequest {
    ChatRequest::new(id, &prompt.system, &prompt.user, &gateway.config().model_id)
}

/// Ask the provider for a narrative. The text is stored as returned.
pub fn enrich_persona(
    gateway: &Gateway,
    tpl: &PromptTemplate,
    skel: &SkeletalPersona,
    generation_index: u32,
) -> Result<EnrichedPersona, PersonaError> {
    let prompt = build_enrichment_prompt(tpl, skel)?;
    let req = request(format!("{}/enrichment/{generation_index}", skel.persona_id), &prompt, gateway);
    let ctx = MockContext::Enrichment {
        skeleton: skel.clone(),
        generation_index,
    };
    let resp = gateway.complete(&req, Some(&ctx))?;
    Ok(EnrichedPersona {
        persona_id: skel.persona_id.clone(),
        skeleton: skel.clone(),
        narrative: resp.text,
        prompt_digest: prompt.digest(),
        model_id: req.model_id,
        generation_index,
    })
}

fn facet_label(f: FacetCode) -> String {
    format!("{f} {}", f.name().to_ascii_lowercase())
}

/// Domain and facet scores as a text block. Each line leads with the rounded
/// percentile, followed by the normed and raw scores.
pub fn trait_scores_block(result: &PersonalityResult) -> String {
    let mut out = String::from("Domains (percentile; normed score; raw score):\n");
    for t in Trait::ALL {
        let s = result.trait_score(t);
        out.push_str(&format!(
            "{}: {:.0} (normed {:.1}; raw {:.1})\n",
            t.name(),
            s.percentile,
            s.normed,
            s.raw
        ));
    }
    out.push_str("\nFacets (percentile; normed score; raw score):\n");
    for d in Domain::ALL {
        for (f, s) in result.facets.iter().filter(|(f, _)| f.domain == d) {
            out.push_str(&format!(
                "{}: {:.0} (normed {:.1}; raw {:.1})\n",
                facet_label(*f),
                s.percentile,
                s.normed,
                s.raw
            ));
        }
    }
    out.trim_end().to_string()
}

pub fn build_elicitation_prompt(
    tpl: &PromptTemplate,
    enriched: &EnrichedPersona,
    result: &PersonalityResult,
) -> Result<RenderedPrompt, PersonaError> {
    if enriched.persona_id != result.persona_id {
        return Err(PersonaError::PersonaResultMismatch {
            persona: enriched.persona_id.clone(),
            result: result.persona_id.clone(),
        });
    }
    let vars = BTreeMap::from([
        ("trait_definitions", TRAIT_DEFINITIONS.trim().to_string()),
        ("persona_narrative", enriched.narrative.trim().to_string()),
        ("trait_scores", trait_scores_block(result)),
    ]);
    Ok(tpl.render(&["trait_definitions", "persona_narrative", "trait_scores"], &vars)?)
}

pub fn elicit_deep_persona(
    gateway: &Gateway,
    tpl: &PromptTemplate,
    enriched: &EnrichedPersona,
    result: Option<&PersonalityResult>,
) -> Result<ElicitedPersona, PersonaError> {
    let result = result.ok_or_else(|| {
        PersonaError::MissingDependency(format!("no personality result for `{}`", enriched.persona_id))
    })?;
    let prompt = build_elicitation_prompt(tpl, enriched, result)?;
    let req = request(format!("{}/elicitation/0", enriched.persona_id), &prompt, gateway);
    let ctx = MockContext::Elicitation {
        skeleton: enriched.skeleton.clone(),
        scores: Trait::ALL.map(|t| result.trait_score(t).percentile),
    };
    let resp = gateway.complete(&req, Some(&ctx))?;
    Ok(ElicitedPersona {
        persona_id: enriched.persona_id.clone(),
        source_result: format!("score/{}", result.persona_id),
        narrative: resp.text,
        prompt_digest: prompt.digest(),
        model_id: req.model_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::gateway::{MockProfile, ProviderConfig};
    use crate::test_support::{enriched, result_with, skeleton};

    fn scripted(pairs: &[(&RenderedPrompt, &str)]) -> Gateway {
        let script = pairs
            .iter()
            .map(|(p, text)| (p.digest(), text.to_string()))
            .collect();
        Gateway::mock(
            ProviderConfig {
                retry_limit: 0,
                ..ProviderConfig::default()
            },
            MockProfile::scripted(script),
        )
        .unwrap()
    }

    #[test]
    fn enrichment_prompt_lists_fields() {
        let skel = skeleton("p1", 41, "Female");
        let p = build_enrichment_prompt(&assets::enrichment_template(), &skel).unwrap();
        assert!(p.user.contains("age: 41"));
        assert!(p.user.contains("sex: Female"));
        assert!(!p.user.contains("fnlwgt"));
        let again = build_enrichment_prompt(&assets::enrichment_template(), &skel).unwrap();
        assert_eq!(p.digest(), again.digest());
        let tpl = PromptTemplate::new("enrichment", 9, "Describe someone.");
        assert_eq!(
            build_enrichment_prompt(&tpl, &skel).unwrap_err(),
            TemplateError::UnresolvedPlaceholder("skeleton_fields".into())
        );
    }

    #[test]
    fn enrichment_stores_narrative_verbatim() {
        let skel = skeleton("p1", 41, "Female");
        let tpl = assets::enrichment_template();
        let prompt = build_enrichment_prompt(&tpl, &skel).unwrap();
        let text = "She is a devoted engineer…\n\n  with trailing space ";
        let gw = scripted(&[(&prompt, text)]);
        let a = enrich_persona(&gw, &tpl, &skel, 0).unwrap();
        let b = enrich_persona(&gw, &tpl, &skel, 1).unwrap();
        assert_eq!(a.narrative, text);
        assert_eq!(a.persona_id, b.persona_id);
        assert_ne!(a, b);
        assert_eq!(a.prompt_digest, prompt.digest());
    }

    #[test]
    fn enrichment_surfaces_gateway_errors() {
        let gw = scripted(&[]);
        let err = enrich_persona(&gw, &assets::enrichment_template(), &skeleton("p1", 30, "Male"), 0).unwrap_err();
        assert!(matches!(err, PersonaError::Gateway(GatewayError::UnscriptedPrompt(_))));
    }

    #[test]
    fn elicitation_prompt() {
        let e = enriched("p1");
        let mut result = result_with("p1", [50.0; 5]);
        result.domains.get_mut(&Domain::Extraversion).unwrap().percentile = 81.0;
        let p = build_elicitation_prompt(&assets::elicitation_template(), &e, &result).unwrap();
        let all = format!("{}\n{}", p.system, p.user);
        assert!(all.contains("Big Five trait definitions"));
        assert!(all.contains("extraversion: 81"));
        assert!(all.contains("She is a devoted engineer"));
        assert!(all.contains("E1 friendliness: 50"));
        let other = result_with("p2", [50.0; 5]);
        assert!(matches!(
            build_elicitation_prompt(&assets::elicitation_template(), &e, &other),
            Err(PersonaError::PersonaResultMismatch { .. })
        ));
    }

    #[test]
    fn elicitation_needs_result() {
        let gw = scripted(&[]);
        let err = elicit_deep_persona(&gw, &assets::elicitation_template(), &enriched("p1"), None).unwrap_err();
        assert!(matches!(err, PersonaError::MissingDependency(_)));
    }

    #[test]
    fn elicitation_stores_verbatim() {
        let e = enriched("p1");
        let r = result_with("p1", [60.0; 5]);
        let tpl = assets::elicitation_template();
        let prompt = build_elicitation_prompt(&tpl, &e, &r).unwrap();
        let gw = scripted(&[(&prompt, "A deep persona.")]);
        let out = elicit_deep_persona(&gw, &tpl, &e, Some(&r)).unwrap();
        assert_eq!(out.narrative, "A deep persona.");
        assert_eq!(out.source_result, "score/p1");
    }
}
