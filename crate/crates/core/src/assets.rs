//! Data assets shipped with the crate: item bank, norm tables, reference
//! curves, prompt templates. Everything except the census file is compiled in.

use std::path::PathBuf;

use crate::template::PromptTemplate;

pub const ITEM_BANK_120: &str = include_str!("../assets/items/ipip-neo-120.tsv");

pub const NORMS_IPIP_NEO_120: &str = include_str!("../assets/norms/ipip-neo-120/norms.tsv");
pub const PERCENTILES_IPIP_NEO_120: &str =
    include_str!("../assets/norms/ipip-neo-120/percentiles.tsv");
pub const NORMS_UNIT: &str = include_str!("../assets/norms/unit/norms.tsv");
pub const PERCENTILES_UNIT: &str = include_str!("../assets/norms/unit/percentiles.tsv");
pub const NORMS_MOCK_LATENT: &str = include_str!("../assets/norms/mock-latent/norms.tsv");
pub const PERCENTILES_MOCK_LATENT: &str =
    include_str!("../assets/norms/mock-latent/percentiles.tsv");

pub const REFERENCE_BHPS: &str = include_str!("../assets/references/bhps.csv");
pub const REFERENCE_GSOEP: &str = include_str!("../assets/references/gsoep.csv");
pub const REFERENCE_GLM4_PAPER: &str = include_str!("../assets/references/glm4.csv");

pub const TRAIT_DEFINITIONS: &str = include_str!("../assets/trait_definitions.md");

const ENRICHMENT_V1: &str = include_str!("../assets/templates/enrichment.v1.txt");
const QUIZ_V1: &str = include_str!("../assets/templates/quiz.v1.txt");
const ELICITATION_V1: &str = include_str!("../assets/templates/elicitation.v1.txt");

pub fn enrichment_template() -> PromptTemplate {
    PromptTemplate::new("enrichment", 1, ENRICHMENT_V1)
}

pub fn quiz_template() -> PromptTemplate {
    PromptTemplate::new("quiz", 1, QUIZ_V1)
}

pub fn elicitation_template() -> PromptTemplate {
    PromptTemplate::new("elicitation", 1, ELICITATION_V1)
}

/// Bundled template by id (`enrichment`, `quiz`, `elicitation`).
pub fn template(id: &str) -> Option<PromptTemplate> {
    match id {
        "enrichment" => Some(enrichment_template()),
        "quiz" => Some(quiz_template()),
        "elicitation" => Some(elicitation_template()),
        _ => None,
    }
}

/// Path of the bundled UCI Adult training file (32,561 rows).
pub fn adult_census_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("assets/census/adult.csv")
}
