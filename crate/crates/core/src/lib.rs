//! Census-grounded virtual populations.
//!
//! The crate samples "skeletal" personas from census microdata, enriches them
//! through a chat-completion provider, administers the IPIP-NEO-120 inventory,
//! scores the answers against cohort norms, and compares age-binned Big Five
//! curves of the simulated population with real-world reference tables.
//!
//! Every stage is persisted to an append-only [`store::RunStore`], and with the
//! [`gateway::mock`] provider a whole run is bit-reproducible from its manifest.

pub mod assets;
pub mod census;
pub mod digest;
pub mod evaluation;
pub mod gateway;
pub mod persona;
pub mod pipeline;
pub mod questionnaire;
pub mod report;
pub mod scoring;
pub mod store;
pub mod template;
pub mod traits;

pub use census::{CensusRecord, CensusTable, SamplePredicate, SkeletalPersona};
pub use evaluation::{AgeBin, DistanceReport, TraitCurveTable, ValueKind};
pub use gateway::{ChatRequest, ChatResponse, Gateway, GatewayError, ProviderConfig};
pub use persona::{ElicitedPersona, EnrichedPersona};
pub use questionnaire::{AnswerSheet, ItemChunk, LikertItem, ParseReport};
pub use scoring::{NormTable, PersonalityResult};
pub use store::{RunManifest, RunStore, Stage, StageRecord};
pub use traits::{Domain, FacetCode, Trait};

/// Version string recorded in run manifests.
pub const TOOL_VERSION: &str = concat!("vpop ", env!("CARGO_PKG_VERSION"));

#[cfg(test)]
pub(crate) mod test_support {
    use std::collections::BTreeMap;

    use crate::census::{CensusRecord, SkeletalPersona};
    use crate::persona::EnrichedPersona;
    use crate::scoring::{Cohort, PersonalityResult, ScaleScore};
    use crate::traits::{FacetCode, Trait};

    pub(crate) fn skeleton(id: &str, age: u32, sex: &str) -> SkeletalPersona {
        SkeletalPersona {
            persona_id: id.into(),
            record: CensusRecord {
                age,
                workclass: "Private".into(),
                fnlwgt: Some(100_000),
                education: "Bachelors".into(),
                education_num: 13,
                marital_status: "Never-married".into(),
                occupation: "Prof-specialty".into(),
                relationship: "Not-in-family".into(),
                race: "White".into(),
                sex: sex.into(),
                capital_gain: 0,
                capital_loss: 0,
                hours_per_week: 40,
                native_country: "United-States".into(),
                income_bracket: "<=50K".into(),
            },
            sampled_with_seed: 1,
            condition: None,
        }
    }

    pub(crate) fn enriched(id: &str) -> EnrichedPersona {
        EnrichedPersona {
            persona_id: id.into(),
            skeleton: skeleton(id, 41, "Female"),
            narrative: "She is a devoted engineer who spends weekends hiking.".into(),
            prompt_digest: "0".repeat(64),
            model_id: "mock".into(),
            generation_index: 0,
        }
    }

    /// A result whose domain raw, normed and percentile values all equal
    /// `values` (curve order) and whose facets all sit at 50.
    pub(crate) fn result_with(id: &str, values: [f64; 5]) -> PersonalityResult {
        let flat = |v: f64| ScaleScore {
            raw: v,
            normed: v,
            percentile: v,
        };
        PersonalityResult {
            persona_id: id.into(),
            cohort: Cohort::new("any", 40),
            facets: FacetCode::all().map(|f| (f, flat(50.0))).collect(),
            domains: Trait::ALL.iter().map(|t| (t.domain(), flat(values[t.index()]))).collect(),
            completeness: FacetCode::all().map(|f| (f, 4)).collect::<BTreeMap<_, _>>(),
            norm_version: "unit".into(),
        }
    }
}
