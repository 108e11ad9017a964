//! Big Five domains, facets, and the trait order used by curve tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Scoring domain, in the order the IPIP-NEO item bank cycles through them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "N")]
    Neuroticism,
    #[serde(rename = "E")]
    Extraversion,
    #[serde(rename = "O")]
    Openness,
    #[serde(rename = "A")]
    Agreeableness,
    #[serde(rename = "C")]
    Conscientiousness,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Neuroticism,
        Domain::Extraversion,
        Domain::Openness,
        Domain::Agreeableness,
        Domain::Conscientiousness,
    ];

    pub fn code(self) -> char {
        match self {
            Domain::Neuroticism => 'N',
            Domain::Extraversion => 'E',
            Domain::Openness => 'O',
            Domain::Agreeableness => 'A',
            Domain::Conscientiousness => 'C',
        }
    }

    pub fn from_code(c: char) -> Option<Domain> {
        match c.to_ascii_uppercase() {
            'N' => Some(Domain::Neuroticism),
            'E' => Some(Domain::Extraversion),
            'O' => Some(Domain::Openness),
            'A' => Some(Domain::Agreeableness),
            'C' => Some(Domain::Conscientiousness),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        self.as_trait().name()
    }

    pub fn as_trait(self) -> Trait {
        match self {
            Domain::Neuroticism => Trait::Neuroticism,
            Domain::Extraversion => Trait::Extraversion,
            Domain::Openness => Trait::Openness,
            Domain::Agreeableness => Trait::Agreeableness,
            Domain::Conscientiousness => Trait::Conscientiousness,
        }
    }

    /// Facet names in facet-index order (1..=6).
    pub fn facet_names(self) -> [&'static str; 6] {
        match self {
            Domain::Neuroticism => [
                "anxiety",
                "anger",
                "depression",
                "self_consciousness",
                "immoderation",
                "vulnerability",
            ],
            Domain::Extraversion => [
                "friendliness",
                "gregariousness",
                "assertiveness",
                "activity_level",
                "excitement_seeking",
                "cheerfulness",
            ],
            Domain::Openness => [
                "imagination",
                "artistic_interests",
                "emotionality",
                "adventurousness",
                "intellect",
                "liberalism",
            ],
            Domain::Agreeableness => [
                "trust",
                "morality",
                "altruism",
                "cooperation",
                "modesty",
                "sympathy",
            ],
            Domain::Conscientiousness => [
                "self_efficacy",
                "orderliness",
                "dutifulness",
                "achievement_striving",
                "self_discipline",
                "cautiousness",
            ],
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The trait order of age-binned curve tables and CSV exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trait {
    Extraversion,
    Agreeableness,
    Conscientiousness,
    Neuroticism,
    Openness,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Extraversion,
        Trait::Agreeableness,
        Trait::Conscientiousness,
        Trait::Neuroticism,
        Trait::Openness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trait::Extraversion => "extraversion",
            Trait::Agreeableness => "agreeableness",
            Trait::Conscientiousness => "conscientiousness",
            Trait::Neuroticism => "neuroticism",
            Trait::Openness => "openness",
        }
    }

    /// Position in [`Trait::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn domain(self) -> Domain {
        match self {
            Trait::Extraversion => Domain::Extraversion,
            Trait::Agreeableness => Domain::Agreeableness,
            Trait::Conscientiousness => Domain::Conscientiousness,
            Trait::Neuroticism => Domain::Neuroticism,
            Trait::Openness => Domain::Openness,
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trait {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Trait::ALL
            .into_iter()
            .find(|t| t.name() == lower || (lower.len() == 1 && t.domain().code().to_ascii_lowercase().to_string() == lower))
            .ok_or_else(|| format!("unknown trait `{s}`"))
    }
}

/// One of the 30 facets, e.g. `N1` (anxiety) or `C6` (cautiousness).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FacetCode {
    pub domain: Domain,
    /// 1..=6
    pub index: u8,
}

impl FacetCode {
    pub fn new(domain: Domain, index: u8) -> Option<FacetCode> {
        (1..=6).contains(&index).then_some(FacetCode { domain, index })
    }

    /// All 30 facets, grouped by domain in [`Domain::ALL`] order.
    pub fn all() -> impl Iterator<Item = FacetCode> {
        Domain::ALL
            .into_iter()
            .flat_map(|domain| (1..=6).map(move |index| FacetCode { domain, index }))
    }

    pub fn name(self) -> &'static str {
        self.domain.facet_names()[usize::from(self.index - 1)]
    }
}

impl fmt::Display for FacetCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.domain.code(), self.index)
    }
}

impl FromStr for FacetCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut chars = s.chars();
        let domain = chars
            .next()
            .and_then(Domain::from_code)
            .ok_or_else(|| format!("bad facet code `{s}`"))?;
        let index: u8 = chars
            .as_str()
            .parse()
            .map_err(|_| format!("bad facet code `{s}`"))?;
        FacetCode::new(domain, index).ok_or_else(|| format!("bad facet code `{s}`"))
    }
}

impl Serialize for FacetCode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FacetCode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
