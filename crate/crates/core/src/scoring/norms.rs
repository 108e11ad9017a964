use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ScoringError;
use crate::digest::sha256_hex;
use crate::traits::{Domain, FacetCode};

/// Sex key of a norm cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormSex {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "any")]
    Any,
}

impl NormSex {
    /// `Male`/`M` and `Female`/`F` in any case; everything else is `Any`.
    pub fn from_label(label: &str) -> NormSex {
        match label.trim().to_ascii_lowercase().as_str() {
            "m" | "male" | "man" => NormSex::Male,
            "f" | "female" | "woman" => NormSex::Female,
            _ => NormSex::Any,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            NormSex::Male => "M",
            NormSex::Female => "F",
            NormSex::Any => "any",
        }
    }
}

/// The cohort a persona is normed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub sex: NormSex,
    pub age: u32,
}

impl Cohort {
    pub fn new(sex: &str, age: u32) -> Cohort {
        Cohort {
            sex: NormSex::from_label(sex),
            age,
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} age {}", self.sex.code(), self.age)
    }
}

/// A domain (`N`) or facet (`N1`) scale code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scale {
    Domain(Domain),
    Facet(FacetCode),
}

impl Scale {
    pub fn parse(code: &str) -> Option<Scale> {
        let code = code.trim();
        let mut chars = code.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Domain::from_code(c).map(Scale::Domain),
            _ => code.parse().ok().map(Scale::Facet),
        }
    }

    pub fn all() -> impl Iterator<Item = Scale> {
        Domain::ALL
            .into_iter()
            .map(Scale::Domain)
            .chain(FacetCode::all().map(Scale::Facet))
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Domain(d) => write!(f, "{}", d.code()),
            Scale::Facet(fc) => write!(f, "{fc}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEntry {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct CohortNorms {
    sex: NormSex,
    age_low: u32,
    age_high: u32,
    scales: BTreeMap<Scale, NormEntry>,
}

/// Piecewise-linear map from normed score to percentile. Outside the
/// breakpoint range the end values apply; results are clamped to [1, 99].
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileMap {
    points: Vec<(f64, f64)>,
}

impl PercentileMap {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<PercentileMap, ScoringError> {
        if points.is_empty() {
            return Err(ScoringError::NormInvalid("empty percentile map".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(ScoringError::NormInvalid("non-finite percentile breakpoint".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ScoringError::NormInvalid(format!("duplicate breakpoint {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(ScoringError::NormInvalid(format!(
                    "percentile map decreases between {} and {}",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(PercentileMap { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn percentile(&self, normed: f64) -> f64 {
        let pts = &self.points;
        let y = if normed.is_nan() || normed <= pts[0].0 {
            pts[0].1
        } else if normed >= pts[pts.len() - 1].0 {
            pts[pts.len() - 1].1
        } else {
            let i = pts.partition_point(|p| p.0 <= normed);
            let (x0, y0) = pts[i - 1];
            let (x1, y1) = pts[i];
            y0 + (y1 - y0) * (normed - x0) / (x1 - x0)
        };
        y.clamp(1.0, 99.0)
    }
}

/// Cohort means and SDs per scale plus a percentile map.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTable {
    version: String,
    cohorts: Vec<CohortNorms>,
    percentiles: PercentileMap,
    digest: String,
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').map(str::trim).collect()))
        }
    })
}

impl NormTable {
    /// Parse a norms file (`sex age_low age_high scale mean sd`, tab
    /// separated) and a percentile file (`scale normed percentile`). The
    /// percentile file may only use scale `*`, which applies to every scale.
    pub fn parse(version: &str, norms: &str, percentiles: &str) -> Result<NormTable, ScoringError> {
        let bad = |line: usize, msg: String| ScoringError::NormInvalid(format!("norms line {line}: {msg}"));
        let mut cohorts: Vec<CohortNorms> = Vec::new();
        for (line, f) in data_lines(norms) {
            if f.len() != 6 {
                return Err(bad(line, format!("expected 6 fields, found {}", f.len())));
            }
            let sex = match f[0] {
                "M" => NormSex::Male,
                "F" => NormSex::Female,
                "any" => NormSex::Any,
                other => return Err(bad(line, format!("unknown sex `{other}`"))),
            };
            let num = |s: &str, what: &str| -> Result<f64, ScoringError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(line, format!("bad {what} `{s}`")))
            };
            let age_low: u32 = f[1].parse().map_err(|_| bad(line, "bad age_low".into()))?;
            let age_high: u32 = f[2].parse().map_err(|_| bad(line, "bad age_high".into()))?;
            if age_low > age_high {
                return Err(bad(line, "age_low above age_high".into()));
            }
            let scale = Scale::parse(f[3]).ok_or_else(|| bad(line, format!("unknown scale `{}`", f[3])))?;
            let mean = num(f[4], "mean")?;
            let sd = num(f[5], "sd")?;
            if sd <= 0.0 {
                return Err(bad(line, format!("sd must be positive, got {sd}")));
            }
            let idx = match cohorts
                .iter()
                .position(|c| c.sex == sex && c.age_low == age_low && c.age_high == age_high)
            {
                Some(i) => i,
                None => {
                    if cohorts
                        .iter()
                        .any(|c| c.sex == sex && c.age_low <= age_high && age_low <= c.age_high)
                    {
                        return Err(bad(line, "overlapping age bands".into()));
                    }
                    cohorts.push(CohortNorms {
                        sex,
                        age_low,
                        age_high,
                        scales: BTreeMap::new(),
                    });
                    cohorts.len() - 1
                }
            };
            if cohorts[idx].scales.insert(scale, NormEntry { mean, sd }).is_some() {
                return Err(bad(line, format!("duplicate scale {scale}")));
            }
        }
        if cohorts.is_empty() {
            return Err(ScoringError::NormInvalid("norm table has no cohorts".into()));
        }
        for c in &cohorts {
            if let Some(missing) = Scale::all().find(|s| !c.scales.contains_key(s)) {
                return Err(ScoringError::NormInvalid(format!(
                    "cohort {} {}-{} lacks scale {missing}",
                    c.sex.code(),
                    c.age_low,
                    c.age_high
                )));
            }
        }

        let mut points = Vec::new();
        for (line, f) in data_lines(percentiles) {
            let badp = |msg: &str| ScoringError::NormInvalid(format!("percentile line {line}: {msg}"));
            if f.len() != 3 {
                return Err(badp("expected 3 fields"));
            }
            if f[0] != "*" {
                return Err(badp("only the `*` scale is supported"));
            }
            let x: f64 = f[1].parse().map_err(|_| badp("bad normed value"))?;
            let y: f64 = f[2].parse().map_err(|_| badp("bad percentile"))?;
            if !(1.0..=99.0).contains(&y) {
                return Err(badp("percentile outside [1, 99]"));
            }
            points.push((x, y));
        }
        let percentiles = PercentileMap::new(points)?;
        let digest = sha256_hex(format!("{version}\0{norms}\0{percentiles:?}").as_bytes());
        Ok(NormTable {
            version: version.to_string(),
            cohorts,
            percentiles,
            digest,
        })
    }

    /// Bundled tables: `ipip-neo-120`, `unit`, `mock-latent`.
    pub fn bundled(name: &str) -> Option<NormTable> {
        use crate::assets::*;
        let (norms, pct) = match name {
            "ipip-neo-120" => (NORMS_IPIP_NEO_120, PERCENTILES_IPIP_NEO_120),
            "unit" => (NORMS_UNIT, PERCENTILES_UNIT),
            "mock-latent" => (NORMS_MOCK_LATENT, PERCENTILES_MOCK_LATENT),
            _ => return None,
        };
        Some(NormTable::parse(name, norms, pct).expect("bundled norm table is valid"))
    }

    pub const BUNDLED: [&'static str; 3] = ["ipip-neo-120", "unit", "mock-latent"];

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn percentile_map(&self) -> &PercentileMap {
        &self.percentiles
    }

    fn cohort_norms(&self, cohort: &Cohort) -> Result<&CohortNorms, ScoringError> {
        let find = |sex: NormSex| {
            self.cohorts
                .iter()
                .find(|c| c.sex == sex && (c.age_low..=c.age_high).contains(&cohort.age))
        };
        find(cohort.sex)
            .or_else(|| find(NormSex::Any))
            .ok_or_else(|| ScoringError::CohortMissing(cohort.to_string()))
    }

    pub fn entry(&self, scale: Scale, cohort: &Cohort) -> Result<NormEntry, ScoringError> {
        Ok(self.cohort_norms(cohort)?.scales[&scale])
    }

    /// `(normed, percentile)` with normed = 50 + 10 (raw - mean) / sd.
    pub fn normalize(&self, scale: Scale, raw: f64, cohort: &Cohort) -> Result<(f64, f64), ScoringError> {
        let e = self.entry(scale, cohort)?;
        let normed = 50.0 + 10.0 * (raw - e.mean) / e.sd;
        Ok((normed, self.percentiles.percentile(normed)))
    }
}
