//! Age-binned trait curves and their distance to reference populations.

mod curve;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{PersonalityResult, ScaleScore};
use crate::traits::Trait;

pub use curve::{CurveRow, TraitCurveTable};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvaluationError {
    #[error("age {0} is outside every bin")]
    OutOfRange(u32),
    #[error("`{a}` and `{b}` share no age bins")]
    NoCommonBins { a: String, b: String },
    #[error("unknown reference `{0}` (expected bhps, gsoep or glm4)")]
    UnknownReference(String),
    #[error("curve table: {0}")]
    CurveInvalid(String),
}

/// An inclusive age range with its label, for example `20_29`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgeBin {
    pub label: String,
    pub low: u32,
    pub high: u32,
}

impl AgeBin {
    pub fn new(low: u32, high: u32) -> AgeBin {
        AgeBin {
            label: format!("{low}_{high}"),
            low,
            high,
        }
    }

    /// Parse a `low_high` label.
    pub fn from_label(label: &str) -> Option<AgeBin> {
        let (lo, hi) = label.trim().split_once(['_', '-'])?;
        let (low, high) = (lo.parse().ok()?, hi.parse().ok()?);
        (low <= high).then(|| AgeBin {
            label: label.trim().to_string(),
            low,
            high,
        })
    }

    pub fn contains(&self, age: u32) -> bool {
        (self.low..=self.high).contains(&age)
    }
}

/// The reference bins 16_19, 20_29, ..., 70_79, 80_85.
pub fn canonical_bins() -> Vec<AgeBin> {
    let mut bins = vec![AgeBin::new(16, 19)];
    bins.extend((2..=7).map(|d| AgeBin::new(d * 10, d * 10 + 9)));
    bins.push(AgeBin::new(80, 85));
    bins
}

/// Comparison key of a bin label. The open-ended top bins `80_84` and `80_85`
/// of the two panel studies share the slot `80_8x`.
pub fn bin_slot(label: &str) -> String {
    match label.trim() {
        "80_84" | "80_85" | "80-84" | "80-85" => "80_8x".to_string(),
        other => other.replace('-', "_"),
    }
}

pub fn assign_age_bin(age: u32, bins: &[AgeBin]) -> Result<&AgeBin, EvaluationError> {
    bins.iter()
        .find(|b| b.contains(age))
        .ok_or(EvaluationError::OutOfRange(age))
}

/// Which score of a result feeds the curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    #[default]
    Percentile,
    Normed,
    Raw,
}

impl ValueKind {
    pub fn pick(self, s: &ScaleScore) -> f64 {
        match self {
            ValueKind::Percentile => s.percentile,
            ValueKind::Normed => s.normed,
            ValueKind::Raw => s.raw,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Percentile => "percentile",
            ValueKind::Normed => "normed",
            ValueKind::Raw => "raw",
        }
    }
}

impl FromStr for ValueKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "percentile" => Ok(ValueKind::Percentile),
            "normed" => Ok(ValueKind::Normed),
            "raw" => Ok(ValueKind::Raw),
            other => Err(format!("unknown value kind `{other}`")),
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean of each trait per bin. Empty bins are omitted; personas whose age
/// falls outside every bin are counted in `excluded`.
pub fn trait_means_by_bin(
    results: &[(PersonalityResult, u32)],
    bins: &[AgeBin],
    kind: ValueKind,
    source: &str,
) -> TraitCurveTable {
    let mut sums: Vec<([f64; 5], usize)> = vec![([0.0; 5], 0); bins.len()];
    let mut excluded = 0;
    for (result, age) in results {
        let Some(idx) = bins.iter().position(|b| b.contains(*age)) else {
            excluded += 1;
            continue;
        };
        for t in Trait::ALL {
            sums[idx].0[t.index()] += kind.pick(result.trait_score(t));
        }
        sums[idx].1 += 1;
    }
    let rows = bins
        .iter()
        .zip(sums)
        .filter(|(_, (_, n))| *n > 0)
        .map(|(bin, (s, n))| CurveRow {
            label: bin.label.clone(),
            values: s.map(|v| v / n as f64),
            count: Some(n),
        })
        .collect();
    TraitCurveTable::new(source, rows).with_excluded(excluded)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub source_a: String,
    pub source_b: String,
    /// Slots compared, in age order.
    pub common_bins: Vec<String>,
    /// Root-mean-square difference per trait in curve order (E, A, C, N, O).
    pub per_trait_distance: [f64; 5],
    pub bin_count_used: usize,
}

impl DistanceReport {
    pub fn distance(&self, t: Trait) -> f64 {
        self.per_trait_distance[t.index()]
    }
}

/// Per-trait RMSE over the bins both curves share.
pub fn rmse_distance(a: &TraitCurveTable, b: &TraitCurveTable) -> Result<DistanceReport, EvaluationError> {
    rmse_distance_on(a, b, None)
}

/// As [`rmse_distance`], restricted to the bins of `filter` when given.
pub fn rmse_distance_on(
    a: &TraitCurveTable,
    b: &TraitCurveTable,
    filter: Option<&TraitCurveTable>,
) -> Result<DistanceReport, EvaluationError> {
    let mut common: Vec<(u32, String, [f64; 5], [f64; 5])> = Vec::new();
    for ra in a.rows() {
        let slot = bin_slot(&ra.label);
        if let Some(f) = filter {
            if f.row_by_slot(&slot).is_none() {
                continue;
            }
        }
        if let Some(rb) = b.row_by_slot(&slot) {
            common.push((ra.low_age(), slot, ra.values, rb.values));
        }
    }
    if common.is_empty() {
        return Err(EvaluationError::NoCommonBins {
            a: a.source().to_string(),
            b: b.source().to_string(),
        });
    }
    common.sort_by(|x, y| (x.0, &x.1).cmp(&(y.0, &y.1)));
    let k = common.len() as f64;
    let per_trait_distance = std::array::from_fn(|t| {
        let ss: f64 = common.iter().map(|(_, _, va, vb)| (va[t] - vb[t]).powi(2)).sum();
        (ss / k).sqrt()
    });
    Ok(DistanceReport {
        source_a: a.source().to_string(),
        source_b: b.source().to_string(),
        bin_count_used: common.len(),
        common_bins: common.into_iter().map(|c| c.1).collect(),
        per_trait_distance,
    })
}

pub const REFERENCES: [&str; 3] = ["bhps", "gsoep", "glm4"];

pub fn load_reference(name: &str) -> Result<TraitCurveTable, EvaluationError> {
    let text = match name.trim().to_ascii_lowercase().as_str() {
        "bhps" => crate::assets::REFERENCE_BHPS,
        "gsoep" => crate::assets::REFERENCE_GSOEP,
        "glm4" | "glm4" | "glm-4" => crate::assets::REFERENCE_GLM4_PAPER,
        _ => return Err(EvaluationError::UnknownReference(name.to_string())),
    };
    TraitCurveTable::from_csv(name.trim(), text)
}

/// Distance of `curve` to each reference. `filter` restricts the compared bins.
pub fn compare_curves(
    curve: &TraitCurveTable,
    references: &[TraitCurveTable],
    filter: Option<&TraitCurveTable>,
) -> Result<Vec<DistanceReport>, EvaluationError> {
    references
        .iter()
        .map(|r| rmse_distance_on(curve, r, filter))
        .collect()
}

/// Build the population curve, then measure it against each reference.
pub fn compare_population(
    results: &[(PersonalityResult, u32)],
    bins: &[AgeBin],
    kind: ValueKind,
    references: &[TraitCurveTable],
) -> Result<(TraitCurveTable, Vec<DistanceReport>), EvaluationError> {
    let curve = trait_means_by_bin(results, bins, kind, "population");
    let reports = compare_curves(&curve, references, None)?;
    Ok((curve, reports))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub trait_name: Trait,
    pub mean: f64,
    pub direction: Direction,
}

pub const DEFAULT_ANOMALY_THRESHOLD: f64 = 15.0;

/// Traits whose population mean (rows weighted by count when known) lies more
/// than `threshold` away from 50.
pub fn anomalies(curve: &TraitCurveTable, threshold: f64) -> Vec<Anomaly> {
    let Some(means) = curve.population_means() else {
        return Vec::new();
    };
    Trait::ALL
        .into_iter()
        .filter_map(|t| {
            let mean = means[t.index()];
            let direction = if mean > 50.0 + threshold {
                Direction::High
            } else if mean < 50.0 - threshold {
                Direction::Low
            } else {
                return None;
            };
            Some(Anomaly {
                trait_name: t,
                mean,
                direction,
            })
        })
        .collect()
}
