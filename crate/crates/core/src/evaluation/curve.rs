use serde::{Deserialize, Serialize};

use super::{bin_slot, AgeBin, EvaluationError};
use crate::traits::Trait;

const HEADER: [&str; 6] = [
    "age_range",
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "neuroticism",
    "openness",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub label: String,
    /// Trait means in curve order (E, A, C, N, O).
    pub values: [f64; 5],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

impl CurveRow {
    pub fn new(label: &str, values: [f64; 5]) -> CurveRow {
        CurveRow {
            label: label.to_string(),
            values,
            count: None,
        }
    }

    pub fn low_age(&self) -> u32 {
        AgeBin::from_label(&self.label).map_or(u32::MAX, |b| b.low)
    }

    pub fn value(&self, t: Trait) -> f64 {
        self.values[t.index()]
    }
}

/// Age bin by five trait means. Rows are kept in age order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraitCurveTable {
    source: String,
    rows: Vec<CurveRow>,
    #[serde(default)]
    excluded: usize,
}

impl TraitCurveTable {
    pub fn new(source: &str, mut rows: Vec<CurveRow>) -> TraitCurveTable {
        rows.sort_by(|a, b| (a.low_age(), &a.label).cmp(&(b.low_age(), &b.label)));
        TraitCurveTable {
            source: source.to_string(),
            rows,
            excluded: 0,
        }
    }

    pub fn with_excluded(mut self, excluded: usize) -> TraitCurveTable {
        self.excluded = excluded;
        self
    }

    pub fn with_source(mut self, source: &str) -> TraitCurveTable {
        self.source = source.to_string();
        self
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn rows(&self) -> &[CurveRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Personas left out because their age fits no bin.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn row(&self, label: &str) -> Option<&CurveRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn row_by_slot(&self, slot: &str) -> Option<&CurveRow> {
        self.rows.iter().find(|r| bin_slot(&r.label) == slot)
    }

    pub fn total_count(&self) -> usize {
        self.rows.iter().filter_map(|r| r.count).sum()
    }

    /// Mean of each trait across rows, weighted by row counts when every row
    /// has one.
    pub fn population_means(&self) -> Option<[f64; 5]> {
        if self.rows.is_empty() {
            return None;
        }
        let weights: Vec<f64> = if self.rows.iter().all(|r| r.count.is_some()) {
            self.rows.iter().map(|r| r.count.unwrap_or(0) as f64).collect()
        } else {
            vec![1.0; self.rows.len()]
        };
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        Some(std::array::from_fn(|t| {
            self.rows.iter().zip(&weights).map(|(r, w)| r.values[t] * w).sum::<f64>() / total
        }))
    }

    /// CSV with header `age_range,extraversion,...,openness`, plus a trailing
    /// `n` column when rows carry persona counts.
    pub fn to_csv(&self) -> String {
        let with_counts = self.rows.iter().any(|r| r.count.is_some());
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header: Vec<&str> = HEADER.to_vec();
        if with_counts {
            header.push("n");
        }
        w.write_record(&header).expect("write to memory");
        for row in &self.rows {
            let mut rec = vec![row.label.clone()];
            rec.extend(row.values.iter().map(|v| v.to_string()));
            if with_counts {
                rec.push(row.count.map(|n| n.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).expect("write to memory");
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv output is UTF-8")
    }

    pub fn from_csv(source: &str, text: &str) -> Result<TraitCurveTable, EvaluationError> {
        let bad = |msg: String| EvaluationError::CurveInvalid(msg);
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let with_counts = match header.len() {
            6 => false,
            7 if header[6] == "n" || header[6] == "count" => true,
            _ => return Err(bad(format!("unexpected header {header:?}"))),
        };
        if header[..6] != HEADER {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let mut rows: Vec<CurveRow> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| bad(format!("line {line}: {e}")))?;
            if rec.len() != header.len() {
                return Err(bad(format!("line {line}: expected {} fields", header.len())));
            }
            let label = rec[0].to_string();
            if AgeBin::from_label(&label).is_none() {
                return Err(bad(format!("line {line}: bad age range `{label}`")));
            }
            if rows.iter().any(|r| bin_slot(&r.label) == bin_slot(&label)) {
                return Err(bad(format!("line {line}: duplicate age range `{label}`")));
            }
            let mut values = [0.0; 5];
            for (k, v) in values.iter_mut().enumerate() {
                *v = rec[k + 1]
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| bad(format!("line {line}: bad value `{}`", &rec[k + 1])))?;
            }
            let count = if with_counts && !rec[6].is_empty() {
                Some(
                    rec[6]
                        .parse()
                        .map_err(|_| bad(format!("line {line}: bad count `{}`", &rec[6])))?,
                )
            } else {
                None
            };
            rows.push(CurveRow { label, values, count });
        }
        Ok(TraitCurveTable::new(source, rows))
    }
}
