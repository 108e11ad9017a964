//! Census microdata (UCI Adult layout) and skeletal persona sampling.

mod predicate;
mod sampler;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

pub use predicate::{Comparator, Conjunct, Literal, SamplePredicate};
pub use sampler::{sample_conditional, sample_random, SamplingOptions, SkeletalPersona};

#[derive(Debug, Error)]
pub enum CensusError {
    #[error("census file not found: {0}")]
    FileMissing(String),
    #[error("census file unreadable: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema mismatch: expected 14 attribute columns (optionally plus fnlwgt), found {found}")]
    SchemaMismatch { found: usize },
    #[error("census table has no valid rows ({skipped} malformed rows skipped)")]
    EmptyTable { skipped: usize },
    #[error("no census row satisfies `{0}`")]
    EmptySupport(String),
    #[error("invalid predicate: {0}")]
    InvalidPredicate(String),
    #[error("weighted sampling requested but the table has no fnlwgt column")]
    WeightsUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Integer,
    Categorical,
}

/// Adult columns in file order. `fnlwgt` is optional in input files.
pub const ADULT_COLUMNS: [(&str, ColumnKind); 15] = [
    ("age", ColumnKind::Integer),
    ("workclass", ColumnKind::Categorical),
    ("fnlwgt", ColumnKind::Integer),
    ("education", ColumnKind::Categorical),
    ("education_num", ColumnKind::Integer),
    ("marital_status", ColumnKind::Categorical),
    ("occupation", ColumnKind::Categorical),
    ("relationship", ColumnKind::Categorical),
    ("race", ColumnKind::Categorical),
    ("sex", ColumnKind::Categorical),
    ("capital_gain", ColumnKind::Integer),
    ("capital_loss", ColumnKind::Integer),
    ("hours_per_week", ColumnKind::Integer),
    ("native_country", ColumnKind::Categorical),
    ("income_bracket", ColumnKind::Categorical),
];

/// Placeholder stored for "?" markers in categorical columns.
pub const UNKNOWN: &str = "Unknown";

/// One census row. Categorical "?" markers are kept as [`UNKNOWN`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CensusRecord {
    pub age: u32,
    pub workclass: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fnlwgt: Option<u64>,
    pub education: String,
    pub education_num: u32,
    pub marital_status: String,
    pub occupation: String,
    pub relationship: String,
    pub race: String,
    pub sex: String,
    pub capital_gain: u64,
    pub capital_loss: u64,
    pub hours_per_week: u32,
    pub native_country: String,
    pub income_bracket: String,
}

/// A column value borrowed from a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldValue<'a> {
    Int(i64),
    Cat(&'a str),
}

impl fmt::Display for FieldValue<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Int(v) => write!(f, "{v}"),
            FieldValue::Cat(v) => f.write_str(v),
        }
    }
}

impl CensusRecord {
    /// Column lookup by schema name. Hyphenated spellings are accepted.
    pub fn value(&self, column: &str) -> Option<FieldValue<'_>> {
        let v = match canonical_column(column)? {
            "age" => FieldValue::Int(i64::from(self.age)),
            "workclass" => FieldValue::Cat(&self.workclass),
            "fnlwgt" => FieldValue::Int(self.fnlwgt? as i64),
            "education" => FieldValue::Cat(&self.education),
            "education_num" => FieldValue::Int(i64::from(self.education_num)),
            "marital_status" => FieldValue::Cat(&self.marital_status),
            "occupation" => FieldValue::Cat(&self.occupation),
            "relationship" => FieldValue::Cat(&self.relationship),
            "race" => FieldValue::Cat(&self.race),
            "sex" => FieldValue::Cat(&self.sex),
            "capital_gain" => FieldValue::Int(self.capital_gain as i64),
            "capital_loss" => FieldValue::Int(self.capital_loss as i64),
            "hours_per_week" => FieldValue::Int(i64::from(self.hours_per_week)),
            "native_country" => FieldValue::Cat(&self.native_country),
            "income_bracket" => FieldValue::Cat(&self.income_bracket),
            _ => return None,
        };
        Some(v)
    }

    /// Attribute lines (`name: value`) in schema order, skipping `fnlwgt`.
    pub fn labeled_fields(&self) -> Vec<(&'static str, String)> {
        ADULT_COLUMNS
            .iter()
            .filter(|(name, _)| *name != "fnlwgt")
            .filter_map(|(name, _)| self.value(name).map(|v| (*name, v.to_string())))
            .collect()
    }
}

/// Maps `education-num` / `Education_Num` style spellings onto schema names.
pub fn canonical_column(column: &str) -> Option<&'static str> {
    let norm = column.trim().to_ascii_lowercase().replace(['-', ' '], "_");
    let norm = match norm.as_str() {
        "income" | "income_per_year" | "class" => "income_bracket",
        other => other,
    };
    ADULT_COLUMNS
        .iter()
        .map(|(name, _)| *name)
        .find(|name| *name == norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeaderMode {
    /// Treat the first line as a header when its first field is not an integer.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub header: HeaderMode,
}

/// An immutable, loaded census table.
#[derive(Debug, Clone)]
pub struct CensusTable {
    rows: Vec<CensusRecord>,
    schema: Vec<(&'static str, ColumnKind)>,
    source_digest: String,
    skipped_rows: usize,
}

impl CensusTable {
    pub fn rows(&self) -> &[CensusRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_schema(&self) -> &[(&'static str, ColumnKind)] {
        &self.schema
    }

    pub fn column_kind(&self, column: &str) -> Option<ColumnKind> {
        let name = canonical_column(column)?;
        self.schema
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, kind)| *kind)
    }

    pub fn has_weights(&self) -> bool {
        self.column_kind("fnlwgt").is_some()
    }

    /// SHA-256 of the source bytes.
    pub fn source_digest(&self) -> &str {
        &self.source_digest
    }

    pub fn skipped_rows(&self) -> usize {
        self.skipped_rows
    }

    /// Observed values of a categorical column.
    pub fn categories(&self, column: &str) -> BTreeSet<&str> {
        self.rows
            .iter()
            .filter_map(|r| match r.value(column) {
                Some(FieldValue::Cat(v)) => Some(v),
                _ => None,
            })
            .collect()
    }

    /// Parse comma-separated Adult data. Rows that fail to parse or violate
    /// the record invariants are skipped and counted.
    pub fn parse(text: &str, opts: &LoadOptions) -> Result<CensusTable, CensusError> {
        let source_digest = sha256_hex(text.as_bytes());
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());

        let records = reader.records();
        let mut schema: Option<Vec<(&'static str, ColumnKind)>> = None;
        let mut rows = Vec::new();
        let mut skipped = 0usize;
        let mut first = true;

        for next in records {
            let Ok(fields) = next else {
                skipped += 1;
                continue;
            };
            if fields.iter().all(|f| f.is_empty()) {
                continue;
            }
            if first {
                first = false;
                let width = fields.len();
                let with_weight = match width {
                    15 => true,
                    14 => false,
                    found => return Err(CensusError::SchemaMismatch { found }),
                };
                schema = Some(
                    ADULT_COLUMNS
                        .iter()
                        .copied()
                        .filter(|(name, _)| with_weight || *name != "fnlwgt")
                        .collect(),
                );
                let is_header = match opts.header {
                    HeaderMode::Present => true,
                    HeaderMode::Absent => false,
                    HeaderMode::Auto => fields.get(0).is_some_and(|f| f.parse::<i64>().is_err()),
                };
                if is_header {
                    continue;
                }
            }
            let schema = schema.as_ref().expect("schema set on first row");
            match parse_row(&fields, schema) {
                Some(rec) => rows.push(rec),
                None => skipped += 1,
            }
        }

        if rows.is_empty() {
            return Err(CensusError::EmptyTable { skipped });
        }
        Ok(CensusTable {
            rows,
            schema: schema.expect("non-empty table has a schema"),
            source_digest,
            skipped_rows: skipped,
        })
    }

    /// Build a table from in-memory records (tests, synthetic fixtures).
    pub fn from_records(rows: Vec<CensusRecord>) -> Result<CensusTable, CensusError> {
        if rows.is_empty() {
            return Err(CensusError::EmptyTable { skipped: 0 });
        }
        let with_weight = rows.iter().all(|r| r.fnlwgt.is_some());
        let serialized = serde_json::to_vec(&rows).expect("records serialize");
        Ok(CensusTable {
            schema: ADULT_COLUMNS
                .iter()
                .copied()
                .filter(|(name, _)| with_weight || *name != "fnlwgt")
                .collect(),
            source_digest: sha256_hex(&serialized),
            rows,
            skipped_rows: 0,
        })
    }
}

fn parse_row(fields: &csv::StringRecord, schema: &[(&'static str, ColumnKind)]) -> Option<CensusRecord> {
    if fields.len() != schema.len() {
        return None;
    }
    let get = |name: &str| -> Option<&str> {
        schema
            .iter()
            .position(|(n, _)| *n == name)
            .and_then(|i| fields.get(i))
    };
    let int = |name: &str| -> Option<u64> { get(name)?.parse::<u64>().ok() };
    let cat = |name: &str| -> Option<String> {
        let raw = get(name)?;
        if raw.is_empty() {
            return None;
        }
        if raw == "?" {
            return Some(UNKNOWN.to_string());
        }
        Some(raw.to_string())
    };

    let age = u32::try_from(int("age")?).ok()?;
    let hours = u32::try_from(int("hours_per_week")?).ok()?;
    if age < 16 || !(1..=99).contains(&hours) {
        return None;
    }
    let fnlwgt = match get("fnlwgt") {
        Some(_) => Some(int("fnlwgt")?),
        None => None,
    };
    // The Adult test split writes labels as ">50K." with a trailing period.
    let mut income = cat("income_bracket")?;
    if income.ends_with('.') {
        income.pop();
    }

    Some(CensusRecord {
        age,
        workclass: cat("workclass")?,
        fnlwgt,
        education: cat("education")?,
        education_num: u32::try_from(int("education_num")?).ok()?,
        marital_status: cat("marital_status")?,
        occupation: cat("occupation")?,
        relationship: cat("relationship")?,
        race: cat("race")?,
        sex: cat("sex")?,
        capital_gain: int("capital_gain")?,
        capital_loss: int("capital_loss")?,
        hours_per_week: hours,
        native_country: cat("native_country")?,
        income_bracket: income,
    })
}

/// Load a census file from disk.
pub fn load_census(path: &Path, opts: &LoadOptions) -> Result<CensusTable, CensusError> {
    if !path.exists() {
        return Err(CensusError::FileMissing(path.display().to_string()));
    }
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8_lossy(&bytes);
    CensusTable::parse(&text, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "age,workclass,fnlwgt,education,education-num,marital-status,occupation,relationship,race,sex,capital-gain,capital-loss,hours-per-week,native-country,income-per-year\n";
    const ROW: &str = "39,State-gov,77516,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,2174,0,40,United-States,<=50K\n";

    #[test]
    fn header_only_is_empty() {
        let err = CensusTable::parse(HEADER, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CensusError::EmptyTable { skipped: 0 }));
    }

    #[test]
    fn bad_integer_is_skipped() {
        let text = format!("{HEADER}{ROW}abc,State-gov,77516,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,0,0,40,United-States,<=50K\n");
        let table = CensusTable::parse(&text, &LoadOptions::default()).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.skipped_rows(), 1);
    }

    #[test]
    fn wrong_width_is_schema_mismatch() {
        let err = CensusTable::parse("1,2,3\n", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CensusError::SchemaMismatch { found: 3 }));
    }

    #[test]
    fn uci_spacing_and_unknowns() {
        let text = "25, ?, 226802, 11th, 7, Never-married, ?, Own-child, Black, Male, 0, 0, 40, United-States, <=50K.\n";
        let table = CensusTable::parse(text, &LoadOptions::default()).unwrap();
        let r = &table.rows()[0];
        assert_eq!(r.workclass, UNKNOWN);
        assert_eq!(r.occupation, UNKNOWN);
        assert_eq!(r.income_bracket, "<=50K");
        assert_eq!(r.fnlwgt, Some(226802));
    }

    #[test]
    fn fourteen_columns_without_weight() {
        let text = "39,State-gov,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,2174,0,40,United-States,<=50K\n";
        let table = CensusTable::parse(text, &LoadOptions::default()).unwrap();
        assert!(!table.has_weights());
        assert_eq!(table.rows()[0].fnlwgt, None);
        assert_eq!(table.column_schema().len(), 14);
    }

    #[test]
    fn invariant_violations_skipped() {
        let text = format!(
            "{HEADER}{ROW}15,State-gov,1,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,0,0,40,United-States,<=50K\n\
             30,State-gov,1,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,0,0,0,United-States,<=50K\n\
             30,State-gov,1,Bachelors,13,Never-married,Adm-clerical,Not-in-family,White,Male,-5,0,40,United-States,<=50K\n"
        );
        let table = CensusTable::parse(&text, &LoadOptions::default()).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.skipped_rows(), 3);
    }

    #[test]
    fn forced_header_modes() {
        let table = CensusTable::parse(
            &format!("{ROW}{ROW}"),
            &LoadOptions { header: HeaderMode::Present },
        )
        .unwrap();
        assert_eq!(table.len(), 1);
    }

    #[test]
    fn missing_file() {
        let err = load_census(Path::new("/nonexistent/adult.csv"), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, CensusError::FileMissing(_)));
    }

    #[test]
    fn column_aliases() {
        assert_eq!(canonical_column("education-num"), Some("education_num"));
        assert_eq!(canonical_column("Income-per-year"), Some("income_bracket"));
        assert_eq!(canonical_column("locality"), None);
    }
}
