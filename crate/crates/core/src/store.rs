//! Append-only run directory.
//!
//! ```text
//! <run>/manifest.json        written once, before anything else
//! <run>/<stage>.jsonl        one record per line
//! <run>/transcript.jsonl     every provider attempt
//! <run>/failures.jsonl       personas that failed a stage
//! <run>/FINALIZED            digests of the stage files; the run is read-only afterwards
//! <run>/report/              emitted reports
//! ```
//!
//! Each line is `<json>\t<first 16 hex digits of sha256(json)>`. A line whose
//! checksum does not match (for example one cut short by a crash) is reported
//! and skipped by readers. Records carry a per-stage sequence number instead
//! of a timestamp so that a replayed run writes byte-identical stage files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::digest::sha256_hex;

/// Version of the line and record layout written by this module.
pub const RECORD_FORMAT_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const FINALIZED: &str = "FINALIZED";
const TRANSCRIPT: &str = "transcript.jsonl";
const FAILURES: &str = "failures.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cannot write to {path}: {reason}")]
    PathUnwritable { path: String, reason: String },
    #[error("a run already exists at {0} (use resume to continue it)")]
    RunExists(String),
    #[error("run at {0} is finalized and read-only")]
    FinalizedRun(String),
    #[error("{0} is not a run directory (no manifest)")]
    NotARun(String),
    #[error("manifest invalid: {0}")]
    ManifestInvalid(String),
    #[error("serialization failed: {0}")]
    SerializationFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Skeleton,
    Enrichment,
    QuizTranscript,
    AnswerSheet,
    Score,
    Elicitation,
    Curve,
    Distance,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Skeleton,
        Stage::Enrichment,
        Stage::QuizTranscript,
        Stage::AnswerSheet,
        Stage::Score,
        Stage::Elicitation,
        Stage::Curve,
        Stage::Distance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Skeleton => "skeleton",
            Stage::Enrichment => "enrichment",
            Stage::QuizTranscript => "quiz_transcript",
            Stage::AnswerSheet => "answer_sheet",
            Stage::Score => "score",
            Stage::Elicitation => "elicitation",
            Stage::Curve => "curve",
            Stage::Distance => "distance",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.name())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s.trim())
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    /// Position within the stage file, starting at 0.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona_id: Option<String>,
    /// Idempotence key, unique within the stage.
    pub key: String,
    pub payload: Value,
}

impl StageRecord {
    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T, StoreError> {
        serde_json::from_value(self.payload.clone())
            .map_err(|e| StoreError::SerializationFailure(format!("{} record `{}`: {e}", self.stage, self.key)))
    }
}

/// A line that failed its integrity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptLine {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StageRead {
    pub records: Vec<StageRecord>,
    pub corrupt: Vec<CorruptLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRef {
    pub template_id: String,
    pub version: u32,
    pub digest: String,
    /// Bundled templates are reconstructions, not published wording.
    pub reconstruction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRef {
    pub path: String,
    pub digest: String,
    pub rows: usize,
    pub skipped_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRef {
    /// `mock` or `http`.
    pub kind: String,
    pub model_id: String,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the key, never the key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    pub max_parallel: usize,
    pub retry_limit: u32,
    pub backoff_base_ms: u64,
    pub rate_limit: u32,
    /// Mock profile text, kept so the run can be replayed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_profile: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_profile_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_noise_seed: Option<u64>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub record_format: u32,
    pub run_id: String,
    pub created_at: String,
    pub tool_version: String,
    pub census: CensusRef,
    pub sample_n: usize,
    pub sample_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<String>,
    pub weighted: bool,
    pub generations: u32,
    pub provider: ProviderRef,
    pub templates: Vec<TemplateRef>,
    pub item_bank_digest: String,
    pub norm_version: String,
    pub norm_digest: String,
    pub chunk_size: usize,
    pub reask_cap: usize,
    pub value_kind: String,
    pub references: Vec<String>,
    pub anomaly_threshold: f64,
}

/// Which failures were recorded for a persona at a stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: Stage,
    pub persona_id: String,
    /// Short machine tag, for example `enrichment-failed`.
    pub status: String,
    pub error: String,
}

fn encode_line(value: &impl Serialize) -> Result<String, StoreError> {
    let json = serde_json::to_string(value).map_err(|e| StoreError::SerializationFailure(e.to_string()))?;
    let sum = &sha256_hex(json.as_bytes())[..16];
    Ok(format!("{json}\t{sum}\n"))
}

/// Split and verify one line; returns the JSON text.
pub fn decode_line(line: &str) -> Result<&str, String> {
    let (json, sum) = line.rsplit_once('\t').ok_or("missing checksum")?;
    if sum.len() != 16 || &sha256_hex(json.as_bytes())[..16] != sum {
        return Err("checksum mismatch".into());
    }
    Ok(json)
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<(Vec<T>, Vec<CorruptLine>), StoreError> {
    let text = match fs::read(path) {
        Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), Vec::new())),
        Err(e) => return Err(e.into()),
    };
    let mut items = Vec::new();
    let mut corrupt = Vec::new();
    for (i, line) in text.split('\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let parsed = decode_line(line).and_then(|json| serde_json::from_str::<T>(json).map_err(|e| e.to_string()));
        match parsed {
            Ok(v) => items.push(v),
            Err(reason) => corrupt.push(CorruptLine { line_no: i + 1, reason }),
        }
    }
    Ok((items, corrupt))
}

fn unwritable(path: &Path, e: impl fmt::Display) -> StoreError {
    StoreError::PathUnwritable {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

/// Handle on one run directory. Single writer; readers may open concurrently.
#[derive(Debug)]
pub struct RunStore {
    dir: PathBuf,
    manifest: RunManifest,
    finalized: bool,
    next_seq: BTreeMap<Stage, u64>,
    keys: BTreeMap<Stage, std::collections::BTreeSet<String>>,
}

impl RunStore {
    /// Create a run, or reopen it when `resume` is set.
    ///
    /// A fresh directory gets the manifest before any stage file. Reopening
    /// keeps the stored manifest and ignores `manifest`.
    pub fn init(dir: &Path, manifest: &RunManifest, resume: bool) -> Result<RunStore, StoreError> {
        if dir.join(MANIFEST).exists() {
            if !resume {
                return Err(StoreError::RunExists(dir.display().to_string()));
            }
            let store = RunStore::open(dir)?;
            if store.finalized {
                return Err(StoreError::FinalizedRun(dir.display().to_string()));
            }
            return Ok(store);
        }
        fs::create_dir_all(dir).map_err(|e| unwritable(dir, e))?;
        let body = serde_json::to_string_pretty(manifest).map_err(|e| StoreError::SerializationFailure(e.to_string()))?;
        let tmp = dir.join(".manifest.json.tmp");
        let write = || -> std::io::Result<()> {
            let mut f = File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
            fs::rename(&tmp, dir.join(MANIFEST))
        };
        write().map_err(|e| unwritable(dir, e))?;
        RunStore::open(dir)
    }

    /// Open an existing run (finalized or not).
    pub fn open(dir: &Path) -> Result<RunStore, StoreError> {
        let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotARun(dir.display().to_string()),
            _ => StoreError::Io(e),
        })?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| StoreError::ManifestInvalid(e.to_string()))?;
        if manifest.record_format != RECORD_FORMAT_VERSION {
            return Err(StoreError::ManifestInvalid(format!(
                "record format {} is not supported (expected {RECORD_FORMAT_VERSION})",
                manifest.record_format
            )));
        }
        let mut store = RunStore {
            dir: dir.to_path_buf(),
            manifest,
            finalized: dir.join(FINALIZED).exists(),
            next_seq: BTreeMap::new(),
            keys: BTreeMap::new(),
        };
        for stage in Stage::ALL {
            let read = store.read_stage(stage)?;
            store.next_seq.insert(stage, read.records.len() as u64);
            store
                .keys
                .insert(stage, read.records.into_iter().map(|r| r.key).collect());
        }
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn is_finalized(&self) -> bool {
        self.finalized
    }

    pub fn report_dir(&self) -> PathBuf {
        self.dir.join("report")
    }

    pub fn stage_path(&self, stage: Stage) -> PathBuf {
        self.dir.join(stage.file_name())
    }

    /// Whether a record with this key is already stored.
    pub fn contains(&self, stage: Stage, key: &str) -> bool {
        self.keys.get(&stage).is_some_and(|k| k.contains(key))
    }

    pub fn count(&self, stage: Stage) -> u64 {
        self.next_seq.get(&stage).copied().unwrap_or(0)
    }

    fn ensure_writable(&self) -> Result<(), StoreError> {
        if self.finalized {
            return Err(StoreError::FinalizedRun(self.dir.display().to_string()));
        }
        Ok(())
    }

    fn append_line(&self, path: &Path, line: &str) -> Result<(), StoreError> {
        let mut f = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        // A crash may have left a line without its newline; start a fresh one.
        let len = f.metadata()?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            f.seek(SeekFrom::Start(len - 1))?;
            f.read_exact(&mut last)?;
            if last[0] != b'\n' {
                f.write_all(b"\n")?;
            }
        }
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    /// Append one record. Keys are not checked for uniqueness here; callers
    /// use [`RunStore::contains`] to skip work already done.
    pub fn append(
        &mut self,
        stage: Stage,
        persona_id: Option<&str>,
        key: &str,
        payload: &impl Serialize,
    ) -> Result<StageRecord, StoreError> {
        self.ensure_writable()?;
        let payload = serde_json::to_value(payload).map_err(|e| StoreError::SerializationFailure(e.to_string()))?;
        let record = StageRecord {
            stage,
            seq: self.count(stage),
            persona_id: persona_id.map(str::to_string),
            key: key.to_string(),
            payload,
        };
        let line = encode_line(&record)?;
        self.append_line(&self.stage_path(stage), &line)?;
        *self.next_seq.entry(stage).or_insert(0) += 1;
        self.keys.entry(stage).or_default().insert(key.to_string());
        Ok(record)
    }

    pub fn read_stage(&self, stage: Stage) -> Result<StageRead, StoreError> {
        let (records, corrupt) = read_lines::<StageRecord>(&self.stage_path(stage))?;
        Ok(StageRead { records, corrupt })
    }

    /// As [`RunStore::read_stage`], by name. Unknown names yield nothing.
    pub fn read_stage_named(&self, name: &str) -> Result<StageRead, StoreError> {
        match name.parse::<Stage>() {
            Ok(stage) => self.read_stage(stage),
            Err(_) => Ok(StageRead::default()),
        }
    }

    /// Typed payloads of a stage, last record per key winning.
    pub fn payloads<T: DeserializeOwned>(&self, stage: Stage) -> Result<BTreeMap<String, T>, StoreError> {
        let mut out = BTreeMap::new();
        for r in self.read_stage(stage)?.records {
            out.insert(r.key.clone(), r.payload_as()?);
        }
        Ok(out)
    }

    pub fn append_transcript(&self, entries: &[crate::gateway::TranscriptEntry]) -> Result<(), StoreError> {
        self.ensure_writable()?;
        let mut text = String::new();
        for e in entries {
            text.push_str(&encode_line(e)?);
        }
        if !text.is_empty() {
            self.append_line(&self.dir.join(TRANSCRIPT), &text)?;
        }
        Ok(())
    }

    pub fn read_transcript(&self) -> Result<(Vec<crate::gateway::TranscriptEntry>, Vec<CorruptLine>), StoreError> {
        read_lines(&self.dir.join(TRANSCRIPT))
    }

    pub fn append_failure(&self, failure: &FailureRecord) -> Result<(), StoreError> {
        self.ensure_writable()?;
        self.append_line(&self.dir.join(FAILURES), &encode_line(failure)?)
    }

    pub fn read_failures(&self) -> Result<Vec<FailureRecord>, StoreError> {
        Ok(read_lines(&self.dir.join(FAILURES))?.0)
    }

    /// Seal the run. Later appends fail with [`StoreError::FinalizedRun`].
    pub fn finalize(&mut self) -> Result<(), StoreError> {
        self.ensure_writable()?;
        let mut body = String::new();
        for stage in Stage::ALL {
            let bytes = fs::read(self.stage_path(stage)).unwrap_or_default();
            body.push_str(&format!("{}  {}\n", sha256_hex(&bytes), stage.file_name()));
        }
        fs::write(self.dir.join(FINALIZED), body)?;
        self.finalized = true;
        Ok(())
    }
}
