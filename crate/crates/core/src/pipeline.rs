//! Stage orchestration over a [`RunStore`].
//!
//! Every stage reads its inputs from the store and appends its outputs there,
//! skipping work whose key is already stored, so any stage can be re-run or
//! resumed after a crash without repeating provider calls. Personas are
//! processed in batches of `max_parallel` threads; results are appended in
//! persona order so the stage files do not depend on thread timing.
//!
//! Everything a stage needs is rebuilt from the run manifest by
//! [`RunContext::from_manifest`], which is also what makes [`replay_run`] work.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets;
use crate::census::{
    load_census, sample_conditional, sample_random, CensusError, CensusTable, LoadOptions, SamplePredicate,
    SamplingOptions, SkeletalPersona,
};
use crate::evaluation::{
    canonical_bins, compare_curves, load_reference, trait_means_by_bin, EvaluationError, TraitCurveTable, ValueKind,
    DEFAULT_ANOMALY_THRESHOLD,
};
use crate::gateway::{Gateway, GatewayError, MockProfile, ProviderConfig, DEFAULT_TEMPERATURE};
use crate::persona::{elicit_deep_persona, enrich_persona, EnrichedPersona};
use crate::questionnaire::{
    administer_chunk, chunk_items, merge_answer_sheets, reask_chunk, AnswerSheet, ItemBank, ParseReport,
    QuestionnaireError, QuizExchange, QuizKind,
};
use crate::report::{emit_markdown_report, ReportError};
use crate::scoring::{score, Cohort, NormTable, PersonalityResult};
use crate::store::{
    CensusRef, FailureRecord, ProviderRef, RunManifest, RunStore, Stage, StoreError, TemplateRef,
    RECORD_FORMAT_VERSION,
};
use crate::template::PromptTemplate;

/// Census path that stands for the bundled Adult file.
pub const BUNDLED_CENSUS: &str = "bundled:adult";

/// Key of the population curve record.
pub const POPULATION: &str = "population";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage `{stage}` needs `{needs}` records; run `{needs}` first")]
    MissingStage { stage: Stage, needs: Stage },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Census(#[from] CensusError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// Settings for a new run. Loaded from TOML and then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Census file path, or [`BUNDLED_CENSUS`].
    pub census: String,
    pub n: usize,
    pub seed: u64,
    pub predicate: Option<String>,
    pub weighted: bool,
    /// Narratives generated per skeleton. Generation 0 is the one quizzed.
    pub generations: u32,
    /// `mock`, `mock:<profile.toml>` or `http`.
    pub provider: String,
    pub gateway: ProviderConfig,
    pub norms: String,
    pub value_kind: ValueKind,
    pub chunk_size: usize,
    pub reask_cap: usize,
    pub references: Vec<String>,
    pub anomaly_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            census: BUNDLED_CENSUS.into(),
            n: 60,
            seed: 42,
            predicate: None,
            weighted: false,
            generations: 1,
            provider: "mock".into(),
            gateway: ProviderConfig::default(),
            norms: "ipip-neo-120".into(),
            value_kind: ValueKind::Percentile,
            chunk_size: 20,
            reask_cap: 2,
            references: vec!["bhps".into(), "gsoep".into()],
            anomaly_threshold: DEFAULT_ANOMALY_THRESHOLD,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::ConfigInvalid(e.to_string()))
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::ConfigInvalid(msg.into())
}

fn census_path(path: &str) -> std::path::PathBuf {
    if path == BUNDLED_CENSUS {
        assets::adult_census_path()
    } else {
        path.into()
    }
}

fn template_ref(tpl: &PromptTemplate) -> TemplateRef {
    TemplateRef {
        template_id: tpl.template_id.clone(),
        version: tpl.version,
        digest: tpl.digest(),
        reconstruction: true,
    }
}

fn bundled_templates() -> [PromptTemplate; 3] {
    [
        assets::enrichment_template(),
        assets::quiz_template(),
        assets::elicitation_template(),
    ]
}

/// Validate `cfg` and turn it into a manifest.
pub fn build_manifest(cfg: &RunConfig, run_id: &str) -> Result<RunManifest, PipelineError> {
    cfg.gateway.validate()?;
    if !(1..=crate::questionnaire::BANK_SIZE).contains(&cfg.chunk_size) {
        return Err(invalid(format!("chunk size {} outside 1..=120", cfg.chunk_size)));
    }
    if cfg.generations == 0 {
        return Err(invalid("generations must be at least 1"));
    }
    if cfg.anomaly_threshold.is_nan() || cfg.anomaly_threshold < 0.0 {
        return Err(invalid("anomaly threshold must be non-negative"));
    }
    for r in &cfg.references {
        load_reference(r)?;
    }
    let norms = NormTable::bundled(&cfg.norms)
        .ok_or_else(|| invalid(format!("unknown norm table `{}` (bundled: {:?})", cfg.norms, NormTable::BUNDLED)))?;
    let table = load_census(&census_path(&cfg.census), &LoadOptions::default())?;
    let predicate = match cfg.predicate.as_deref().map(str::trim).filter(|p| !p.is_empty()) {
        Some(p) => {
            let pred = SamplePredicate::from_str(p)?;
            pred.validate(&table)?;
            Some(pred.to_string())
        }
        None => None,
    };
    if cfg.weighted && !table.has_weights() {
        return Err(CensusError::WeightsUnavailable.into());
    }

    let temperature = cfg.gateway.temperature.unwrap_or(DEFAULT_TEMPERATURE);
    let (kind, mock_profile) = match cfg.provider.trim() {
        "http" => ("http", None),
        "mock" => ("mock", Some(String::new())),
        other => match other.strip_prefix("mock:") {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid(format!("mock profile `{path}`: {e}")))?;
                ("mock", Some(text))
            }
            None => return Err(invalid(format!("unknown provider `{other}`; use mock, mock:<path> or http"))),
        },
    };
    let parsed_profile = match &mock_profile {
        Some(text) => Some(MockProfile::from_toml(text)?),
        None => None,
    };
    let http = kind == "http";
    let provider = ProviderRef {
        kind: kind.into(),
        model_id: cfg.gateway.model_id.clone(),
        temperature,
        endpoint: http.then(|| cfg.gateway.endpoint.clone()),
        credential_env: http.then(|| cfg.gateway.credential.clone()),
        max_parallel: cfg.gateway.max_parallel,
        retry_limit: cfg.gateway.retry_limit,
        backoff_base_ms: cfg.gateway.backoff_base_ms,
        rate_limit: cfg.gateway.rate_limit,
        mock_profile_digest: mock_profile.as_deref().map(|t| crate::digest::sha256_hex(t.as_bytes())),
        mock_noise_seed: parsed_profile.map(|p| p.noise_seed),
        mock_profile,
    };

    Ok(RunManifest {
        record_format: RECORD_FORMAT_VERSION,
        run_id: run_id.into(),
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        tool_version: crate::TOOL_VERSION.into(),
        census: CensusRef {
            path: cfg.census.clone(),
            digest: table.source_digest().into(),
            rows: table.len(),
            skipped_rows: table.skipped_rows(),
        },
        sample_n: cfg.n,
        sample_seed: cfg.seed,
        predicate,
        weighted: cfg.weighted,
        generations: cfg.generations,
        provider,
        templates: bundled_templates().iter().map(template_ref).collect(),
        item_bank_digest: ItemBank::bundled().digest().into(),
        norm_version: norms.version().into(),
        norm_digest: norms.digest().into(),
        chunk_size: cfg.chunk_size,
        reask_cap: cfg.reask_cap,
        value_kind: cfg.value_kind.name().into(),
        references: cfg.references.clone(),
        anomaly_threshold: cfg.anomaly_threshold,
    })
}

fn run_id_of(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Create a run directory from `cfg`, or reopen it when `resume` is set.
pub fn init_run(dir: &Path, cfg: &RunConfig, resume: bool) -> Result<RunStore, PipelineError> {
    let manifest = build_manifest(cfg, &run_id_of(dir))?;
    Ok(RunStore::init(dir, &manifest, resume)?)
}

/// Start a fresh run at `dst` with the manifest of the run at `src`.
pub fn replay_run(src: &Path, dst: &Path) -> Result<RunStore, PipelineError> {
    let source = RunStore::open(src)?;
    let mut manifest = source.manifest().clone();
    manifest.run_id = run_id_of(dst);
    manifest.created_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    Ok(RunStore::init(dst, &manifest, false)?)
}

/// Assets and provider reconstructed from a manifest.
pub struct RunContext {
    pub manifest: RunManifest,
    pub gateway: Gateway,
    pub enrichment: PromptTemplate,
    pub quiz: PromptTemplate,
    pub elicitation: PromptTemplate,
    pub bank: ItemBank,
    pub norms: NormTable,
    pub value_kind: ValueKind,
    pub references: Vec<TraitCurveTable>,
}

fn provider_config(p: &ProviderRef) -> ProviderConfig {
    let base = ProviderConfig::default();
    ProviderConfig {
        endpoint: p.endpoint.clone().unwrap_or(base.endpoint),
        credential: p.credential_env.clone().unwrap_or(base.credential),
        model_id: p.model_id.clone(),
        max_parallel: p.max_parallel,
        retry_limit: p.retry_limit,
        backoff_base_ms: p.backoff_base_ms,
        rate_limit: p.rate_limit,
        timeout_ms: base.timeout_ms,
        temperature: Some(p.temperature),
    }
}

/// The gateway a manifest describes.
pub fn gateway_for(manifest: &RunManifest) -> Result<Gateway, PipelineError> {
    let p = &manifest.provider;
    let cfg = provider_config(p);
    match p.kind.as_str() {
        "mock" => {
            let text = p.mock_profile.as_deref().unwrap_or("");
            Ok(Gateway::mock(cfg, MockProfile::from_toml(text)?)?)
        }
        "http" => Ok(Gateway::http(cfg)?),
        other => Err(invalid(format!("unknown provider kind `{other}` in manifest"))),
    }
}

impl RunContext {
    pub fn from_manifest(manifest: &RunManifest) -> Result<RunContext, PipelineError> {
        RunContext::with_gateway(manifest, gateway_for(manifest)?)
    }

    /// Like [`RunContext::from_manifest`] with a caller-supplied gateway.
    pub fn with_gateway(manifest: &RunManifest, gateway: Gateway) -> Result<RunContext, PipelineError> {
        let [enrichment, quiz, elicitation] = bundled_templates();
        for tpl in [&enrichment, &quiz, &elicitation] {
            let stored = manifest
                .templates
                .iter()
                .find(|t| t.template_id == tpl.template_id)
                .ok_or_else(|| invalid(format!("manifest lists no `{}` template", tpl.template_id)))?;
            if stored.digest != tpl.digest() || stored.version != tpl.version {
                return Err(invalid(format!(
                    "template `{}` differs from the one recorded in the manifest",
                    tpl.template_id
                )));
            }
        }
        let bank = ItemBank::bundled();
        if bank.digest() != manifest.item_bank_digest {
            return Err(invalid("item bank differs from the one recorded in the manifest"));
        }
        let norms = NormTable::bundled(&manifest.norm_version)
            .ok_or_else(|| invalid(format!("unknown norm table `{}`", manifest.norm_version)))?;
        if norms.digest() != manifest.norm_digest {
            return Err(invalid("norm table differs from the one recorded in the manifest"));
        }
        let value_kind = ValueKind::from_str(&manifest.value_kind).map_err(invalid)?;
        let references = manifest
            .references
            .iter()
            .map(|r| load_reference(r))
            .collect::<Result<_, _>>()?;
        Ok(RunContext {
            manifest: manifest.clone(),
            gateway,
            enrichment,
            quiz,
            elicitation,
            bank,
            norms,
            value_kind,
            references,
        })
    }

    fn load_census(&self) -> Result<CensusTable, PipelineError> {
        let table = load_census(&census_path(&self.manifest.census.path), &LoadOptions::default())?;
        if table.source_digest() != self.manifest.census.digest {
            return Err(invalid(format!(
                "census `{}` does not match the digest recorded in the manifest",
                self.manifest.census.path
            )));
        }
        Ok(table)
    }
}

/// What one stage did.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StageSummary {
    pub stage: Option<Stage>,
    pub done: usize,
    pub skipped: usize,
    pub failed: usize,
    /// One line per persona.
    pub lines: Vec<String>,
}

impl StageSummary {
    fn new(stage: Stage) -> StageSummary {
        StageSummary {
            stage: Some(stage),
            ..StageSummary::default()
        }
    }

    fn ok(&mut self, id: &str) {
        self.done += 1;
        self.lines.push(format!("{id}: ok"));
    }

    fn skip(&mut self) {
        self.skipped += 1;
    }

    fn fail(&mut self, store: &RunStore, stage: Stage, id: &str, status: &str, err: &dyn std::fmt::Display) -> Result<(), PipelineError> {
        self.failed += 1;
        self.lines.push(format!("{id}: {status}: {err}"));
        store.append_failure(&FailureRecord {
            stage,
            persona_id: id.into(),
            status: status.into(),
            error: err.to_string(),
        })?;
        Ok(())
    }

    pub fn headline(&self) -> String {
        let name = self.stage.map_or("report", Stage::name);
        format!(
            "{name}: {} done, {} already stored, {} failed",
            self.done, self.skipped, self.failed
        )
    }
}

/// Process exit status for a set of stage summaries: 0 success, 2 when some
/// persona failed a stage.
pub fn exit_status(summaries: &[StageSummary]) -> i32 {
    if summaries.iter().any(|s| s.failed > 0) {
        2
    } else {
        0
    }
}

/// Map `f` over `items` with at most `width` threads, preserving order.
fn par_map<T: Sync, R: Send>(items: &[T], width: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if width <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|item| s.spawn(|| f(item))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

fn require(store: &RunStore, stage: Stage, needs: Stage) -> Result<(), PipelineError> {
    if store.count(needs) == 0 && store.manifest().sample_n > 0 {
        return Err(PipelineError::MissingStage { stage, needs });
    }
    Ok(())
}

fn flush_transcript(store: &RunStore, ctx: &RunContext) -> Result<(), PipelineError> {
    let entries = ctx.gateway.drain_transcript();
    if !entries.is_empty() {
        store.append_transcript(&entries)?;
    }
    Ok(())
}

fn enrichment_key(persona_id: &str, generation: u32) -> String {
    format!("{persona_id}/{generation}")
}

/// Stage 1: draw the skeletons.
pub fn run_sample(store: &mut RunStore, ctx: &RunContext) -> Result<StageSummary, PipelineError> {
    let mut summary = StageSummary::new(Stage::Skeleton);
    let m = &ctx.manifest;
    if store.count(Stage::Skeleton) as usize >= m.sample_n {
        summary.skipped = m.sample_n;
        return Ok(summary);
    }
    let table = ctx.load_census()?;
    let opts = SamplingOptions { weighted: m.weighted };
    let personas = match &m.predicate {
        Some(p) => sample_conditional(&table, &SamplePredicate::from_str(p)?, m.sample_n, m.sample_seed, opts)?,
        None => sample_random(&table, m.sample_n, m.sample_seed, opts)?,
    };
    for p in personas {
        if store.contains(Stage::Skeleton, &p.persona_id) {
            summary.skip();
            continue;
        }
        store.append(Stage::Skeleton, Some(&p.persona_id), &p.persona_id, &p)?;
        summary.ok(&p.persona_id);
    }
    Ok(summary)
}

fn skeletons(store: &RunStore) -> Result<Vec<SkeletalPersona>, PipelineError> {
    Ok(store
        .read_stage(Stage::Skeleton)?
        .records
        .iter()
        .map(|r| r.payload_as())
        .collect::<Result<_, _>>()?)
}

/// Generation-0 narratives, in skeleton order.
fn enriched_personas(store: &RunStore) -> Result<Vec<EnrichedPersona>, PipelineError> {
    let by_key: BTreeMap<String, EnrichedPersona> = store.payloads(Stage::Enrichment)?;
    Ok(skeletons(store)?
        .iter()
        .filter_map(|s| by_key.get(&enrichment_key(&s.persona_id, 0)).cloned())
        .collect())
}

/// Stage 2: one narrative per skeleton and generation.
pub fn run_enrich(store: &mut RunStore, ctx: &RunContext) -> Result<StageSummary, PipelineError> {
    require(store, Stage::Enrichment, Stage::Skeleton)?;
    let mut summary = StageSummary::new(Stage::Enrichment);
    let mut pending = Vec::new();
    for skel in skeletons(store)? {
        for g in 0..ctx.manifest.generations {
            if store.contains(Stage::Enrichment, &enrichment_key(&skel.persona_id, g)) {
                summary.skip();
            } else {
                pending.push((skel.clone(), g));
            }
        }
    }
    let width = ctx.gateway.config().max_parallel;
    for batch in pending.chunks(width.max(1)) {
        let results = par_map(batch, width, |(skel, g)| enrich_persona(&ctx.gateway, &ctx.enrichment, skel, *g));
        flush_transcript(store, ctx)?;
        for ((skel, g), res) in batch.iter().zip(results) {
            match res {
                Ok(e) => {
                    store.append(Stage::Enrichment, Some(&e.persona_id), &enrichment_key(&e.persona_id, *g), &e)?;
                    summary.ok(&skel.persona_id);
                }
                Err(e) => summary.fail(store, Stage::Enrichment, &skel.persona_id, "enrichment-failed", &e)?,
            }
        }
    }
    Ok(summary)
}

/// A persona's merged answers as stored in the answer-sheet stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub sheet: AnswerSheet,
    pub report: ParseReport,
}

fn exchange_key(persona_id: &str, kind: QuizKind, index: usize) -> String {
    format!("{persona_id}/{}/{index}", kind.name())
}

struct QuizOutcome {
    new_exchanges: Vec<QuizExchange>,
    result: Result<AnswerRecord, QuestionnaireError>,
}

fn quiz_one(ctx: &RunContext, persona: &EnrichedPersona, stored: &BTreeMap<String, QuizExchange>) -> QuizOutcome {
    let mut new_exchanges = Vec::new();
    let result = quiz_inner(ctx, persona, stored, &mut new_exchanges);
    QuizOutcome { new_exchanges, result }
}

fn quiz_inner(
    ctx: &RunContext,
    persona: &EnrichedPersona,
    stored: &BTreeMap<String, QuizExchange>,
    new_exchanges: &mut Vec<QuizExchange>,
) -> Result<AnswerRecord, QuestionnaireError> {
    let bank = &ctx.bank;
    let universe = bank.item_ids();
    let mut fetch = |chunk: &crate::questionnaire::ItemChunk, kind: QuizKind| -> Result<QuizExchange, QuestionnaireError> {
        let key = exchange_key(&persona.persona_id, kind, chunk.chunk_index);
        match stored.get(&key) {
            Some(ex) if ex.item_ids == chunk.item_ids() => Ok(ex.clone()),
            _ => {
                let (_, ex) = administer_chunk(&ctx.gateway, &ctx.quiz, persona, chunk, kind)?;
                new_exchanges.push(ex.clone());
                Ok(ex)
            }
        }
    };

    let mut exchanges = Vec::new();
    for chunk in chunk_items(bank.items(), ctx.manifest.chunk_size) {
        exchanges.push(fetch(&chunk, QuizKind::Chunk)?);
    }
    let partials: Vec<AnswerSheet> = exchanges.iter().map(|e| e.partial_sheet(bank)).collect();
    let (mut sheet, mut report) = merge_answer_sheets(&partials, &universe)?;
    for e in &exchanges {
        report.absorb(&e.report);
    }
    for attempt in 0..ctx.manifest.reask_cap {
        if report.missing_ids.is_empty() {
            break;
        }
        let ex = fetch(&reask_chunk(bank, &report.missing_ids, attempt), QuizKind::Reask)?;
        let (merged, mut merged_report) = merge_answer_sheets(&[sheet, ex.partial_sheet(bank)], &universe)?;
        merged_report.absorb(&report);
        merged_report.absorb(&ex.report);
        sheet = merged;
        report = merged_report;
    }
    sheet.persona_id = persona.persona_id.clone();
    Ok(AnswerRecord { sheet, report })
}

/// Stage 3: administer the inventory in chunks, then re-ask missing items.
/// Chunks already in the transcript stage are reused, not re-sent.
pub fn run_quiz(store: &mut RunStore, ctx: &RunContext) -> Result<StageSummary, PipelineError> {
    require(store, Stage::QuizTranscript, Stage::Enrichment)?;
    let mut summary = StageSummary::new(Stage::QuizTranscript);
    let stored: BTreeMap<String, QuizExchange> = store.payloads(Stage::QuizTranscript)?;
    let mut pending = Vec::new();
    for p in enriched_personas(store)? {
        if store.contains(Stage::AnswerSheet, &p.persona_id) {
            summary.skip();
        } else {
            pending.push(p);
        }
    }
    let width = ctx.gateway.config().max_parallel;
    for batch in pending.chunks(width.max(1)) {
        let outcomes = par_map(batch, width, |p| quiz_one(ctx, p, &stored));
        flush_transcript(store, ctx)?;
        for (p, out) in batch.iter().zip(outcomes) {
            for ex in &out.new_exchanges {
                let key = ex.reference();
                if !store.contains(Stage::QuizTranscript, &key) {
                    store.append(Stage::QuizTranscript, Some(&p.persona_id), &key, ex)?;
                }
            }
            match out.result {
                Ok(record) => {
                    store.append(Stage::AnswerSheet, Some(&p.persona_id), &p.persona_id, &record)?;
                    let missing = record.report.missing_ids.len();
                    summary.done += 1;
                    summary.lines.push(if missing == 0 {
                        format!("{}: ok", p.persona_id)
                    } else {
                        format!("{}: ok, {missing} item(s) still missing", p.persona_id)
                    });
                }
                Err(e) => summary.fail(store, Stage::QuizTranscript, &p.persona_id, "quiz-failed", &e)?,
            }
        }
    }
    Ok(summary)
}

/// Stage 4: score each answer sheet against the persona's cohort norms.
pub fn run_score(store: &mut RunStore, ctx: &RunContext) -> Result<StageSummary, PipelineError> {
    require(store, Stage::Score, Stage::AnswerSheet)?;
    let mut summary = StageSummary::new(Stage::Score);
    let sheets: BTreeMap<String, AnswerRecord> = store.payloads(Stage::AnswerSheet)?;
    for skel in skeletons(store)? {
        let id = &skel.persona_id;
        let Some(record) = sheets.get(id) else { continue };
        if store.contains(Stage::Score, id) {
            summary.skip();
            continue;
        }
        let cohort = Cohort::new(&skel.record.sex, skel.record.age);
        match score(&record.sheet, &ctx.bank, &ctx.norms, &cohort) {
            Ok(result) => {
                store.append(Stage::Score, Some(id), id, &result)?;
                summary.ok(id);
            }
            Err(e) => summary.fail(store, Stage::Score, id, "scoring-failed", &e)?,
        }
    }
    Ok(summary)
}

/// Stage 5: a personality-conditioned narrative per scored persona.
pub fn run_elicit(store: &mut RunStore, ctx: &RunContext) -> Result<StageSummary, PipelineError> {
    require(store, Stage::Elicitation, Stage::Score)?;
    let mut summary = StageSummary::new(Stage::Elicitation);
    let scores: BTreeMap<String, PersonalityResult> = store.payloads(Stage::Score)?;
    let mut pending = Vec::new();
    for p in enriched_personas(store)? {
        let Some(result) = scores.get(&p.persona_id) else { continue };
        if store.contains(Stage::Elicitation, &p.persona_id) {
            summary.skip();
        } else {
            pending.push((p, result.clone()));
        }
    }
    let width = ctx.gateway.config().max_parallel;
    for batch in pending.chunks(width.max(1)) {
        let results = par_map(batch, width, |(p, r)| elicit_deep_persona(&ctx.gateway, &ctx.elicitation, p, Some(r)));
        flush_transcript(store, ctx)?;
        for ((p, _), res) in batch.iter().zip(results) {
            match res {
                Ok(e) => {
                    store.append(Stage::Elicitation, Some(&p.persona_id), &p.persona_id, &e)?;
                    summary.ok(&p.persona_id);
                }
                Err(e) => summary.fail(store, Stage::Elicitation, &p.persona_id, "elicitation-failed", &e)?,
            }
        }
    }
    Ok(summary)
}

fn append_distances(
    store: &mut RunStore,
    ctx: &RunContext,
    curve: &TraitCurveTable,
    summary: &mut StageSummary,
) -> Result<(), PipelineError> {
    let refs: Vec<TraitCurveTable> = ctx
        .references
        .iter()
        .filter(|r| r.source() != curve.source())
        .cloned()
        .collect();
    for r in refs {
        let key = format!("{}-{}", curve.source(), r.source());
        if store.contains(Stage::Distance, &key) {
            summary.skip();
            continue;
        }
        match compare_curves(curve, std::slice::from_ref(&r), None) {
            Ok(mut reports) => {
                store.append(Stage::Distance, None, &key, &reports.remove(0))?;
                summary.ok(&key);
            }
            Err(e) => summary.lines.push(format!("{key}: skipped: {e}")),
        }
    }
    Ok(())
}

/// Stage 6: the population curve and its distance to each reference.
pub fn run_evaluate(store: &mut RunStore, ctx: &RunContext) -> Result<StageSummary, PipelineError> {
    require(store, Stage::Curve, Stage::Score)?;
    let mut summary = StageSummary::new(Stage::Curve);
    let curve = match store.payloads::<TraitCurveTable>(Stage::Curve)?.remove(POPULATION) {
        Some(c) => {
            summary.skip();
            c
        }
        None => {
            let scores: BTreeMap<String, PersonalityResult> = store.payloads(Stage::Score)?;
            let results: Vec<(PersonalityResult, u32)> = skeletons(store)?
                .iter()
                .filter_map(|s| scores.get(&s.persona_id).map(|r| (r.clone(), s.record.age)))
                .collect();
            let curve = trait_means_by_bin(&results, &canonical_bins(), ctx.value_kind, POPULATION);
            store.append(Stage::Curve, None, POPULATION, &curve)?;
            summary.ok(POPULATION);
            curve
        }
    };
    append_distances(store, ctx, &curve, &mut summary)?;
    Ok(summary)
}

/// Evaluate a bundled reference table as if it were the simulated
/// population, for example to reproduce the published model curve.
pub fn run_evaluate_reference(store: &mut RunStore, ctx: &RunContext, name: &str) -> Result<StageSummary, PipelineError> {
    let mut summary = StageSummary::new(Stage::Curve);
    let curve = load_reference(name)?;
    let key = format!("replay:{}", curve.source());
    if store.contains(Stage::Curve, &key) {
        summary.skip();
    } else {
        store.append(Stage::Curve, None, &key, &curve)?;
        summary.ok(&key);
    }
    append_distances(store, ctx, &curve, &mut summary)?;
    Ok(summary)
}

/// Stage 7: write `report/`.
pub fn run_report(store: &RunStore) -> Result<StageSummary, PipelineError> {
    let path = emit_markdown_report(store)?;
    Ok(StageSummary {
        stage: None,
        done: 1,
        lines: vec![format!("report written to {}", path.display())],
        ..StageSummary::default()
    })
}

/// Stand-in summary for a stage that has nothing to work on because every
/// persona failed an earlier stage.
fn nothing_to_do(stage: Stage, needs: Stage) -> StageSummary {
    StageSummary {
        lines: vec![format!("skipped: no `{needs}` records")],
        ..StageSummary::new(stage)
    }
}

/// All stages in order, then finalize the run. Stages left without input
/// by persona failures are skipped; the failures set the exit status.
pub fn run_pipeline(store: &mut RunStore, ctx: &RunContext) -> Result<Vec<StageSummary>, PipelineError> {
    type StageFn = fn(&mut RunStore, &RunContext) -> Result<StageSummary, PipelineError>;
    let stages: [(Stage, Option<Stage>, StageFn); 6] = [
        (Stage::Skeleton, None, run_sample),
        (Stage::Enrichment, Some(Stage::Skeleton), run_enrich),
        (Stage::QuizTranscript, Some(Stage::Enrichment), run_quiz),
        (Stage::Score, Some(Stage::AnswerSheet), run_score),
        (Stage::Elicitation, Some(Stage::Score), run_elicit),
        (Stage::Curve, Some(Stage::Score), run_evaluate),
    ];
    let mut out = Vec::new();
    for (stage, needs, run) in stages {
        match needs {
            Some(needs) if store.count(needs) == 0 && exit_status(&out) != 0 => {
                out.push(nothing_to_do(stage, needs));
            }
            _ => out.push(run(store, ctx)?),
        }
    }
    out.push(run_report(store)?);
    store.finalize()?;
    Ok(out)
}
