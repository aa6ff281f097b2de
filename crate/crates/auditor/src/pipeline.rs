//! End-to-end audit orchestration: snapshot → filter → two-stage
//! classification → verdict derivation → persisted verdict set.
//!
//! Every issue entering the pipeline leaves it in exactly one place: the
//! verdict set or a per-stage exclusion bucket, each exclusion attributed to
//! its stage and reason. Stage-two model answers never include a final
//! verdict — the model fills annotation fields and [`derive_verdict`] does
//! the rest, so the decision logic stays testable and model-independent.
//! The pipeline never emits a `Complex` verdict; complexity is a
//! human-annotation-only call.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use crate::context::{
    build_bugid_context, build_responsiveness_context, default_event_kinds, select_events,
    ContextBudget,
};
use crate::corpus::TimeWindow;
use crate::framework::{
    derive_verdict, Annotation, Annotator, BugType, FrameworkError, TaxonomyReason, VerdictClass,
};
use crate::ingest::{
    Corpus, GithubClient, IngestError, IssueKey, IssueState, RawIssue, RepoRef, SnapshotCache,
};
use crate::llm::{
    AnswerCache, CacheKey, ChatBackend, LlmError, ModelAnswer, PromptTemplate, SamplingConfig,
};
use crate::report::VerdictEntry;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
    #[error("annotation source: {0}")]
    Annotation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Full effective configuration of one audit run; hashed into the run id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditConfig {
    pub window: Option<TimeWindow>,
    pub include_open: bool,
    pub exclude_prs: bool,
    pub bugid_sampling: SamplingConfig,
    pub resp_sampling: SamplingConfig,
    pub budget: ContextBudget,
    pub event_kinds: BTreeSet<String>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            window: None,
            include_open: false,
            exclude_prs: true,
            bugid_sampling: SamplingConfig::default_bugid(),
            resp_sampling: SamplingConfig::default_responsiveness(),
            budget: ContextBudget::default(),
            event_kinds: default_event_kinds(),
        }
    }
}

pub const STAGE_INGEST: &str = "ingest";
pub const STAGE_EXCLUDE_PRS: &str = "exclude_prs";
pub const STAGE_REQUIRE_CLOSED: &str = "require_closed";
pub const STAGE_WINDOW: &str = "window";
pub const STAGE_BUG_IDENTIFICATION: &str = "bug_identification";
pub const STAGE_RESPONSIVENESS: &str = "responsiveness";
pub const STAGE_DERIVE_VERDICT: &str = "derive_verdict";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub input_count: usize,
    pub output_count: usize,
    pub excluded_count: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRun {
    pub run_id: String,
    pub stages: Vec<StageRecord>,
    pub config: AuditConfig,
    pub annotator: AnnotatorInfo,
}

/// One persisted verdict (line format of `verdicts.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub repo: RepoRef,
    pub number: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_type: Option<BugType>,
    pub verdict: VerdictClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<TaxonomyReason>,
    pub evidence: Vec<String>,
    pub model: String,
    pub template_version: String,
    pub config_digest: String,
}

impl VerdictRecord {
    pub fn entry(&self) -> VerdictEntry {
        VerdictEntry {
            repo: self.repo.clone(),
            number: self.number,
            class: self.verdict,
            bug_type: self.bug_type,
            reason: self.reason,
        }
    }
}

/// One excluded issue with its stage and reason (line format of
/// `exclusions.jsonl`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRecord {
    pub repo: RepoRef,
    pub number: u64,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub run: AuditRun,
    pub verdicts: Vec<VerdictRecord>,
    pub exclusions: Vec<ExclusionRecord>,
    /// Per-issue hard failures (also present in `exclusions` with an
    /// `error:` reason). A nonzero count makes the CLI exit nonzero while
    /// still writing partial results.
    pub failure_count: usize,
}

// ---------------------------------------------------------------------------
// Annotation sources
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatorInfo {
    pub model: String,
    pub bugid_template_version: String,
    pub resp_template_version: String,
    pub config_digest: String,
}

/// Where stage-one and stage-two answers come from: a model backend, or an
/// annotations file for deterministic, network-free runs.
#[async_trait]
pub trait IssueAnnotator: Send + Sync {
    fn info(&self) -> AnnotatorInfo;

    /// `Ok(None)` means the source produced no usable answer (unparseable).
    async fn classify_bug(&self, issue: &RawIssue) -> Result<Option<bool>, PipelineError>;

    async fn annotate(
        &self,
        issue: &RawIssue,
        events: &[crate::ingest::RawTimelineEvent],
        contributors: Option<&crate::ingest::ContributorSet>,
    ) -> Result<Option<Annotation>, PipelineError>;
}

/// Model-backed annotator: builds contexts, calls the backend through the
/// answer cache, and turns parsed fields into annotations.
pub struct LlmAnnotator {
    backend: ChatBackend,
    bugid_template: PromptTemplate,
    resp_template: PromptTemplate,
    config: AuditConfig,
    cache: AnswerCache,
}

impl LlmAnnotator {
    pub fn new(
        backend: ChatBackend,
        bugid_template: PromptTemplate,
        resp_template: PromptTemplate,
        config: AuditConfig,
        cache: AnswerCache,
    ) -> Self {
        LlmAnnotator {
            backend,
            bugid_template,
            resp_template,
            config,
            cache,
        }
    }

    async fn cached_complete(
        &self,
        template: &PromptTemplate,
        sampling: &SamplingConfig,
        key: &IssueKey,
        context: &crate::context::ContextBlock,
    ) -> Result<ModelAnswer, PipelineError> {
        let cache_key = CacheKey::new(&template.version, &sampling.digest(), key);
        if let Some(hit) = self.cache.get(&cache_key) {
            return Ok(hit);
        }
        let answer = self.backend.complete(template, context, sampling).await?;
        self.cache.put(cache_key, &answer, self.backend.model())?;
        Ok(answer)
    }
}

#[async_trait]
impl IssueAnnotator for LlmAnnotator {
    fn info(&self) -> AnnotatorInfo {
        AnnotatorInfo {
            model: self.backend.model().to_string(),
            bugid_template_version: self.bugid_template.version.clone(),
            resp_template_version: self.resp_template.version.clone(),
            config_digest: format!(
                "{}+{}",
                self.config.bugid_sampling.digest(),
                self.config.resp_sampling.digest()
            ),
        }
    }

    async fn classify_bug(&self, issue: &RawIssue) -> Result<Option<bool>, PipelineError> {
        let context = build_bugid_context(issue, &self.config.budget);
        let answer = self
            .cached_complete(
                &self.bugid_template,
                &self.config.bugid_sampling,
                &issue.key(),
                &context,
            )
            .await?;
        let field = self
            .bugid_template
            .output_schema
            .fields
            .keys()
            .next()
            .expect("validated template")
            .clone();
        Ok(answer.field(&field).map(|v| v == "bug"))
    }

    async fn annotate(
        &self,
        issue: &RawIssue,
        events: &[crate::ingest::RawTimelineEvent],
        contributors: Option<&crate::ingest::ContributorSet>,
    ) -> Result<Option<Annotation>, PipelineError> {
        let selected = select_events(events, &self.config.event_kinds);
        let context =
            build_responsiveness_context(issue, &selected, contributors, &self.config.budget);
        let answer = self
            .cached_complete(
                &self.resp_template,
                &self.config.resp_sampling,
                &issue.key(),
                &context,
            )
            .await?;
        let Some(parsed) = &answer.parsed else {
            return Ok(None);
        };
        let is_duplicate = parsed.get("is_duplicate").map(String::as_str) == Some("true");
        let annotation = Annotation {
            is_duplicate,
            is_complex: false,
            bug_type: parsed
                .get("bug_type")
                .and_then(|v| v.parse::<BugType>().ok()),
            was_fixed: parsed.get("was_fixed").map(|v| v == "true"),
            annotator: Annotator::Llm,
            evidence: context.included_events.clone(),
        };
        Ok(Some(annotation))
    }
}

/// One line of an `--annotations` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationFileRecord {
    pub repo: RepoRef,
    pub number: u64,
    pub is_bug: bool,
    #[serde(default)]
    pub is_duplicate: bool,
    #[serde(default)]
    pub is_complex: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_type: Option<BugType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub was_fixed: Option<bool>,
}

/// Deterministic, network-free annotation source backed by a file of
/// records (typically human labels).
pub struct FileAnnotator {
    records: BTreeMap<IssueKey, AnnotationFileRecord>,
    digest: String,
}

impl FileAnnotator {
    pub fn from_records(records: Vec<AnnotationFileRecord>) -> Self {
        let mut digest = Sha256::new();
        let mut map = BTreeMap::new();
        for record in records {
            digest.update(serde_json::to_string(&record).expect("serializable").as_bytes());
            map.insert(
                IssueKey {
                    repo: record.repo.clone(),
                    number: record.number,
                },
                record,
            );
        }
        FileAnnotator {
            records: map,
            digest: hex::encode(&digest.finalize()[..8]),
        }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: AnnotationFileRecord = serde_json::from_str(line).map_err(|e| {
                PipelineError::Annotation(format!("{} line {}: {e}", path.display(), idx + 1))
            })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }
}

#[async_trait]
impl IssueAnnotator for FileAnnotator {
    fn info(&self) -> AnnotatorInfo {
        AnnotatorInfo {
            model: "annotations-file".to_string(),
            bugid_template_version: "-".to_string(),
            resp_template_version: "-".to_string(),
            config_digest: self.digest.clone(),
        }
    }

    async fn classify_bug(&self, issue: &RawIssue) -> Result<Option<bool>, PipelineError> {
        Ok(self.records.get(&issue.key()).map(|r| r.is_bug))
    }

    async fn annotate(
        &self,
        issue: &RawIssue,
        _events: &[crate::ingest::RawTimelineEvent],
        _contributors: Option<&crate::ingest::ContributorSet>,
    ) -> Result<Option<Annotation>, PipelineError> {
        let Some(record) = self.records.get(&issue.key()) else {
            return Ok(None);
        };
        let annotation = Annotation {
            is_duplicate: record.is_duplicate,
            is_complex: record.is_complex,
            bug_type: record.bug_type,
            was_fixed: record.was_fixed,
            annotator: Annotator::Human,
            evidence: Vec::new(),
        };
        // An incomplete record is no usable answer, same as a model reply
        // that fails the output contract.
        if annotation.validate().is_err() {
            return Ok(None);
        }
        Ok(Some(annotation))
    }
}

// ---------------------------------------------------------------------------
// The staged run
// ---------------------------------------------------------------------------

struct Ledger {
    stages: Vec<StageRecord>,
    exclusions: Vec<ExclusionRecord>,
    failure_count: usize,
}

impl Ledger {
    fn new() -> Self {
        Ledger {
            stages: Vec::new(),
            exclusions: Vec::new(),
            failure_count: 0,
        }
    }

    fn exclude(&mut self, stage: &str, key: &IssueKey, reason: impl Into<String>) {
        self.exclusions.push(ExclusionRecord {
            repo: key.repo.clone(),
            number: key.number,
            stage: stage.to_string(),
            reason: reason.into(),
        });
    }

    fn record_stage(
        &mut self,
        name: &str,
        input: usize,
        output: usize,
        started_at: DateTime<Utc>,
    ) {
        self.stages.push(StageRecord {
            name: name.to_string(),
            input_count: input,
            output_count: output,
            excluded_count: input - output,
            started_at,
            finished_at: Utc::now(),
        });
    }
}

/// Run the fixed stage sequence over already-loaded corpora.
///
/// `github` (with its cache) enables lazy timeline/contributor fetching for
/// stage two; offline runs pass `None` and use whatever the snapshots hold.
pub async fn execute_audit(
    corpora: &mut BTreeMap<RepoRef, Corpus>,
    snapshot_digest: &str,
    config: &AuditConfig,
    annotator: &dyn IssueAnnotator,
    github: Option<(&GithubClient, &SnapshotCache)>,
) -> Result<AuditOutcome, PipelineError> {
    let info = annotator.info();
    let run_id = compute_run_id(config, &info, snapshot_digest);
    let mut ledger = Ledger::new();

    // ingest: everything in the snapshots, tombstones excluded up front
    let started = Utc::now();
    let mut current: Vec<RawIssue> = Vec::new();
    let mut total_records = 0usize;
    for corpus in corpora.values() {
        for issue in corpus.issues.values() {
            total_records += 1;
            if issue.tombstone {
                ledger.exclude(STAGE_INGEST, &issue.key(), "tombstone");
            } else {
                current.push(issue.clone());
            }
        }
    }
    current.sort_by_key(|issue| issue.key());
    ledger.record_stage(STAGE_INGEST, total_records, current.len(), started);

    // exclude_prs
    let started = Utc::now();
    let input = current.len();
    current.retain(|issue| {
        let keep = !config.exclude_prs || !issue.is_pull_request;
        if !keep {
            ledger.exclude(STAGE_EXCLUDE_PRS, &issue.key(), "pull_request");
        }
        keep
    });
    ledger.record_stage(STAGE_EXCLUDE_PRS, input, current.len(), started);

    // require_closed
    let started = Utc::now();
    let input = current.len();
    current.retain(|issue| {
        let keep = config.include_open || issue.state == IssueState::Closed;
        if !keep {
            ledger.exclude(STAGE_REQUIRE_CLOSED, &issue.key(), "open_issue");
        }
        keep
    });
    ledger.record_stage(STAGE_REQUIRE_CLOSED, input, current.len(), started);

    // window
    let started = Utc::now();
    let input = current.len();
    current.retain(|issue| {
        let keep = config
            .window
            .map(|w| w.contains(issue.created_at))
            .unwrap_or(true);
        if !keep {
            ledger.exclude(STAGE_WINDOW, &issue.key(), "outside_window");
        }
        keep
    });
    ledger.record_stage(STAGE_WINDOW, input, current.len(), started);

    // stage one: bug identification
    let started = Utc::now();
    let input = current.len();
    let mut bugs: Vec<RawIssue> = Vec::new();
    for issue in current {
        match annotator.classify_bug(&issue).await {
            Ok(Some(true)) => bugs.push(issue),
            Ok(Some(false)) => ledger.exclude(STAGE_BUG_IDENTIFICATION, &issue.key(), "non_bug"),
            Ok(None) => ledger.exclude(STAGE_BUG_IDENTIFICATION, &issue.key(), "unparseable"),
            Err(e) => {
                warn!(issue = %issue.key(), error = %e, "stage-1 failure");
                ledger.failure_count += 1;
                ledger.exclude(STAGE_BUG_IDENTIFICATION, &issue.key(), format!("error: {e}"));
            }
        }
    }
    ledger.record_stage(STAGE_BUG_IDENTIFICATION, input, bugs.len(), started);

    // stage two: responsiveness annotation
    let started = Utc::now();
    let input = bugs.len();
    let mut annotated: Vec<(RawIssue, Annotation)> = Vec::new();
    for issue in bugs {
        let key = issue.key();
        if let Some((client, cache)) = github {
            ensure_enrichment(corpora, &key, client, cache).await?;
        }
        let corpus = corpora.get(&key.repo).expect("corpus loaded");
        let events = corpus.timeline(key.number);
        let contributors = corpus.contributors.as_ref();
        match annotator.annotate(&issue, events, contributors).await {
            Ok(Some(annotation)) => annotated.push((issue, annotation)),
            Ok(None) => ledger.exclude(STAGE_RESPONSIVENESS, &key, "unparseable"),
            Err(e) => {
                warn!(issue = %key, error = %e, "stage-2 failure");
                ledger.failure_count += 1;
                ledger.exclude(STAGE_RESPONSIVENESS, &key, format!("error: {e}"));
            }
        }
    }
    ledger.record_stage(STAGE_RESPONSIVENESS, input, annotated.len(), started);

    // derive verdicts; duplicates and complexes are excluded with
    // attribution, mirroring how they are dropped from published totals
    let started = Utc::now();
    let input = annotated.len();
    let mut verdicts: Vec<VerdictRecord> = Vec::new();
    for (issue, annotation) in annotated {
        let key = issue.key();
        match derive_verdict(&annotation) {
            Ok(verdict) => match verdict.class {
                VerdictClass::Duplicate => ledger.exclude(STAGE_DERIVE_VERDICT, &key, "duplicate"),
                VerdictClass::Complex => ledger.exclude(STAGE_DERIVE_VERDICT, &key, "complex"),
                class => verdicts.push(VerdictRecord {
                    repo: key.repo.clone(),
                    number: key.number,
                    bug_type: verdict.bug_type,
                    verdict: class,
                    reason: verdict.reason,
                    evidence: annotation.evidence.clone(),
                    model: info.model.clone(),
                    template_version: info.resp_template_version.clone(),
                    config_digest: info.config_digest.clone(),
                }),
            },
            Err(e) => {
                ledger.failure_count += 1;
                ledger.exclude(STAGE_DERIVE_VERDICT, &key, format!("error: {e}"));
            }
        }
    }
    ledger.record_stage(STAGE_DERIVE_VERDICT, input, verdicts.len(), started);

    Ok(AuditOutcome {
        run: AuditRun {
            run_id,
            stages: ledger.stages,
            config: config.clone(),
            annotator: info,
        },
        verdicts,
        exclusions: ledger.exclusions,
        failure_count: ledger.failure_count,
    })
}

async fn ensure_enrichment(
    corpora: &mut BTreeMap<RepoRef, Corpus>,
    key: &IssueKey,
    client: &GithubClient,
    cache: &SnapshotCache,
) -> Result<(), PipelineError> {
    let needs_timeline = corpora
        .get(&key.repo)
        .map(|c| !c.timelines.contains_key(&key.number))
        .unwrap_or(true);
    if needs_timeline {
        let events = client.fetch_timeline(&key.repo, key.number, cache).await?;
        corpora
            .get_mut(&key.repo)
            .expect("corpus loaded")
            .timelines
            .insert(key.number, events);
    }
    let needs_contributors = corpora
        .get(&key.repo)
        .map(|c| c.contributors.is_none())
        .unwrap_or(true);
    if needs_contributors {
        let set = client.fetch_contributors(&key.repo, cache).await?;
        corpora
            .get_mut(&key.repo)
            .expect("corpus loaded")
            .contributors = Some(set);
    }
    Ok(())
}

/// Ensure snapshots exist (fetching when a client is available), then run
/// the staged audit.
pub async fn run_audit(
    repos: &[RepoRef],
    config: &AuditConfig,
    cache: &SnapshotCache,
    github: Option<&GithubClient>,
    annotator: &dyn IssueAnnotator,
) -> Result<AuditOutcome, PipelineError> {
    let mut corpora = BTreeMap::new();
    let mut digest = Sha256::new();
    for repo in repos {
        if !cache.has_snapshot(repo) {
            let client = github.ok_or_else(|| {
                PipelineError::Annotation(format!(
                    "no snapshot for {repo} and no GitHub client configured"
                ))
            })?;
            client.fetch_issues(repo, None, cache).await?;
        }
        digest.update(std::fs::read(cache.path_for(repo))?);
        corpora.insert(repo.clone(), cache.load(repo)?);
    }
    let snapshot_digest = hex::encode(&digest.finalize()[..8]);
    execute_audit(
        &mut corpora,
        &snapshot_digest,
        config,
        annotator,
        github.map(|g| (g, cache)),
    )
    .await
}

fn compute_run_id(config: &AuditConfig, info: &AnnotatorInfo, snapshot_digest: &str) -> String {
    let fingerprint = serde_json::json!({
        "config": config,
        "annotator": info,
        "snapshots": snapshot_digest,
    });
    let hash = Sha256::digest(fingerprint.to_string().as_bytes());
    hex::encode(&hash[..8])
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

/// Write `verdicts.jsonl`, `exclusions.jsonl`, and `run.json` under
/// `<out_dir>/run-<run_id>/`. Verdict lines are sorted by issue key, so a
/// repeated deterministic run rewrites identical bytes.
pub fn write_outputs(out_dir: &Path, outcome: &AuditOutcome) -> Result<PathBuf, PipelineError> {
    let dir = out_dir.join(format!("run-{}", outcome.run.run_id));
    std::fs::create_dir_all(&dir)?;

    let mut verdict_lines = String::new();
    let mut sorted = outcome.verdicts.clone();
    sorted.sort_by(|a, b| (&a.repo, a.number).cmp(&(&b.repo, b.number)));
    for v in &sorted {
        verdict_lines.push_str(&serde_json::to_string(v)?);
        verdict_lines.push('\n');
    }
    std::fs::write(dir.join("verdicts.jsonl"), verdict_lines)?;

    let mut exclusion_lines = String::new();
    for e in &outcome.exclusions {
        exclusion_lines.push_str(&serde_json::to_string(e)?);
        exclusion_lines.push('\n');
    }
    std::fs::write(dir.join("exclusions.jsonl"), exclusion_lines)?;

    std::fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(&outcome.run)?,
    )?;
    Ok(dir)
}

pub fn read_verdicts(path: &Path) -> Result<Vec<VerdictRecord>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

pub fn read_exclusions(path: &Path) -> Result<Vec<ExclusionRecord>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

/// Report-ready entries from a run directory: persisted verdicts plus the
/// duplicate/complex exclusions, so project counts cover all five classes.
pub fn run_dir_entries(dir: &Path) -> Result<Vec<VerdictEntry>, PipelineError> {
    let mut entries: Vec<VerdictEntry> = read_verdicts(&dir.join("verdicts.jsonl"))?
        .iter()
        .map(VerdictRecord::entry)
        .collect();
    for e in read_exclusions(&dir.join("exclusions.jsonl"))? {
        let class = match e.reason.as_str() {
            "duplicate" => VerdictClass::Duplicate,
            "complex" => VerdictClass::Complex,
            _ => continue,
        };
        entries.push(VerdictEntry {
            repo: e.repo,
            number: e.number,
            class,
            bug_type: None,
            reason: None,
        });
    }
    Ok(entries)
}
