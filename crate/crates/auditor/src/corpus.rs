//! Turn raw snapshots into an analysis corpus.
//!
//! Four filter stages run in a fixed order — pull-request exclusion, bug
//! identification, closed-only, time window — and a [`FilterTrace`] records
//! the count surviving each stage so a run can print its funnel. Bug labels
//! are matched against a configurable [`LabelVocabulary`] after
//! canonicalization: lowercase, trimmed, internal whitespace collapsed, and
//! `-` / `_` / `:` treated as token separators. Patterns match on token
//! boundaries, so the label `debug` never counts as a bug label.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framework::VerdictClass;
use crate::ingest::{IssueKey, IssueState, RawIssue, RepoRef};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid bug pattern `{pattern}`: {source}")]
    InvalidPattern {
        pattern: String,
        source: regex::Error,
    },
    #[error("allowlist entry `{0}` matches a bug pattern")]
    AllowlistOverlap(String),
    #[error("bug_patterns must not be empty")]
    EmptyPatterns,
    #[error("window start must precede window end")]
    InvalidWindow,
    #[error("cannot parse window `{0}`; expected START..END as YYYY-MM or YYYY-MM-DD")]
    UnparseableWindow(String),
    #[error("vocabulary file {path}: {message}")]
    VocabularyFile { path: String, message: String },
    #[error("ground truth line {line}: {message}")]
    GroundTruth { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open `[start, end)` interval over issue creation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl TimeWindow {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self, CorpusError> {
        if start >= end {
            return Err(CorpusError::InvalidWindow);
        }
        Ok(TimeWindow { start, end })
    }

    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        ts >= self.start && ts < self.end
    }

    /// Parse `2017-08..2020-08` (month precision) or full `YYYY-MM-DD` dates.
    /// A month bound expands to the first instant of that month; the end
    /// bound stays exclusive.
    pub fn parse(spec: &str) -> Result<Self, CorpusError> {
        let (a, b) = spec
            .split_once("..")
            .ok_or_else(|| CorpusError::UnparseableWindow(spec.to_string()))?;
        let parse_bound = |s: &str| -> Option<DateTime<Utc>> {
            let s = s.trim();
            let full = if s.len() == 7 {
                format!("{s}-01T00:00:00Z")
            } else {
                format!("{s}T00:00:00Z")
            };
            full.parse::<DateTime<Utc>>().ok()
        };
        let start =
            parse_bound(a).ok_or_else(|| CorpusError::UnparseableWindow(spec.to_string()))?;
        let end =
            parse_bound(b).ok_or_else(|| CorpusError::UnparseableWindow(spec.to_string()))?;
        TimeWindow::new(start, end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugLabelMode {
    /// Keep issues whose labels match a bug pattern.
    RegexLabels,
    /// Keep issues a model classified as bug reports (attached out of band).
    LlmClassified,
    /// Union of the two.
    Either,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSpec {
    pub exclude_prs: bool,
    pub require_closed: bool,
    pub window: Option<TimeWindow>,
    pub bug_label_mode: BugLabelMode,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            exclude_prs: true,
            require_closed: true,
            window: None,
            bug_label_mode: BugLabelMode::RegexLabels,
        }
    }
}

// ---------------------------------------------------------------------------
// Label canonicalization and the vocabulary
// ---------------------------------------------------------------------------

/// Lowercase, trim, collapse runs of whitespace, and turn `-` `_` `:` into
/// single spaces: `"Possibly-Bug "` becomes `"possibly bug"`.
pub fn canonicalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    let mut pending_space = false;
    for ch in label.trim().chars() {
        let ch = if matches!(ch, '-' | '_' | ':') { ' ' } else { ch };
        if ch.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            for lower in ch.to_lowercase() {
                out.push(lower);
            }
        }
    }
    out
}

/// Bug-label patterns plus the curated non-bug allowlist.
///
/// Each pattern is a regex fragment matched against the canonicalized label
/// with word boundaries at both ends, so the default `bugs?` hits
/// `"Possibly Bug"` and `"type: bug"` but not `"debug"`.
#[derive(Debug, Clone)]
pub struct LabelVocabulary {
    bug_patterns: Vec<String>,
    nonbug_allowlist: BTreeSet<String>,
    excluded_cooccurring: BTreeSet<String>,
    compiled: Vec<Regex>,
    allow_res: Vec<Regex>,
}

/// On-disk schema for the vocabulary config file.
#[derive(Debug, Serialize, Deserialize)]
struct VocabularyFile {
    bug_patterns: Vec<String>,
    #[serde(default)]
    nonbug_allowlist: Vec<String>,
}

impl LabelVocabulary {
    pub fn new(
        bug_patterns: Vec<String>,
        nonbug_allowlist: Vec<String>,
    ) -> Result<Self, CorpusError> {
        if bug_patterns.is_empty() {
            return Err(CorpusError::EmptyPatterns);
        }
        let mut compiled = Vec::with_capacity(bug_patterns.len());
        for p in &bug_patterns {
            let re = Regex::new(&format!(r"\b(?:{p})\b")).map_err(|source| {
                CorpusError::InvalidPattern {
                    pattern: p.clone(),
                    source,
                }
            })?;
            compiled.push(re);
        }
        let allowlist: BTreeSet<String> = nonbug_allowlist
            .iter()
            .map(|s| canonicalize_label(s))
            .filter(|s| !s.is_empty())
            .collect();
        let mut allow_res = Vec::with_capacity(allowlist.len());
        for entry in &allowlist {
            if compiled.iter().any(|re| re.is_match(entry)) {
                return Err(CorpusError::AllowlistOverlap(entry.clone()));
            }
            let re = Regex::new(&format!(r"\b(?:{})\b", regex::escape(entry))).map_err(
                |source| CorpusError::InvalidPattern {
                    pattern: entry.clone(),
                    source,
                },
            )?;
            allow_res.push(re);
        }
        Ok(LabelVocabulary {
            bug_patterns,
            nonbug_allowlist: allowlist,
            excluded_cooccurring: BTreeSet::new(),
            compiled,
            allow_res,
        })
    }

    /// The shipped default: the token `bug`, optionally plural, with common
    /// qualifier prefixes folded in by token matching; allowlist seeded with
    /// the five curated non-bug labels.
    pub fn default_vocabulary() -> Self {
        LabelVocabulary::new(
            vec!["bugs?".to_string()],
            ["feature", "request", "idea", "proposal", "quality"]
                .into_iter()
                .map(str::to_string)
                .collect(),
        )
        .expect("default vocabulary is valid")
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, CorpusError> {
        let file: VocabularyFile =
            toml::from_str(text).map_err(|e| CorpusError::VocabularyFile {
                path: origin.to_string(),
                message: e.to_string(),
            })?;
        LabelVocabulary::new(file.bug_patterns, file.nonbug_allowlist)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn bug_patterns(&self) -> &[String] {
        &self.bug_patterns
    }

    pub fn nonbug_allowlist(&self) -> &BTreeSet<String> {
        &self.nonbug_allowlist
    }

    pub fn excluded_cooccurring(&self) -> &BTreeSet<String> {
        &self.excluded_cooccurring
    }

    pub fn set_excluded_cooccurring(&mut self, labels: BTreeSet<String>) {
        self.excluded_cooccurring = labels;
    }

    pub fn is_bug_label(&self, label: &str) -> bool {
        let canon = canonicalize_label(label);
        self.compiled.iter().any(|re| re.is_match(&canon))
    }

    /// Bug patterns take precedence: a label that matches both sides is a
    /// bug label, never an allowlisted one.
    pub fn is_allowlisted(&self, label: &str) -> bool {
        let canon = canonicalize_label(label);
        if self.compiled.iter().any(|re| re.is_match(&canon)) {
            return false;
        }
        self.allow_res.iter().any(|re| re.is_match(&canon))
    }
}

/// True iff any canonicalized label matches any bug pattern on a token
/// boundary.
pub fn is_bug_labeled(labels: &[String], vocab: &LabelVocabulary) -> bool {
    labels.iter().any(|l| vocab.is_bug_label(l))
}

// ---------------------------------------------------------------------------
// The filter funnel
// ---------------------------------------------------------------------------

pub const STAGE_EXCLUDE_PRS: &str = "exclude_prs";
pub const STAGE_BUG_IDENTIFICATION: &str = "bug_identification";
pub const STAGE_REQUIRE_CLOSED: &str = "require_closed";
pub const STAGE_WINDOW: &str = "window";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStageTrace {
    pub name: String,
    pub input: usize,
    pub output: usize,
    pub excluded: usize,
}

/// Per-stage survivor counts for one `apply_filters` run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTrace {
    pub stages: Vec<FilterStageTrace>,
    /// The timestamp field the window stage compares against.
    pub window_field: String,
}

impl FilterTrace {
    pub fn final_count(&self) -> usize {
        self.stages.last().map(|s| s.output).unwrap_or(0)
    }

    /// Plain-text funnel table.
    pub fn render_text(&self) -> String {
        let mut out = String::from("stage                 input   output  excluded\n");
        for s in &self.stages {
            out.push_str(&format!(
                "{:<20} {:>7} {:>8} {:>9}\n",
                s.name, s.input, s.output, s.excluded
            ));
        }
        out
    }
}

impl fmt::Display for FilterTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render_text())
    }
}

/// Apply the four filter stages in their fixed order and record the funnel.
///
/// `llm_classifications` feeds the bug-identification stage in
/// `LlmClassified` / `Either` modes; issues without an entry count as
/// unclassified (and are excluded in `LlmClassified` mode).
pub fn apply_filters(
    issues: &[RawIssue],
    spec: &FilterSpec,
    vocab: &LabelVocabulary,
    llm_classifications: Option<&BTreeMap<IssueKey, bool>>,
) -> (Vec<RawIssue>, FilterTrace) {
    let mut current: Vec<RawIssue> = issues.to_vec();
    let mut stages = Vec::with_capacity(4);

    let mut run_stage = |name: &str, current: &mut Vec<RawIssue>, keep: &dyn Fn(&RawIssue) -> bool| {
        let input = current.len();
        current.retain(|i| keep(i));
        stages.push(FilterStageTrace {
            name: name.to_string(),
            input,
            output: current.len(),
            excluded: input - current.len(),
        });
    };

    run_stage(STAGE_EXCLUDE_PRS, &mut current, &|i| {
        !spec.exclude_prs || !i.is_pull_request
    });

    let llm_says_bug = |issue: &RawIssue| -> bool {
        llm_classifications
            .and_then(|m| m.get(&issue.key()).copied())
            .unwrap_or(false)
    };
    run_stage(STAGE_BUG_IDENTIFICATION, &mut current, &|i| {
        match spec.bug_label_mode {
            BugLabelMode::RegexLabels => is_bug_labeled(&i.labels, vocab),
            BugLabelMode::LlmClassified => llm_says_bug(i),
            BugLabelMode::Either => is_bug_labeled(&i.labels, vocab) || llm_says_bug(i),
        }
    });

    run_stage(STAGE_REQUIRE_CLOSED, &mut current, &|i| {
        !spec.require_closed || i.state == IssueState::Closed
    });

    run_stage(STAGE_WINDOW, &mut current, &|i| match &spec.window {
        Some(w) => w.contains(i.created_at),
        None => true,
    });

    (
        current,
        FilterTrace {
            stages,
            window_field: "created_at".to_string(),
        },
    )
}

// ---------------------------------------------------------------------------
// Ground-truth curation
// ---------------------------------------------------------------------------

/// All canonicalized labels that are not bug-matched and never co-occur on
/// any issue with a bug-matched label, sorted lexicographically.
///
/// Output is independent of the order issues are supplied in.
pub fn curate_nonbug_labels(issues: &[RawIssue], vocab: &LabelVocabulary) -> Vec<String> {
    let mut all: BTreeSet<String> = BTreeSet::new();
    let mut cooccurring: BTreeSet<String> = BTreeSet::new();
    for issue in issues {
        let canon: Vec<String> = issue.labels.iter().map(|l| canonicalize_label(l)).collect();
        let has_bug = issue.labels.iter().any(|l| vocab.is_bug_label(l));
        for (raw, c) in issue.labels.iter().zip(&canon) {
            if c.is_empty() {
                continue;
            }
            all.insert(c.clone());
            if has_bug || vocab.is_bug_label(raw) {
                cooccurring.insert(c.clone());
            }
        }
    }
    all.into_iter()
        .filter(|c| !cooccurring.contains(c))
        .collect()
}

/// Seeded, reproducible sample of up to `k` issues per candidate label.
pub fn sample_for_review(
    issues: &[RawIssue],
    candidates: &[String],
    k: usize,
    seed: u64,
) -> BTreeMap<String, Vec<IssueKey>> {
    let mut by_label: BTreeMap<&str, Vec<IssueKey>> = BTreeMap::new();
    for issue in issues {
        let canon: BTreeSet<String> = issue.labels.iter().map(|l| canonicalize_label(l)).collect();
        for cand in candidates {
            if canon.contains(cand) {
                by_label.entry(cand.as_str()).or_default().push(issue.key());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for cand in candidates {
        let mut keys = by_label.remove(cand.as_str()).unwrap_or_default();
        keys.sort();
        keys.dedup();
        let take = k.min(keys.len());
        // Partial Fisher-Yates: the first `take` slots end up as the sample.
        for i in 0..take {
            let j = rng.random_range(i..keys.len());
            keys.swap(i, j);
        }
        keys.truncate(take);
        out.insert(cand.clone(), keys);
    }
    out
}

// ---------------------------------------------------------------------------
// Ground-truth records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldSource {
    ManualRq1,
    NonBugCuration,
    UserProvided,
}

/// One labeled issue in a benchmark set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub repo: RepoRef,
    pub number: u64,
    pub gold_is_bug: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_verdict: Option<VerdictClass>,
    pub source: GoldSource,
}

impl GroundTruthRecord {
    pub fn key(&self) -> IssueKey {
        IssueKey {
            repo: self.repo.clone(),
            number: self.number,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.gold_verdict.is_some() && !self.gold_is_bug {
            return Err(CorpusError::GroundTruth {
                line: 0,
                message: "gold_verdict present on a non-bug record".into(),
            });
        }
        Ok(())
    }
}

/// Load a line-delimited ground-truth file, validating each record.
pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: GroundTruthRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::GroundTruth {
                line: idx + 1,
                message: e.to_string(),
            })?;
        record.validate().map_err(|e| CorpusError::GroundTruth {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
