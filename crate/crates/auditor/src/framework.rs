//! The deterministic verdict engine.
//!
//! An [`Annotation`] records four facts about a closed bug report: whether it
//! duplicates an earlier report, whether it is too tangled to classify,
//! where the bug lives ([`BugType`]), and whether it was actually fixed.
//! [`derive_verdict`] maps those facts to a [`Verdict`] with three rules:
//!
//! * duplicate and complex short-circuit (duplicate checked first);
//! * a fixed bug is `Responsive` regardless of its type;
//! * an unfixed bug is `NotApplicable` when internal and `NotResponsive`
//!   when external or unknown.
//!
//! Keeping these rules here — and out of any model prompt — means every
//! verdict in a report can be replayed from its annotation.
//!
//! The module also houses the fixed taxonomy of reasons a maintainer did not
//! address a bug ([`TaxonomyReason`]) and the contingency [`tally`] used by
//! the reporting layer.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameworkError {
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error("unknown taxonomy value: {0}")]
    UnknownReason(String),
    #[error("subcategory {sub} belongs to {expected}, not {given}")]
    MismatchedCategory {
        sub: TaxonomySub,
        expected: TaxonomyCategory,
        given: TaxonomyCategory,
    },
}

/// Who owns a bug: the package itself, the reporter's own code, or nobody
/// can tell because upstream never weighed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugType {
    Internal,
    External,
    Unknown,
}

impl BugType {
    pub const ALL: [BugType; 3] = [BugType::Internal, BugType::External, BugType::Unknown];

    pub fn ident(self) -> &'static str {
        match self {
            BugType::Internal => "internal",
            BugType::External => "external",
            BugType::Unknown => "unknown",
        }
    }
}

impl fmt::Display for BugType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BugType::Internal => "Internal",
            BugType::External => "External",
            BugType::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

impl FromStr for BugType {
    type Err = FrameworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "internal" => Ok(BugType::Internal),
            "external" => Ok(BugType::External),
            "unknown" => Ok(BugType::Unknown),
            other => Err(FrameworkError::UnknownReason(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotator {
    Human,
    Llm,
}

/// Kinds of resolution evidence accepted for a `was_fixed = true` call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    MergedPr,
    LinkedCommit,
    UpstreamFixComment,
}

impl EvidenceKind {
    /// Tag an event identifier with this kind, e.g. `merged_pr:42.3`.
    pub fn tag(self, event_id: &str) -> String {
        let prefix = match self {
            EvidenceKind::MergedPr => "merged_pr",
            EvidenceKind::LinkedCommit => "linked_commit",
            EvidenceKind::UpstreamFixComment => "upstream_fix_comment",
        };
        format!("{prefix}:{event_id}")
    }
}

/// The four manual-framework fields from which a verdict is derived.
///
/// `bug_type` and `was_fixed` may be absent only when the issue is flagged
/// duplicate or complex; otherwise both are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub is_duplicate: bool,
    pub is_complex: bool,
    pub bug_type: Option<BugType>,
    pub was_fixed: Option<bool>,
    pub annotator: Annotator,
    /// Issue-event identifiers supporting the call, optionally tagged with
    /// an [`EvidenceKind`] prefix.
    #[serde(default)]
    pub evidence: Vec<String>,
}

impl Annotation {
    pub fn validate(&self) -> Result<(), FrameworkError> {
        if !self.is_duplicate && !self.is_complex {
            if self.bug_type.is_none() {
                return Err(FrameworkError::InvalidAnnotation(
                    "bug_type is required unless the issue is duplicate or complex".into(),
                ));
            }
            if self.was_fixed.is_none() {
                return Err(FrameworkError::InvalidAnnotation(
                    "was_fixed is required unless the issue is duplicate or complex".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Final classification of one bug report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictClass {
    Duplicate,
    Complex,
    Responsive,
    NotResponsive,
    NotApplicable,
}

impl VerdictClass {
    pub const ALL: [VerdictClass; 5] = [
        VerdictClass::Duplicate,
        VerdictClass::Complex,
        VerdictClass::Responsive,
        VerdictClass::NotResponsive,
        VerdictClass::NotApplicable,
    ];

    /// The classes that participate in responsiveness ratios; duplicate and
    /// complex issues are excluded from that base.
    pub const THREE_WAY: [VerdictClass; 3] = [
        VerdictClass::Responsive,
        VerdictClass::NotResponsive,
        VerdictClass::NotApplicable,
    ];

    pub fn is_three_way(self) -> bool {
        matches!(
            self,
            VerdictClass::Responsive | VerdictClass::NotResponsive | VerdictClass::NotApplicable
        )
    }

    pub fn ident(self) -> &'static str {
        match self {
            VerdictClass::Duplicate => "duplicate",
            VerdictClass::Complex => "complex",
            VerdictClass::Responsive => "responsive",
            VerdictClass::NotResponsive => "not_responsive",
            VerdictClass::NotApplicable => "not_applicable",
        }
    }
}

impl fmt::Display for VerdictClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictClass::Duplicate => "Duplicate",
            VerdictClass::Complex => "Complex",
            VerdictClass::Responsive => "Responsive",
            VerdictClass::NotResponsive => "Not-responsive",
            VerdictClass::NotApplicable => "Not-applicable",
        };
        f.write_str(s)
    }
}

impl FromStr for VerdictClass {
    type Err = FrameworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "duplicate" => Ok(VerdictClass::Duplicate),
            "complex" => Ok(VerdictClass::Complex),
            "responsive" => Ok(VerdictClass::Responsive),
            "not_responsive" | "notresponsive" => Ok(VerdictClass::NotResponsive),
            "not_applicable" | "notapplicable" => Ok(VerdictClass::NotApplicable),
            other => Err(FrameworkError::UnknownReason(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub class: VerdictClass,
    pub bug_type: Option<BugType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<TaxonomyReason>,
}

impl Verdict {
    pub fn validate(&self) -> Result<(), FrameworkError> {
        if self.reason.is_some() && self.class != VerdictClass::NotResponsive {
            return Err(FrameworkError::InvalidAnnotation(
                "a taxonomy reason is only valid on a not_responsive verdict".into(),
            ));
        }
        if self.class.is_three_way() && self.bug_type.is_none() {
            return Err(FrameworkError::InvalidAnnotation(format!(
                "{} verdict requires a bug_type",
                self.class.ident()
            )));
        }
        Ok(())
    }

    /// Attach a taxonomy reason to a `NotResponsive` verdict.
    pub fn with_reason(mut self, reason: TaxonomyReason) -> Result<Self, FrameworkError> {
        validate_taxonomy(&reason)?;
        if self.class != VerdictClass::NotResponsive {
            return Err(FrameworkError::InvalidAnnotation(
                "a taxonomy reason is only valid on a not_responsive verdict".into(),
            ));
        }
        self.reason = Some(reason);
        Ok(self)
    }
}

/// Map an annotation to its verdict.
///
/// Total over the valid annotation space: duplicate wins over complex, a
/// fixed bug is `Responsive` whatever its type, an unfixed internal bug is
/// `NotApplicable`, and an unfixed external or unknown bug is
/// `NotResponsive`.
pub fn derive_verdict(a: &Annotation) -> Result<Verdict, FrameworkError> {
    a.validate()?;
    if a.is_duplicate {
        return Ok(Verdict {
            class: VerdictClass::Duplicate,
            bug_type: a.bug_type,
            reason: None,
        });
    }
    if a.is_complex {
        return Ok(Verdict {
            class: VerdictClass::Complex,
            bug_type: a.bug_type,
            reason: None,
        });
    }
    // validate() guarantees both fields are present past this point.
    let bug_type = a.bug_type.ok_or_else(|| {
        FrameworkError::InvalidAnnotation("bug_type missing after validation".into())
    })?;
    let was_fixed = a.was_fixed.ok_or_else(|| {
        FrameworkError::InvalidAnnotation("was_fixed missing after validation".into())
    })?;
    let class = if was_fixed {
        VerdictClass::Responsive
    } else if bug_type == BugType::Internal {
        VerdictClass::NotApplicable
    } else {
        VerdictClass::NotResponsive
    };
    Ok(Verdict {
        class,
        bug_type: Some(bug_type),
        reason: None,
    })
}

// ---------------------------------------------------------------------------
// Taxonomy of non-responsiveness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyCategory {
    ContributionPractices,
    Dependency,
    LibraryStandards,
    LackOfEngagement,
}

impl TaxonomyCategory {
    pub const ALL: [TaxonomyCategory; 4] = [
        TaxonomyCategory::ContributionPractices,
        TaxonomyCategory::Dependency,
        TaxonomyCategory::LibraryStandards,
        TaxonomyCategory::LackOfEngagement,
    ];
}

impl fmt::Display for TaxonomyCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TaxonomyCategory::ContributionPractices => "Contribution Practices",
            TaxonomyCategory::Dependency => "Dependency",
            TaxonomyCategory::LibraryStandards => "Library Standards",
            TaxonomyCategory::LackOfEngagement => "Lack of Engagement",
        };
        f.write_str(s)
    }
}

/// The twelve reasons a bug report goes unaddressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomySub {
    /// Report ignored the project's issue template and was closed unfixed.
    TemplateViolation,
    /// Maintainers could not reproduce and the reporter never supplied the
    /// requested details.
    InsufficientInformation,
    /// Root cause known; the team is waiting for someone to contribute a fix.
    WaitingForPullRequest,
    /// The defect sits in a dependency that has to ship the fix.
    DependencyIssue,
    /// The dependency fixed it, but upgrading would break the package.
    IncompatibleVersions,
    /// The dependency will not acknowledge the bug; nothing upstream can do.
    BeyondTheScope,
    /// Too rare to justify the fix.
    EdgeCase,
    /// Only bites users who ignore documented practice.
    DesignConcern,
    /// A fix would require refactoring the team cannot afford right now.
    Priority,
    /// The package is no longer maintained.
    DiscontinueMaintenance,
    /// Closed without a single maintainer comment.
    NoComments,
    /// Acknowledged, investigated for a while, then silently dropped.
    StaledInvestigation,
}

impl TaxonomySub {
    pub const ALL: [TaxonomySub; 12] = [
        TaxonomySub::TemplateViolation,
        TaxonomySub::InsufficientInformation,
        TaxonomySub::WaitingForPullRequest,
        TaxonomySub::DependencyIssue,
        TaxonomySub::IncompatibleVersions,
        TaxonomySub::BeyondTheScope,
        TaxonomySub::EdgeCase,
        TaxonomySub::DesignConcern,
        TaxonomySub::Priority,
        TaxonomySub::DiscontinueMaintenance,
        TaxonomySub::NoComments,
        TaxonomySub::StaledInvestigation,
    ];

    /// The category each subcategory belongs to; this pairing is the whole
    /// constraint [`validate_taxonomy`] enforces.
    pub fn category(self) -> TaxonomyCategory {
        match self {
            TaxonomySub::TemplateViolation
            | TaxonomySub::InsufficientInformation
            | TaxonomySub::WaitingForPullRequest => TaxonomyCategory::ContributionPractices,
            TaxonomySub::DependencyIssue
            | TaxonomySub::IncompatibleVersions
            | TaxonomySub::BeyondTheScope => TaxonomyCategory::Dependency,
            TaxonomySub::EdgeCase
            | TaxonomySub::DesignConcern
            | TaxonomySub::Priority
            | TaxonomySub::DiscontinueMaintenance => TaxonomyCategory::LibraryStandards,
            TaxonomySub::NoComments | TaxonomySub::StaledInvestigation => {
                TaxonomyCategory::LackOfEngagement
            }
        }
    }
}

impl fmt::Display for TaxonomySub {
    // Same snake_case form serde uses.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dbg = format!("{self:?}");
        let mut out = String::with_capacity(dbg.len() + 4);
        for (i, ch) in dbg.chars().enumerate() {
            if ch.is_ascii_uppercase() {
                if i > 0 {
                    out.push('_');
                }
                out.push(ch.to_ascii_lowercase());
            } else {
                out.push(ch);
            }
        }
        f.write_str(&out)
    }
}

impl FromStr for TaxonomySub {
    type Err = FrameworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let canon = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Self::ALL
            .iter()
            .copied()
            .find(|sub| sub.to_string() == canon)
            .ok_or_else(|| FrameworkError::UnknownReason(s.to_string()))
    }
}

/// A (category, subcategory) pair explaining a `NotResponsive` verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyReason {
    pub category: TaxonomyCategory,
    pub sub: TaxonomySub,
}

impl TaxonomyReason {
    pub fn new(sub: TaxonomySub) -> Self {
        TaxonomyReason {
            category: sub.category(),
            sub,
        }
    }
}

/// Accept exactly the twelve valid (category, subcategory) pairs.
pub fn validate_taxonomy(reason: &TaxonomyReason) -> Result<(), FrameworkError> {
    let expected = reason.sub.category();
    if reason.category != expected {
        return Err(FrameworkError::MismatchedCategory {
            sub: reason.sub,
            expected,
            given: reason.category,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Contingency tally
// ---------------------------------------------------------------------------

/// Bug type × three-way verdict counts, with duplicate/complex counts kept
/// alongside so nothing entering the tally is lost.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    cells: BTreeMap<BugType, BTreeMap<VerdictClass, u64>>,
    pub duplicates: u64,
    pub complexes: u64,
    /// Three-way verdicts that arrived without a bug type. These violate the
    /// verdict invariant and are counted here rather than guessed into a
    /// column.
    pub invalid: u64,
}

impl ContingencyTable {
    pub fn cell(&self, bug_type: BugType, class: VerdictClass) -> u64 {
        self.cells
            .get(&bug_type)
            .and_then(|row| row.get(&class))
            .copied()
            .unwrap_or(0)
    }

    /// Total three-way verdicts for one bug type (a column of the table).
    pub fn column_total(&self, bug_type: BugType) -> u64 {
        VerdictClass::THREE_WAY
            .iter()
            .map(|c| self.cell(bug_type, *c))
            .sum()
    }

    /// Total verdicts of one class across all bug types (a row).
    pub fn row_total(&self, class: VerdictClass) -> u64 {
        BugType::ALL.iter().map(|t| self.cell(*t, class)).sum()
    }

    /// All three-way verdicts in the table.
    pub fn grand_total(&self) -> u64 {
        BugType::ALL.iter().map(|t| self.column_total(*t)).sum()
    }

    /// Share of a column held by one class, as a percentage. `None` when the
    /// column is empty.
    pub fn column_percent(&self, bug_type: BugType, class: VerdictClass) -> Option<f64> {
        let total = self.column_total(bug_type);
        if total == 0 {
            None
        } else {
            Some(self.cell(bug_type, class) as f64 / total as f64 * 100.0)
        }
    }
}

/// Count verdicts into a contingency table.
pub fn tally<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> ContingencyTable {
    let mut table = ContingencyTable::default();
    for v in verdicts {
        match v.class {
            VerdictClass::Duplicate => table.duplicates += 1,
            VerdictClass::Complex => table.complexes += 1,
            class => match v.bug_type {
                Some(t) => {
                    *table
                        .cells
                        .entry(t)
                        .or_default()
                        .entry(class)
                        .or_default() += 1;
                }
                None => table.invalid += 1,
            },
        }
    }
    table
}

/// Every reachable (flags, bug type, fixed) combination, for exhaustive
/// checks and for `--print-table`.
pub fn enumerate_annotations() -> Vec<Annotation> {
    let mut out = Vec::new();
    let types = [None, Some(BugType::Internal), Some(BugType::External), Some(BugType::Unknown)];
    let fixed = [None, Some(false), Some(true)];
    for is_duplicate in [false, true] {
        for is_complex in [false, true] {
            for bug_type in types {
                for was_fixed in fixed {
                    let a = Annotation {
                        is_duplicate,
                        is_complex,
                        bug_type,
                        was_fixed,
                        annotator: Annotator::Human,
                        evidence: vec![],
                    };
                    if a.validate().is_ok() {
                        out.push(a);
                    }
                }
            }
        }
    }
    out
}

/// Render the decision rules as a plain-text truth table.
pub fn truth_table() -> String {
    let mut rows: Vec<[String; 5]> = vec![[
        "duplicate".into(),
        "complex".into(),
        "bug_type".into(),
        "was_fixed".into(),
        "verdict".into(),
    ]];
    let fmt_opt = |o: Option<String>| o.unwrap_or_else(|| "-".into());
    rows.push([
        "yes".into(),
        "any".into(),
        "-".into(),
        "-".into(),
        VerdictClass::Duplicate.to_string(),
    ]);
    rows.push([
        "no".into(),
        "yes".into(),
        "-".into(),
        "-".into(),
        VerdictClass::Complex.to_string(),
    ]);
    for bug_type in BugType::ALL {
        for was_fixed in [true, false] {
            let a = Annotation {
                is_duplicate: false,
                is_complex: false,
                bug_type: Some(bug_type),
                was_fixed: Some(was_fixed),
                annotator: Annotator::Human,
                evidence: vec![],
            };
            let v = derive_verdict(&a).expect("complete annotation");
            rows.push([
                "no".into(),
                "no".into(),
                fmt_opt(Some(bug_type.to_string())),
                if was_fixed { "yes".into() } else { "no".into() },
                v.class.to_string(),
            ]);
        }
    }
    let mut widths = [0usize; 5];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{:width$}", cell, width = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if r == 0 {
            let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            out.push_str(&sep.join("  "));
            out.push('\n');
        }
    }
    out
}
