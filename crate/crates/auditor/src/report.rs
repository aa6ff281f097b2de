//! Aggregate verdicts into package-level and ecosystem-level statistics and
//! render them as tables or machine-readable exports.
//!
//! Ratio denominators use only issues carrying a final three-way verdict;
//! duplicate and complex issues are counted but excluded from that base.
//! Ecosystem medians and interquartile ranges use linear interpolation
//! between order statistics (`h = (n-1)·p`), the rule documented here so
//! numbers are reproducible across implementations.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::framework::{BugType, ContingencyTable, TaxonomyReason, VerdictClass};
use crate::ingest::RepoRef;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("verdicts span multiple repos: {0} and {1}")]
    MixedRepos(RepoRef, RepoRef),
    #[error("no projects with defined ratios to aggregate")]
    NoEligibleProjects,
    #[error("empty verdict set")]
    Empty,
}

/// The slice of a verdict record aggregation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub repo: RepoRef,
    pub number: u64,
    pub class: VerdictClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_type: Option<BugType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<TaxonomyReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub repo: RepoRef,
    /// All five verdict classes.
    pub counts: BTreeMap<VerdictClass, u64>,
    /// Bug types among three-way verdicts.
    pub bug_type_counts: BTreeMap<BugType, u64>,
    /// Full bug type × three-way class counts, for table rendering.
    pub cross: BTreeMap<BugType, BTreeMap<VerdictClass, u64>>,
    /// Responsive / (Responsive + NotResponsive + NotApplicable); `None`
    /// when the project has no three-way verdicts.
    pub responsiveness_ratio: Option<f64>,
    pub not_responsiveness_ratio: Option<f64>,
    pub not_applicability_ratio: Option<f64>,
    pub internal_ratio: Option<f64>,
    pub external_ratio: Option<f64>,
    pub unknown_ratio: Option<f64>,
    /// Count of three-way verdicts (the ratio denominator).
    pub eligible: u64,
}

impl ProjectSummary {
    pub fn count(&self, class: VerdictClass) -> u64 {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn bug_type_count(&self, bug_type: BugType) -> u64 {
        self.bug_type_counts.get(&bug_type).copied().unwrap_or(0)
    }

    pub fn cross_count(&self, bug_type: BugType, class: VerdictClass) -> u64 {
        self.cross
            .get(&bug_type)
            .and_then(|row| row.get(&class))
            .copied()
            .unwrap_or(0)
    }
}

/// Count one repository's verdicts and compute its ratios.
pub fn summarize_project(verdicts: &[VerdictEntry]) -> Result<ProjectSummary, ReportError> {
    let first = verdicts.first().ok_or(ReportError::Empty)?;
    let repo = first.repo.clone();
    let mut counts: BTreeMap<VerdictClass, u64> = BTreeMap::new();
    let mut bug_type_counts: BTreeMap<BugType, u64> = BTreeMap::new();
    let mut cross: BTreeMap<BugType, BTreeMap<VerdictClass, u64>> = BTreeMap::new();

    for v in verdicts {
        if v.repo != repo {
            return Err(ReportError::MixedRepos(repo, v.repo.clone()));
        }
        *counts.entry(v.class).or_default() += 1;
        if v.class.is_three_way() {
            if let Some(bug_type) = v.bug_type {
                *bug_type_counts.entry(bug_type).or_default() += 1;
                *cross.entry(bug_type).or_default().entry(v.class).or_default() += 1;
            }
        }
    }

    let eligible: u64 = VerdictClass::THREE_WAY
        .iter()
        .map(|c| counts.get(c).copied().unwrap_or(0))
        .sum();
    let ratio = |n: u64| -> Option<f64> {
        (eligible > 0).then(|| n as f64 / eligible as f64)
    };
    let class_n = |c: VerdictClass| counts.get(&c).copied().unwrap_or(0);
    let type_n = |t: BugType| bug_type_counts.get(&t).copied().unwrap_or(0);

    Ok(ProjectSummary {
        repo,
        responsiveness_ratio: ratio(class_n(VerdictClass::Responsive)),
        not_responsiveness_ratio: ratio(class_n(VerdictClass::NotResponsive)),
        not_applicability_ratio: ratio(class_n(VerdictClass::NotApplicable)),
        internal_ratio: ratio(type_n(BugType::Internal)),
        external_ratio: ratio(type_n(BugType::External)),
        unknown_ratio: ratio(type_n(BugType::Unknown)),
        counts,
        bug_type_counts,
        cross,
        eligible,
    })
}

/// Group a mixed verdict list by repo and summarize each project.
pub fn summarize_projects(verdicts: &[VerdictEntry]) -> Vec<ProjectSummary> {
    let mut by_repo: BTreeMap<RepoRef, Vec<VerdictEntry>> = BTreeMap::new();
    for v in verdicts {
        by_repo.entry(v.repo.clone()).or_default().push(v.clone());
    }
    by_repo
        .into_values()
        .map(|vs| summarize_project(&vs).expect("grouped by repo"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Responsiveness,
    NotResponsiveness,
    NotApplicability,
    InternalShare,
    ExternalShare,
    UnknownShare,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::Responsiveness,
        MetricName::NotResponsiveness,
        MetricName::NotApplicability,
        MetricName::InternalShare,
        MetricName::ExternalShare,
        MetricName::UnknownShare,
    ];
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetricName::Responsiveness => "responsiveness",
            MetricName::NotResponsiveness => "not-responsiveness",
            MetricName::NotApplicability => "not-applicability",
            MetricName::InternalShare => "internal share",
            MetricName::ExternalShare => "external share",
            MetricName::UnknownShare => "unknown share",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear interpolation between order statistics: `h = (n-1)·p`,
/// `v = x[⌊h⌋] + (h-⌊h⌋)·(x[⌊h⌋+1] - x[⌊h⌋])` over ascending `sorted`.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty set");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn quantiles_of(mut values: Vec<f64>) -> Quantiles {
    values.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
    Quantiles {
        median: quantile_linear(&values, 0.5),
        q1: quantile_linear(&values, 0.25),
        q3: quantile_linear(&values, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcosystemSummary {
    pub schema_version: u32,
    pub projects: Vec<ProjectSummary>,
    pub per_metric: BTreeMap<MetricName, Quantiles>,
    /// How many projects passed the eligibility threshold and entered the
    /// quantiles.
    pub eligible_projects: usize,
}

impl EcosystemSummary {
    pub fn empty() -> Self {
        EcosystemSummary {
            schema_version: REPORT_SCHEMA_VERSION,
            projects: Vec::new(),
            per_metric: BTreeMap::new(),
            eligible_projects: 0,
        }
    }

    /// Ecosystem-wide absolute count for one class.
    pub fn total_count(&self, class: VerdictClass) -> u64 {
        self.projects.iter().map(|p| p.count(class)).sum()
    }

    pub fn total_bug_type(&self, bug_type: BugType) -> u64 {
        self.projects.iter().map(|p| p.bug_type_count(bug_type)).sum()
    }

    pub fn total_cross(&self, bug_type: BugType, class: VerdictClass) -> u64 {
        self.projects
            .iter()
            .map(|p| p.cross_count(bug_type, class))
            .sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.projects.iter().map(|p| p.eligible).sum()
    }
}

/// Median and IQR of every per-project metric, over projects whose ratios
/// are defined and whose three-way verdict count meets `min_verdicts`.
pub fn summarize_ecosystem(
    summaries: &[ProjectSummary],
    min_verdicts: u64,
) -> Result<EcosystemSummary, ReportError> {
    let eligible: Vec<&ProjectSummary> = summaries
        .iter()
        .filter(|p| p.responsiveness_ratio.is_some() && p.eligible >= min_verdicts.max(1))
        .collect();
    if eligible.is_empty() {
        return Err(ReportError::NoEligibleProjects);
    }
    let mut per_metric = BTreeMap::new();
    for metric in MetricName::ALL {
        let values: Vec<f64> = eligible
            .iter()
            .filter_map(|p| match metric {
                MetricName::Responsiveness => p.responsiveness_ratio,
                MetricName::NotResponsiveness => p.not_responsiveness_ratio,
                MetricName::NotApplicability => p.not_applicability_ratio,
                MetricName::InternalShare => p.internal_ratio,
                MetricName::ExternalShare => p.external_ratio,
                MetricName::UnknownShare => p.unknown_ratio,
            })
            .collect();
        if !values.is_empty() {
            per_metric.insert(metric, quantiles_of(values));
        }
    }
    Ok(EcosystemSummary {
        schema_version: REPORT_SCHEMA_VERSION,
        projects: summaries.to_vec(),
        per_metric,
        eligible_projects: eligible.len(),
    })
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderFormat {
    Text,
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for RenderFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(RenderFormat::Text),
            "json" => Ok(RenderFormat::Json),
            "csv" => Ok(RenderFormat::Csv),
            "markdown" | "md" => Ok(RenderFormat::Markdown),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

fn cell_with_pct(count: u64, denom: u64) -> String {
    if count == 0 && denom == 0 {
        return "-".to_string();
    }
    if denom == 0 {
        return format!("{count}");
    }
    if count == 0 {
        return "-".to_string();
    }
    format!("{count} ({:.0}%)", count as f64 / denom as f64 * 100.0)
}

/// Render a contingency tally in the bug-type × verdict layout with totals.
pub fn render_tally(table: &ContingencyTable, format: RenderFormat) -> String {
    match format {
        RenderFormat::Json => serde_json::to_string_pretty(table).expect("tally serializes"),
        RenderFormat::Csv => {
            let mut out = String::from("class,internal,external,unknown,total\n");
            for class in VerdictClass::THREE_WAY {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    class.ident(),
                    table.cell(BugType::Internal, class),
                    table.cell(BugType::External, class),
                    table.cell(BugType::Unknown, class),
                    table.row_total(class)
                );
            }
            let _ = writeln!(
                out,
                "total,{},{},{},{}",
                table.column_total(BugType::Internal),
                table.column_total(BugType::External),
                table.column_total(BugType::Unknown),
                table.grand_total()
            );
            let _ = writeln!(out, "duplicate,,,,{}", table.duplicates);
            let _ = writeln!(out, "complex,,,,{}", table.complexes);
            out
        }
        RenderFormat::Text | RenderFormat::Markdown => {
            let md = format == RenderFormat::Markdown;
            let mut rows: Vec<Vec<String>> = Vec::new();
            rows.push(
                ["", "Internal", "External", "Unknown", "Total"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            );
            let grand = table.grand_total();
            for class in VerdictClass::THREE_WAY {
                let mut row = vec![class.to_string()];
                for bug_type in BugType::ALL {
                    row.push(cell_with_pct(
                        table.cell(bug_type, class),
                        table.column_total(bug_type),
                    ));
                }
                row.push(cell_with_pct(table.row_total(class), grand));
                rows.push(row);
            }
            let mut totals = vec!["Total".to_string()];
            for bug_type in BugType::ALL {
                totals.push(cell_with_pct(table.column_total(bug_type), grand));
            }
            totals.push(format!("{grand}"));
            rows.push(totals);

            let mut out = render_rows(&rows, md);
            if table.duplicates > 0 || table.complexes > 0 {
                let _ = writeln!(
                    out,
                    "\nExcluded from the table: {} duplicate, {} complex.",
                    table.duplicates, table.complexes
                );
            }
            if table.invalid > 0 {
                let _ = writeln!(out, "Invalid records (no bug type): {}.", table.invalid);
            }
            out
        }
    }
}

/// Render an ecosystem summary. Text and Markdown reproduce the bug-type ×
/// verdict layout where each cell shows the ecosystem count with the median
/// per-project ratio in parentheses; the ratio base for a type column is
/// that project's column total, and for the Total column the project's
/// three-way total. Only projects where the denominator is nonzero enter a
/// cell's median.
pub fn render(summary: &EcosystemSummary, format: RenderFormat) -> String {
    if summary.projects.is_empty() {
        return match format {
            RenderFormat::Json => serde_json::to_string_pretty(summary).expect("serializes"),
            _ => "no eligible projects\n".to_string(),
        };
    }
    match format {
        RenderFormat::Json => serde_json::to_string_pretty(summary).expect("serializes"),
        RenderFormat::Csv => {
            let mut out = String::from(
                "schema_version,repo,responsive,not_responsive,not_applicable,duplicate,complex,\
                 internal,external,unknown,responsiveness_ratio,not_responsiveness_ratio,\
                 not_applicability_ratio,internal_ratio,external_ratio,unknown_ratio\n",
            );
            let fmt_ratio = |r: Option<f64>| match r {
                Some(v) => format!("{v:.6}"),
                None => String::new(),
            };
            for p in &summary.projects {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    summary.schema_version,
                    p.repo,
                    p.count(VerdictClass::Responsive),
                    p.count(VerdictClass::NotResponsive),
                    p.count(VerdictClass::NotApplicable),
                    p.count(VerdictClass::Duplicate),
                    p.count(VerdictClass::Complex),
                    p.bug_type_count(BugType::Internal),
                    p.bug_type_count(BugType::External),
                    p.bug_type_count(BugType::Unknown),
                    fmt_ratio(p.responsiveness_ratio),
                    fmt_ratio(p.not_responsiveness_ratio),
                    fmt_ratio(p.not_applicability_ratio),
                    fmt_ratio(p.internal_ratio),
                    fmt_ratio(p.external_ratio),
                    fmt_ratio(p.unknown_ratio),
                );
            }
            out
        }
        RenderFormat::Text | RenderFormat::Markdown => {
            let md = format == RenderFormat::Markdown;
            let median_cell = |count: u64, ratios: Vec<f64>| -> String {
                if count == 0 {
                    return "-".to_string();
                }
                if ratios.is_empty() {
                    return format!("{count}");
                }
                let q = quantiles_of(ratios);
                format!("{count} ({:.0}%)", q.median * 100.0)
            };

            let mut rows: Vec<Vec<String>> = Vec::new();
            rows.push(
                ["", "Internal", "External", "Unknown", "Total"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            );
            for class in VerdictClass::THREE_WAY {
                let mut row = vec![class.to_string()];
                for bug_type in BugType::ALL {
                    let count = summary.total_cross(bug_type, class);
                    let ratios: Vec<f64> = summary
                        .projects
                        .iter()
                        .filter(|p| p.bug_type_count(bug_type) > 0)
                        .map(|p| {
                            p.cross_count(bug_type, class) as f64
                                / p.bug_type_count(bug_type) as f64
                        })
                        .collect();
                    row.push(median_cell(count, ratios));
                }
                let count: u64 = BugType::ALL
                    .iter()
                    .map(|t| summary.total_cross(*t, class))
                    .sum();
                let ratios: Vec<f64> = summary
                    .projects
                    .iter()
                    .filter(|p| p.eligible > 0)
                    .map(|p| p.count(class) as f64 / p.eligible as f64)
                    .collect();
                row.push(median_cell(count, ratios));
                rows.push(row);
            }
            let mut totals = vec!["Total".to_string()];
            for bug_type in BugType::ALL {
                let count = summary.total_bug_type(bug_type);
                let ratios: Vec<f64> = summary
                    .projects
                    .iter()
                    .filter(|p| p.eligible > 0)
                    .map(|p| p.bug_type_count(bug_type) as f64 / p.eligible as f64)
                    .collect();
                totals.push(median_cell(count, ratios));
            }
            totals.push(format!("{}", summary.grand_total()));
            rows.push(totals);

            let mut out = render_rows(&rows, md);
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Projects: {} total, {} eligible for quantiles.",
                summary.projects.len(),
                summary.eligible_projects
            );
            for (metric, q) in &summary.per_metric {
                let _ = writeln!(
                    out,
                    "{}: median {:.0}% (IQR: {:.0}%-{:.0}%)",
                    metric,
                    q.median * 100.0,
                    q.q1 * 100.0,
                    q.q3 * 100.0
                );
            }
            out
        }
    }
}

fn render_rows(rows: &[Vec<String>], markdown: bool) -> String {
    let cols = rows[0].len();
    let mut widths = vec![0usize; cols];
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        if markdown {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{:width$}", c, width = widths[i]))
                .collect();
            let _ = writeln!(out, "| {} |", cells.join(" | "));
            if r == 0 {
                let sep: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                let _ = writeln!(out, "| {} |", sep.join(" | "));
            }
        } else {
            let cells: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{:width$}", c, width = widths[i]))
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if r == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
                out.push('\n');
            }
        }
    }
    out
}
