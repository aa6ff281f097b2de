//! Benchmark harness: score predictions against ground truth with per-class
//! precision/recall/F1 and accuracy, rank hyperparameter sweeps, and compare
//! models side by side.
//!
//! Unparseable predictions are conservative by default: the item stays in
//! the denominator of its gold class's recall and of accuracy, scored as
//! wrong against every class. `--drop-unparseable` removes such items from
//! scoring entirely; either way they are reported in `unparseable_count`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::IssueKey;
use crate::llm::SamplingConfig;

/// Reserved matrix column for predictions that produced no usable output.
pub const UNPARSEABLE_CLASS: &str = "(unparseable)";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction for {0} has no gold record")]
    KeyMismatch(IssueKey),
    #[error("unknown class `{class}` for {key}")]
    UnknownClass { key: IssueKey, class: String },
    #[error("reports disagree on the class set: {0}")]
    ClassSetMismatch(String),
    #[error("no items to score")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledItem {
    pub key: IssueKey,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub key: IssueKey,
    /// `None` means the model produced no parseable answer.
    pub class: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnparseablePolicy {
    /// Score the item as wrong against every class (default).
    ScoreAsWrong,
    /// Exclude the item from the matrix and all metrics.
    Drop,
}

/// Rows are gold classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    fn new(classes: Vec<String>) -> Self {
        let n = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    pub fn get(&self, gold: &str, pred: &str) -> u64 {
        match (self.class_index(gold), self.class_index(pred)) {
            (Some(g), Some(p)) => self.counts[g][p],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn col_total(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when precision or recall had a zero denominator and was reported
    /// as 0 by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub accuracy: f64,
    pub support: BTreeMap<String, u64>,
    pub unparseable_count: u64,
}

/// Score aligned predictions against gold labels.
///
/// Every prediction key must exist in gold ([`EvalError::KeyMismatch`]
/// otherwise); gold items without a prediction are treated as unparseable.
pub fn score(
    gold: &[LabeledItem],
    preds: &[Prediction],
    classes: &[String],
    policy: UnparseablePolicy,
) -> Result<(ConfusionMatrix, MetricsReport), EvalError> {
    let declared: BTreeSet<&str> = classes.iter().map(String::as_str).collect();
    let mut gold_by_key: BTreeMap<&IssueKey, &str> = BTreeMap::new();
    for item in gold {
        if !declared.contains(item.class.as_str()) {
            return Err(EvalError::UnknownClass {
                key: item.key.clone(),
                class: item.class.clone(),
            });
        }
        gold_by_key.insert(&item.key, item.class.as_str());
    }

    let mut pred_by_key: BTreeMap<&IssueKey, Option<&str>> = BTreeMap::new();
    for pred in preds {
        if !gold_by_key.contains_key(&pred.key) {
            return Err(EvalError::KeyMismatch(pred.key.clone()));
        }
        if let Some(class) = &pred.class {
            if !declared.contains(class.as_str()) {
                return Err(EvalError::UnknownClass {
                    key: pred.key.clone(),
                    class: class.clone(),
                });
            }
        }
        pred_by_key.insert(&pred.key, pred.class.as_deref());
    }

    let mut matrix_classes: Vec<String> = classes.to_vec();
    if policy == UnparseablePolicy::ScoreAsWrong {
        matrix_classes.push(UNPARSEABLE_CLASS.to_string());
    }
    let mut matrix = ConfusionMatrix::new(matrix_classes);
    let mut unparseable_count = 0u64;

    for item in gold {
        let predicted = pred_by_key.get(&item.key).copied().flatten();
        let g = matrix.class_index(&item.class).expect("declared class");
        match predicted {
            Some(class) => {
                let p = matrix.class_index(class).expect("declared class");
                matrix.counts[g][p] += 1;
            }
            None => {
                unparseable_count += 1;
                if policy == UnparseablePolicy::ScoreAsWrong {
                    let p = matrix.class_index(UNPARSEABLE_CLASS).expect("sentinel");
                    matrix.counts[g][p] += 1;
                }
            }
        }
    }

    let report = metrics_from_matrix(&matrix, classes, unparseable_count);
    Ok((matrix, report))
}

fn metrics_from_matrix(
    matrix: &ConfusionMatrix,
    classes: &[String],
    unparseable_count: u64,
) -> MetricsReport {
    let mut per_class = BTreeMap::new();
    let mut support = BTreeMap::new();
    for class in classes {
        let i = matrix.class_index(class).expect("declared class");
        let tp = matrix.counts[i][i] as f64;
        let pred_total = matrix.col_total(i);
        let gold_total = matrix.row_total(i);
        let degenerate = pred_total == 0 || gold_total == 0;
        let precision = if pred_total == 0 { 0.0 } else { tp / pred_total as f64 };
        let recall = if gold_total == 0 { 0.0 } else { tp / gold_total as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.insert(
            class.clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                degenerate,
            },
        );
        support.insert(class.clone(), gold_total);
    }
    let total = matrix.total();
    let accuracy = if total == 0 {
        0.0
    } else {
        matrix.trace() as f64 / total as f64
    };
    MetricsReport {
        per_class,
        accuracy,
        support,
        unparseable_count,
    }
}

// ---------------------------------------------------------------------------
// Sweep ranking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub label: String,
    pub config: SamplingConfig,
    pub report: MetricsReport,
}

/// Score one prediction set per configuration and rank them.
///
/// Ranking key: F1 of `critical_class` descending, ties broken by accuracy,
/// then lexicographic label.
pub fn sweep_report(
    cells: Vec<(String, SamplingConfig, Vec<Prediction>)>,
    gold: &[LabeledItem],
    classes: &[String],
    critical_class: &str,
    policy: UnparseablePolicy,
) -> Result<Vec<SweepEntry>, EvalError> {
    if cells.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut entries = Vec::with_capacity(cells.len());
    for (label, config, preds) in cells {
        let (_, report) = score(gold, &preds, classes, policy)?;
        entries.push(SweepEntry {
            label,
            config,
            report,
        });
    }
    entries.sort_by(|a, b| {
        let fa = a.report.per_class.get(critical_class).map(|m| m.f1).unwrap_or(0.0);
        let fb = b.report.per_class.get(critical_class).map(|m| m.f1).unwrap_or(0.0);
        fb.partial_cmp(&fa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(
                b.report
                    .accuracy
                    .partial_cmp(&a.report.accuracy)
                    .unwrap_or(std::cmp::Ordering::Equal),
            )
            .then(a.label.cmp(&b.label))
    });
    Ok(entries)
}

/// Render a ranked sweep as an aligned text table.
pub fn render_sweep(entries: &[SweepEntry], critical_class: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>6} {:>6} {:>10} {:>9} {:>12}",
        "config", "temp", "top_p", "f1(crit)", "accuracy", "unparseable"
    );
    for e in entries {
        let f1 = e.report.per_class.get(critical_class).map(|m| m.f1).unwrap_or(0.0);
        let _ = writeln!(
            out,
            "{:<16} {:>6.2} {:>6.2} {:>10.4} {:>9.4} {:>12}",
            e.label,
            e.config.temperature,
            e.config.top_p,
            f1,
            e.report.accuracy,
            e.report.unparseable_count
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Model comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub values: Vec<f64>,
    /// Index of the strictly best value; `None` on ties.
    pub best: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

/// Side-by-side comparison: one row per (class, metric), plus accuracy.
pub fn compare_models(
    reports: &BTreeMap<String, MetricsReport>,
) -> Result<ComparisonTable, EvalError> {
    let mut iter = reports.iter();
    let (_, first) = iter.next().ok_or(EvalError::Empty)?;
    let class_set: Vec<&String> = first.per_class.keys().collect();
    for (model, report) in reports {
        let other: Vec<&String> = report.per_class.keys().collect();
        if other != class_set {
            return Err(EvalError::ClassSetMismatch(model.clone()));
        }
    }

    let models: Vec<String> = reports.keys().cloned().collect();
    let mut rows = Vec::new();
    let flag_best = |values: &[f64]| -> Option<usize> {
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let hits: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v == max)
            .map(|(i, _)| i)
            .collect();
        (hits.len() == 1).then(|| hits[0])
    };
    for class in &class_set {
        for (metric, pick) in [
            ("precision", (|m: &ClassMetrics| m.precision) as fn(&ClassMetrics) -> f64),
            ("recall", |m| m.recall),
            ("f1", |m| m.f1),
        ] {
            let values: Vec<f64> = reports
                .values()
                .map(|r| pick(&r.per_class[class.as_str()]))
                .collect();
            rows.push(ComparisonRow {
                label: format!("{class} {metric}"),
                best: flag_best(&values),
                values,
            });
        }
    }
    let values: Vec<f64> = reports.values().map(|r| r.accuracy).collect();
    rows.push(ComparisonRow {
        label: "accuracy".to_string(),
        best: flag_best(&values),
        values,
    });
    Ok(ComparisonTable { models, rows })
}

/// Render a comparison table as aligned text; the best cell per row is
/// starred.
pub fn render_comparison(table: &ComparisonTable) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<28}", "metric");
    for model in &table.models {
        let _ = write!(out, " {model:>16}");
    }
    out.push('\n');
    for row in &table.rows {
        let _ = write!(out, "{:<28}", row.label);
        for (i, v) in row.values.iter().enumerate() {
            let star = if row.best == Some(i) { "*" } else { " " };
            let _ = write!(out, " {:>15.4}{star}", v);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(n: u64) -> IssueKey {
        IssueKey {
            repo: "o/r".parse().unwrap(),
            number: n,
        }
    }

    fn binary_classes() -> Vec<String> {
        vec!["bug".to_string(), "not_bug".to_string()]
    }

    fn items(pairs: &[(u64, &str)]) -> Vec<LabeledItem> {
        pairs
            .iter()
            .map(|(n, c)| LabeledItem {
                key: key(*n),
                class: c.to_string(),
            })
            .collect()
    }

    fn preds(pairs: &[(u64, Option<&str>)]) -> Vec<Prediction> {
        pairs
            .iter()
            .map(|(n, c)| Prediction {
                key: key(*n),
                class: c.map(str::to_string),
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_are_all_ones() {
        let gold = items(&[(1, "bug"), (2, "not_bug"), (3, "bug")]);
        let p = preds(&[(1, Some("bug")), (2, Some("not_bug")), (3, Some("bug"))]);
        let (_, report) = score(&gold, &p, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();
        for m in report.per_class.values() {
            assert_eq!(m.precision, 1.0);
            assert_eq!(m.recall, 1.0);
            assert_eq!(m.f1, 1.0);
            assert!(!m.degenerate);
        }
        assert_eq!(report.accuracy, 1.0);
    }

    #[test]
    fn published_binary_row() {
        // TP=93, FN=7, FP=0, TN=198 against the bug class.
        let mut gold = Vec::new();
        let mut p = Vec::new();
        let mut n = 0;
        for _ in 0..93 {
            n += 1;
            gold.push((n, "bug"));
            p.push((n, Some("bug")));
        }
        for _ in 0..7 {
            n += 1;
            gold.push((n, "bug"));
            p.push((n, Some("not_bug")));
        }
        for _ in 0..198 {
            n += 1;
            gold.push((n, "not_bug"));
            p.push((n, Some("not_bug")));
        }
        let gold = items(&gold);
        let p = preds(&p);
        let (matrix, report) =
            score(&gold, &p, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();
        let bug = &report.per_class["bug"];
        assert_eq!(bug.precision, 1.0);
        assert_eq!(bug.recall, 0.93);
        assert!((bug.f1 - 2.0 * 0.93 / 1.93).abs() < 1e-12);
        assert!((bug.f1 - 0.96).abs() < 0.005);
        assert_eq!(matrix.get("bug", "not_bug"), 7);
    }

    #[test]
    fn unparseable_scored_as_wrong() {
        let gold = items(&[(1, "bug"), (2, "bug"), (3, "not_bug")]);
        let p = preds(&[(1, Some("bug")), (2, None), (3, Some("not_bug"))]);
        let (matrix, report) =
            score(&gold, &p, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();
        assert_eq!(report.unparseable_count, 1);
        assert_eq!(matrix.total(), 3);
        assert!((report.accuracy - 2.0 / 3.0).abs() < 1e-12);
        // recall of bug suffers: 1 of 2
        assert!((report.per_class["bug"].recall - 0.5).abs() < 1e-12);
        assert_eq!(matrix.get("bug", UNPARSEABLE_CLASS), 1);
    }

    #[test]
    fn unparseable_dropped_when_asked() {
        let gold = items(&[(1, "bug"), (2, "bug"), (3, "not_bug")]);
        let p = preds(&[(1, Some("bug")), (2, None), (3, Some("not_bug"))]);
        let (matrix, report) = score(&gold, &p, &binary_classes(), UnparseablePolicy::Drop).unwrap();
        assert_eq!(report.unparseable_count, 1);
        assert_eq!(matrix.total(), 2);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.per_class["bug"].recall, 1.0);
    }

    #[test]
    fn missing_prediction_counts_as_unparseable() {
        let gold = items(&[(1, "bug"), (2, "not_bug")]);
        let p = preds(&[(1, Some("bug"))]);
        let (_, report) = score(&gold, &p, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();
        assert_eq!(report.unparseable_count, 1);
    }

    #[test]
    fn stray_prediction_is_key_mismatch() {
        let gold = items(&[(1, "bug")]);
        let p = preds(&[(1, Some("bug")), (9, Some("bug"))]);
        assert!(matches!(
            score(&gold, &p, &binary_classes(), UnparseablePolicy::ScoreAsWrong),
            Err(EvalError::KeyMismatch(_))
        ));
    }

    #[test]
    fn degenerate_classes_report_zero() {
        let gold = items(&[(1, "bug"), (2, "bug")]);
        let p = preds(&[(1, Some("bug")), (2, Some("bug"))]);
        let (_, report) = score(&gold, &p, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();
        let nb = &report.per_class["not_bug"];
        assert_eq!(nb.precision, 0.0);
        assert_eq!(nb.recall, 0.0);
        assert!(nb.degenerate);
    }

    #[test]
    fn four_class_fixture_matches_brute_force_oracle() {
        let classes: Vec<String> = ["duplicate", "responsive", "not_responsive", "not_applicable"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        // 20 items, classes assigned by a fixed pattern with some errors.
        let golds = [
            "responsive", "responsive", "responsive", "responsive", "responsive", "responsive",
            "responsive", "responsive", "not_responsive", "not_responsive", "not_responsive",
            "not_responsive", "not_applicable", "not_applicable", "not_applicable", "duplicate",
            "duplicate", "duplicate", "duplicate", "responsive",
        ];
        let predictions = [
            "responsive", "responsive", "responsive", "not_responsive", "responsive", "responsive",
            "duplicate", "responsive", "not_responsive", "not_responsive", "responsive",
            "not_applicable", "not_applicable", "responsive", "not_applicable", "duplicate",
            "duplicate", "responsive", "duplicate", "responsive",
        ];
        let gold: Vec<LabeledItem> = golds
            .iter()
            .enumerate()
            .map(|(i, c)| LabeledItem {
                key: key(i as u64 + 1),
                class: c.to_string(),
            })
            .collect();
        let p: Vec<Prediction> = predictions
            .iter()
            .enumerate()
            .map(|(i, c)| Prediction {
                key: key(i as u64 + 1),
                class: Some(c.to_string()),
            })
            .collect();
        let (_, report) = score(&gold, &p, &classes, UnparseablePolicy::ScoreAsWrong).unwrap();

        // Independent naive recomputation from the raw pair list.
        for class in &classes {
            let tp = golds
                .iter()
                .zip(&predictions)
                .filter(|(g, p)| *g == class && *p == class)
                .count() as f64;
            let pred_n = predictions.iter().filter(|p| *p == class).count() as f64;
            let gold_n = golds.iter().filter(|g| *g == class).count() as f64;
            let precision = if pred_n == 0.0 { 0.0 } else { tp / pred_n };
            let recall = if gold_n == 0.0 { 0.0 } else { tp / gold_n };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let got = &report.per_class[class.as_str()];
            assert!((got.precision - precision).abs() < 1e-9);
            assert!((got.recall - recall).abs() < 1e-9);
            assert!((got.f1 - f1).abs() < 1e-9);
        }
        let correct = golds.iter().zip(&predictions).filter(|(g, p)| g == p).count() as f64;
        assert!((report.accuracy - correct / 20.0).abs() < 1e-9);
    }

    #[test]
    fn sweep_ranks_dominant_first_and_breaks_ties() {
        let gold = items(&[(1, "bug"), (2, "not_bug"), (3, "bug")]);
        let perfect = preds(&[(1, Some("bug")), (2, Some("not_bug")), (3, Some("bug"))]);
        let worse = preds(&[(1, Some("bug")), (2, Some("bug")), (3, Some("not_bug"))]);
        let cells = vec![
            ("b-worse".to_string(), SamplingConfig::new(0.8, 0.9).unwrap(), worse.clone()),
            ("a-perfect".to_string(), SamplingConfig::new(0.2, 0.9).unwrap(), perfect.clone()),
        ];
        let ranked = sweep_report(cells, &gold, &binary_classes(), "bug", UnparseablePolicy::ScoreAsWrong).unwrap();
        assert_eq!(ranked[0].label, "a-perfect");

        // exact tie: identical predictions under two labels → lexicographic
        let cells = vec![
            ("zz".to_string(), SamplingConfig::new(0.2, 0.9).unwrap(), perfect.clone()),
            ("aa".to_string(), SamplingConfig::new(0.5, 0.9).unwrap(), perfect),
        ];
        let ranked = sweep_report(cells, &gold, &binary_classes(), "bug", UnparseablePolicy::ScoreAsWrong).unwrap();
        assert_eq!(ranked[0].label, "aa");
    }

    #[test]
    fn comparison_flags_unique_best_only() {
        let gold = items(&[(1, "bug"), (2, "not_bug")]);
        let good = preds(&[(1, Some("bug")), (2, Some("not_bug"))]);
        let bad = preds(&[(1, Some("not_bug")), (2, Some("not_bug"))]);
        let (_, r_good) = score(&gold, &good, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();
        let (_, r_bad) = score(&gold, &bad, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();

        let mut reports = BTreeMap::new();
        reports.insert("good".to_string(), r_good.clone());
        reports.insert("bad".to_string(), r_bad);
        let table = compare_models(&reports).unwrap();
        let acc_row = table.rows.last().unwrap();
        assert_eq!(acc_row.label, "accuracy");
        let good_idx = table.models.iter().position(|m| m == "good").unwrap();
        assert_eq!(acc_row.best, Some(good_idx));

        // identical reports: no unique best anywhere
        let mut same = BTreeMap::new();
        same.insert("m1".to_string(), r_good.clone());
        same.insert("m2".to_string(), r_good);
        let table = compare_models(&same).unwrap();
        assert!(table.rows.iter().all(|r| r.best.is_none()));
    }

    #[test]
    fn single_model_comparison_is_its_report() {
        let gold = items(&[(1, "bug")]);
        let p = preds(&[(1, Some("bug"))]);
        let (_, report) = score(&gold, &p, &binary_classes(), UnparseablePolicy::ScoreAsWrong).unwrap();
        let mut reports = BTreeMap::new();
        reports.insert("only".to_string(), report.clone());
        let table = compare_models(&reports).unwrap();
        assert_eq!(table.models, vec!["only".to_string()]);
        let f1_row = table.rows.iter().find(|r| r.label == "bug f1").unwrap();
        assert_eq!(f1_row.values, vec![report.per_class["bug"].f1]);
    }
}
