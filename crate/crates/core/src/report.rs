//! Run summary tables, per-trait CI plot data and parse diagnostics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::AgreementResult;
use crate::prompt::Level;
use crate::rubric::Trait;

pub const TOTAL_LABEL: &str = "total";

/// Row labels in canonical order: the seven traits, then the total.
pub fn row_labels() -> Vec<&'static str> {
    Trait::ALL
        .iter()
        .map(|t| t.key())
        .chain(std::iter::once(TOTAL_LABEL))
        .collect()
}

fn label_rank(label: &str) -> usize {
    row_labels()
        .iter()
        .position(|l| *l == label)
        .unwrap_or(usize::MAX)
}

/// Fixed six-decimal formatting; negative zero prints as zero.
pub fn fmt_real(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn round6(x: f64) -> f64 {
    fmt_real(x).parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub level: Level,
    #[serde(rename = "trait")]
    pub trait_label: String,
    pub qwk: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub parse_failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedGroup {
    pub model: String,
    pub level: Level,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub essay_id: String,
    pub level: Level,
    pub subject: String,
    pub model: String,
    pub failure_reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_digest: String,
    pub seed: u64,
    pub bootstrap_iters: usize,
    pub alpha: f64,
    pub started_at: String,
    pub finished_at: String,
    /// Human inter-rater agreement reference.
    pub threshold: Option<f64>,
    /// Prior best agreement to compare against.
    pub baseline: Option<f64>,
    pub skipped: Vec<SkippedGroup>,
    /// Per model: parse failures / prompts dispatched.
    pub parse_failure_counts: BTreeMap<String, usize>,
}

/// Best agreement reached in the run, next to the reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdComparison {
    pub best_total_qwk: Option<f64>,
    pub best_ci_high: Option<f64>,
    pub baseline: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
    pub comparison: ThresholdComparison,
    #[serde(skip)]
    pub parse_failures: Vec<ParseFailure>,
}

/// Inputs to [`build_report`] beyond the agreement results.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Groups the run was asked to produce.
    pub requested: Vec<(String, Level)>,
    /// Keyed by (model, level, row label).
    pub failure_rates: BTreeMap<(String, Level, String), f64>,
    pub parse_failures: Vec<ParseFailure>,
}

pub fn build_report(
    results: &[AgreementResult],
    diagnostics: &Diagnostics,
    metadata: ReportMetadata,
) -> Result<RunReport> {
    let mut by_key: BTreeMap<(String, Level, String), &AgreementResult> = BTreeMap::new();
    for r in results {
        by_key.insert((r.model.clone(), r.level, r.trait_or_total.clone()), r);
    }
    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    let requested: BTreeSet<(String, Level)> = diagnostics.requested.iter().cloned().collect();
    for (model, level) in &requested {
        for label in row_labels() {
            let key = (model.clone(), *level, label.to_string());
            match by_key.get(&key) {
                Some(r) => rows.push(ReportRow {
                    model: model.clone(),
                    level: *level,
                    trait_label: label.to_string(),
                    qwk: r.qwk,
                    ci_low: r.ci_low,
                    ci_high: r.ci_high,
                    n: r.n_essays,
                    parse_failure_rate: diagnostics.failure_rates.get(&key).copied().unwrap_or(0.0),
                }),
                None => gaps.push(format!("{model}/{level}/{label}")),
            }
        }
    }
    if !gaps.is_empty() {
        return Err(Error::MissingGroups(gaps));
    }
    rows.sort_by(|a, b| {
        (&a.model, a.level, label_rank(&a.trait_label)).cmp(&(
            &b.model,
            b.level,
            label_rank(&b.trait_label),
        ))
    });
    let best_total_qwk = rows
        .iter()
        .filter(|r| r.trait_label == TOTAL_LABEL)
        .map(|r| r.qwk)
        .max_by(f64::total_cmp);
    let best_ci_high = rows.iter().map(|r| r.ci_high).max_by(f64::total_cmp);
    let comparison = ThresholdComparison {
        best_total_qwk,
        best_ci_high,
        baseline: metadata.baseline,
        threshold: metadata.threshold,
    };
    Ok(RunReport {
        rows,
        metadata,
        comparison,
        parse_failures: diagnostics.parse_failures.clone(),
    })
}

const SUMMARY_HEADER: [&str; 8] = [
    "model",
    "level",
    "trait",
    "qwk",
    "ci_low",
    "ci_high",
    "n",
    "parse_failure_rate",
];

fn opt_real(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| with_path(path, e))?;
    w.write_record(header).map_err(|e| with_path(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| with_path(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes the report files into `out_dir`, returning the paths written.
pub fn emit(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let summary = out_dir.join("summary.csv");
    write_csv(
        &summary,
        &SUMMARY_HEADER,
        report
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.level.to_string(),
                    r.trait_label.clone(),
                    fmt_real(r.qwk),
                    fmt_real(r.ci_low),
                    fmt_real(r.ci_high),
                    r.n.to_string(),
                    fmt_real(r.parse_failure_rate),
                ]
            })
            .collect(),
    )?;
    written.push(summary);

    let json_path = out_dir.join("summary.json");
    let mut rounded = report.clone();
    for r in &mut rounded.rows {
        r.qwk = round6(r.qwk);
        r.ci_low = round6(r.ci_low);
        r.ci_high = round6(r.ci_high);
        r.parse_failure_rate = round6(r.parse_failure_rate);
    }
    rounded.comparison.best_total_qwk = rounded.comparison.best_total_qwk.map(round6);
    rounded.comparison.best_ci_high = rounded.comparison.best_ci_high.map(round6);
    let mut json = serde_json::to_string_pretty(&rounded)?;
    json.push('\n');
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    written.push(json_path);

    for label in row_labels() {
        let path = out_dir.join(format!("ci_{label}.csv"));
        write_csv(
            &path,
            &["model", "level", "qwk", "ci_low", "ci_high"],
            report
                .rows
                .iter()
                .filter(|r| r.trait_label == label)
                .map(|r| {
                    vec![
                        r.model.clone(),
                        r.level.to_string(),
                        fmt_real(r.qwk),
                        fmt_real(r.ci_low),
                        fmt_real(r.ci_high),
                    ]
                })
                .collect(),
        )?;
        written.push(path);
    }

    let failures = out_dir.join("parse_failures.csv");
    write_csv(
        &failures,
        &["essay_id", "level", "subject", "model", "failure_reason"],
        report
            .parse_failures
            .iter()
            .map(|f| {
                vec![
                    f.essay_id.clone(),
                    f.level.to_string(),
                    f.subject.clone(),
                    f.model.clone(),
                    f.failure_reason.clone(),
                ]
            })
            .collect(),
    )?;
    written.push(failures);

    let comparison = out_dir.join("threshold_comparison.csv");
    let c = &report.comparison;
    write_csv(
        &comparison,
        &["metric", "our_score", "baseline", "threshold"],
        vec![
            vec![
                "qwk".into(),
                opt_real(c.best_total_qwk),
                opt_real(c.baseline),
                opt_real(c.threshold),
            ],
            vec![
                "ci_upper".into(),
                opt_real(c.best_ci_high),
                String::new(),
                String::new(),
            ],
        ],
    )?;
    written.push(comparison);

    Ok(written)
}

/// Reads `summary.csv` back into rows (values at six-decimal precision).
pub fn load_summary_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| with_path(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |j: usize| rec.get(j).unwrap_or("").to_string();
        let bad = |j: usize, msg: String| Error::MalformedRow {
            row: i + 1,
            field: SUMMARY_HEADER[j].to_string(),
            message: msg,
        };
        let real =
            |j: usize| -> Result<f64> { field(j).parse().map_err(|e| bad(j, format!("{e}"))) };
        rows.push(ReportRow {
            model: field(0),
            level: field(1).parse().map_err(|e| bad(1, e))?,
            trait_label: field(2),
            qwk: real(3)?,
            ci_low: real(4)?,
            ci_high: real(5)?,
            n: field(6).parse().map_err(|e| bad(6, format!("{e}")))?,
            parse_failure_rate: real(7)?,
        });
    }
    Ok(rows)
}
