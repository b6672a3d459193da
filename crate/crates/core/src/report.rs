//! Report artifacts: the analysis report, suite comparison and ratio
//! correlation tables, and their canonical/CSV/plain-text renderings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scores::{KillVerdict, ScoreKey, ScoreTable, ScoreValues, SuiteSummary};
use crate::stats::{kruskal_wallis, multiple_correlation, spearman, StatResult, StatsError};
use crate::types::{AnalysisConfig, MutationConfig, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Canonical,
    Csv,
    Table,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(Format::Canonical),
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            other => Err(Error::invalid(
                "format",
                format!("{other:?} is not one of canonical, csv, table"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSource {
    Configured,
    Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAccounting {
    /// Images with original-model records.
    pub total: usize,
    /// Images that passed the filter and carry a suite label.
    pub analysed: usize,
    pub dropped_by_filter: Vec<String>,
    /// Passing images absent from the suite mapping.
    pub unassigned: Vec<String>,
}

/// Scores of one (mutant, suite) cell together with the mutant's ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mutant: String,
    pub suite: String,
    pub operator: Operator,
    pub dropout_rate: f64,
    pub block_size: Option<u32>,
    pub images: usize,
    pub scores: ScoreValues,
}

impl ReportRow {
    pub fn new(cfg: &MutationConfig, images: usize, table: &ScoreTable) -> Self {
        Self {
            mutant: table.mutant.clone(),
            suite: table.suite.clone(),
            operator: cfg.operator,
            dropout_rate: cfg.dropout_rate,
            block_size: cfg.block_size,
            images,
            scores: table.scores,
        }
    }

    pub fn table(&self) -> ScoreTable {
        ScoreTable {
            mutant: self.mutant.clone(),
            suite: self.suite.clone(),
            scores: self.scores,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KillRow {
    pub suite: String,
    #[serde(flatten)]
    pub verdict: KillVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: AnalysisConfig,
    /// Null rate used by the kill test.
    pub null_p: f64,
    pub null_source: NullSource,
    pub images: ImageAccounting,
    /// Number of label/argmax mismatches seen during validation.
    pub warnings: usize,
    pub rows: Vec<ReportRow>,
    pub kills: Vec<KillRow>,
    pub suites: Vec<SuiteSummary>,
}

fn canonical<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report values serialize");
    s.push('\n');
    s
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn num4(v: Option<f64>) -> String {
    match v {
        Some(x) if x != 0.0 && x.abs() < 1e-4 => format!("{x:.3e}"),
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn render_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for line in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        let fields: Vec<String> = line.iter().map(|f| csv_field(f)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, f) in widths.iter_mut().zip(r) {
            *w = (*w).max(f.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |fields: &[String]| {
        let cells: Vec<String> = fields
            .iter()
            .zip(&widths)
            .map(|(f, w)| format!("{f:<w$}"))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    };
    line(header);
    line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for r in rows {
        line(r);
    }
    out
}

impl Report {
    pub fn to_canonical(&self) -> String {
        canonical(self)
    }

    pub fn from_canonical(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Canonical => self.to_canonical(),
            Format::Csv => {
                let (h, r) = self.grid(num);
                render_csv(&h, &r)
            }
            Format::Table => {
                let (h, r) = self.grid(num4);
                let mut out = format!(
                    "images analysed: {} of {}   null p: {} ({})\n\n",
                    self.images.analysed,
                    self.images.total,
                    self.null_p,
                    match self.null_source {
                        NullSource::Configured => "configured",
                        NullSource::Calibrated => "calibrated",
                    }
                );
                out.push_str(&render_table(&h, &r));
                out
            }
        }
    }

    fn grid(&self, fmt: fn(Option<f64>) -> String) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header: Vec<String> = ["kind", "mutant", "suite", "operator", "dropout_rate", "block_size", "images"]
            .map(String::from)
            .to_vec();
        header.extend(ScoreKey::all().map(|k| k.name().to_string()));
        let mut rows = Vec::new();
        for r in &self.rows {
            let mut line = vec![
                "mutant".to_string(),
                r.mutant.clone(),
                r.suite.clone(),
                r.operator.to_string(),
                format!("{:.2}", r.dropout_rate),
                r.block_size.map(|b| b.to_string()).unwrap_or_default(),
                r.images.to_string(),
            ];
            line.extend(r.scores.iter().map(|(_, v)| fmt(v)));
            rows.push(line);
        }
        for s in &self.suites {
            let mut line = vec![
                "suite_mean".to_string(),
                String::new(),
                s.suite.clone(),
                String::new(),
                String::new(),
                String::new(),
                s.mutants.to_string(),
            ];
            line.extend(s.means.iter().map(|(_, v)| fmt(v)));
            rows.push(line);
        }
        (header, rows)
    }

    /// Distinct suite labels in report order.
    pub fn suite_labels(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.suite.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestStatus {
    Ok,
    /// The statistic is undefined for these values; `note` says why.
    Undefined,
}

fn undefined_note(e: &StatsError) -> String {
    match e {
        StatsError::Degenerate(_) => format!("{e}: statistic undefined"),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub key: String,
    pub status: TestStatus,
    pub result: Option<StatResult>,
    pub significant: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteComparison {
    pub alpha: f64,
    pub suites: Vec<String>,
    /// Mutants contributing per suite.
    pub group_sizes: Vec<usize>,
    pub rows: Vec<ComparisonRow>,
}

/// Kruskal–Wallis test across suites on each score's per-mutant values.
pub fn compare_suites(report: &Report, keys: &[ScoreKey], alpha: f64) -> Result<SuiteComparison> {
    let suites = report.suite_labels();
    if suites.len() < 2 {
        return Err(Error::invalid(
            "suites",
            format!("comparison needs at least 2 suites, report has {}", suites.len()),
        ));
    }
    let group_sizes = suites
        .iter()
        .map(|s| report.rows.iter().filter(|r| &r.suite == s).count())
        .collect();
    let rows = keys
        .iter()
        .map(|key| {
            let groups: Vec<Vec<f64>> = suites
                .iter()
                .map(|s| {
                    report
                        .rows
                        .iter()
                        .filter(|r| &r.suite == s)
                        .filter_map(|r| r.scores.get(*key))
                        .collect()
                })
                .collect();
            match kruskal_wallis(&groups) {
                Ok(result) => ComparisonRow {
                    key: key.name().into(),
                    status: TestStatus::Ok,
                    significant: result.is_significant(alpha),
                    result: Some(result),
                    note: None,
                },
                Err(e) => ComparisonRow {
                    key: key.name().into(),
                    status: TestStatus::Undefined,
                    result: None,
                    significant: false,
                    note: Some(match e {
                        StatsError::EmptyGroup(i) => {
                            format!("no mutant of suite {:?} has a value", suites[i])
                        }
                        other => undefined_note(&other),
                    }),
                },
            }
        })
        .collect();
    Ok(SuiteComparison {
        alpha,
        suites,
        group_sizes,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub suite: String,
    pub key: String,
    /// Grid points with a value for this key.
    pub points: usize,
    pub status: TestStatus,
    pub result: Option<StatResult>,
    pub significant: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCorrelation {
    pub alpha: f64,
    pub operator: Operator,
    pub rows: Vec<CorrelationRow>,
}

/// Minimum number of grid points for a correlation.
pub const MIN_GRID_POINTS: usize = 3;

/// Correlate each score with the mutation ratios of `operator`, per suite:
/// Spearman against the dropout rate for MCD, multiple correlation on
/// (dropout rate, block size) for MCB.
pub fn correlate(
    report: &Report,
    operator: Operator,
    keys: &[ScoreKey],
    alpha: f64,
) -> Result<RatioCorrelation> {
    let mut by_suite: BTreeMap<&str, Vec<&ReportRow>> = BTreeMap::new();
    for r in report.rows.iter().filter(|r| r.operator == operator) {
        by_suite.entry(r.suite.as_str()).or_default().push(r);
    }
    if by_suite.is_empty() {
        return Err(Error::invalid(
            "operator",
            format!("report has no {operator} mutants"),
        ));
    }
    let mut rows = Vec::new();
    for (suite, grid) in &by_suite {
        if grid.len() < MIN_GRID_POINTS {
            return Err(Error::invalid(
                "grid",
                format!(
                    "suite {suite:?} has {} {operator} grid point(s), need at least {MIN_GRID_POINTS}",
                    grid.len()
                ),
            ));
        }
        for key in keys {
            let present: Vec<(&ReportRow, f64)> = grid
                .iter()
                .filter_map(|r| r.scores.get(*key).map(|v| (*r, v)))
                .collect();
            let y: Vec<f64> = present.iter().map(|(_, v)| *v).collect();
            let rate: Vec<f64> = present.iter().map(|(r, _)| r.dropout_rate).collect();
            let outcome = match operator {
                Operator::Mcd => spearman(&rate, &y),
                Operator::Mcb => {
                    let block: Vec<f64> = present
                        .iter()
                        .map(|(r, _)| r.block_size.unwrap_or(0) as f64)
                        .collect();
                    multiple_correlation(&rate, &block, &y)
                }
            };
            let (status, result, significant, note) = match outcome {
                Ok(res) => (TestStatus::Ok, Some(res.clone()), res.is_significant(alpha), None),
                Err(e) => (TestStatus::Undefined, None, false, Some(undefined_note(&e))),
            };
            rows.push(CorrelationRow {
                suite: suite.to_string(),
                key: key.name().into(),
                points: y.len(),
                status,
                result,
                significant,
                note,
            });
        }
    }
    Ok(RatioCorrelation {
        alpha,
        operator,
        rows,
    })
}

fn stat_cells(
    result: &Option<StatResult>,
    significant: bool,
    status: TestStatus,
    note: &Option<String>,
    fmt: fn(Option<f64>) -> String,
) -> Vec<String> {
    let r = result.as_ref();
    vec![
        fmt(r.map(|r| r.statistic)),
        fmt(r.map(|r| r.p_value)),
        fmt(r.and_then(|r| r.effect)),
        r.and_then(|r| r.band)
            .map(|b| serde_json::to_value(b).expect("band serializes").as_str().unwrap_or("").to_string())
            .unwrap_or_default(),
        significant.to_string(),
        match status {
            TestStatus::Ok => "ok".into(),
            TestStatus::Undefined => "undefined".into(),
        },
        note.clone().unwrap_or_default(),
    ]
}

const STAT_HEADER: [&str; 7] = ["statistic", "p_value", "effect", "band", "significant", "status", "note"];

impl SuiteComparison {
    pub fn render(&self, format: Format) -> String {
        let grid = |fmt: fn(Option<f64>) -> String| {
            let mut header = vec!["key".to_string()];
            header.extend(STAT_HEADER.map(String::from));
            let rows: Vec<Vec<String>> = self
                .rows
                .iter()
                .map(|r| {
                    let mut line = vec![r.key.clone()];
                    line.extend(stat_cells(&r.result, r.significant, r.status, &r.note, fmt));
                    line
                })
                .collect();
            (header, rows)
        };
        match format {
            Format::Canonical => canonical(self),
            Format::Csv => {
                let (h, r) = grid(num);
                render_csv(&h, &r)
            }
            Format::Table => {
                let mut out = String::new();
                let _ = writeln!(out, "Kruskal-Wallis across suites: {}   alpha = {}\n", self.suites.join(", "), self.alpha);
                let (h, r) = grid(num4);
                out.push_str(&render_table(&h, &r));
                out
            }
        }
    }
}

impl RatioCorrelation {
    pub fn render(&self, format: Format) -> String {
        let grid = |fmt: fn(Option<f64>) -> String| {
            let mut header = vec!["suite".to_string(), "key".to_string(), "points".to_string()];
            header.extend(STAT_HEADER.map(String::from));
            let rows: Vec<Vec<String>> = self
                .rows
                .iter()
                .map(|r| {
                    let mut line = vec![r.suite.clone(), r.key.clone(), r.points.to_string()];
                    line.extend(stat_cells(&r.result, r.significant, r.status, &r.note, fmt));
                    line
                })
                .collect();
            (header, rows)
        };
        match format {
            Format::Canonical => canonical(self),
            Format::Csv => {
                let (h, r) = grid(num);
                render_csv(&h, &r)
            }
            Format::Table => {
                let test = match self.operator {
                    Operator::Mcd => "Spearman rank correlation with dropout rate",
                    Operator::Mcb => "multiple correlation with dropout rate and block size",
                };
                let mut out = format!("{test}   alpha = {}\n\n", self.alpha);
                let (h, r) = grid(num4);
                out.push_str(&render_table(&h, &r));
                out
            }
        }
    }
}
