//! Summaries, t-test reports and plot data computed from a response file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturbation::ContextSpec;
use crate::prompt_dataset::Setting;
use crate::run_orchestrator::{ResponseFile, RunError};
use crate::statistics::{
    aggregate, frequency_rank_curve, paired_t_test, unique_count_histogram, DiversityStats,
    FrequencyTable, StatsError, TTestResult,
};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;
pub const DEFAULT_BIN_WIDTH: u64 = 10;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("storage error: {0}")]
    Storage(String),
    #[error("response file has no usable records")]
    EmptyRun,
    #[error("condition missing: {0}")]
    ConditionMissing(String),
    #[error("nothing to render")]
    EmptyInput,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl From<RunError> for ReportError {
    fn from(e: RunError) -> Self {
        ReportError::Storage(e.to_string())
    }
}

impl From<std::io::Error> for ReportError {
    fn from(e: std::io::Error) -> Self {
        ReportError::Storage(e.to_string())
    }
}

/// Sort key placing conditions in canonical order; unknown tags go last.
fn condition_order(tag: &str) -> (u8, Option<ContextSpec>, String) {
    match tag.parse::<ContextSpec>() {
        Ok(spec) => (0, Some(spec), tag.to_string()),
        Err(_) => (1, None, tag.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey {
    model_name: String,
    setting: Setting,
    condition: (u8, Option<ContextSpec>, String),
}

#[derive(Default)]
struct Group {
    tables: BTreeMap<String, FrequencyTable>,
    failed: usize,
}

fn group_records(file: &ResponseFile) -> BTreeMap<GroupKey, Group> {
    let mut groups: BTreeMap<GroupKey, Group> = BTreeMap::new();
    for r in &file.records {
        let key = GroupKey {
            model_name: r.model_name.clone(),
            setting: r.setting,
            condition: condition_order(&r.condition),
        };
        let group = groups.entry(key).or_default();
        if r.parse_status.is_success() && !r.items.is_empty() {
            group
                .tables
                .entry(r.prompt_id.clone())
                .or_insert_with(|| FrequencyTable::new(&r.prompt_id, &r.condition))
                .add_list(&r.items);
        } else {
            group.failed += 1;
        }
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model_name: String,
    pub setting: Setting,
    pub condition: String,
    pub mean_entropy_bits: f64,
    pub median_count: f64,
    pub n_prompts: usize,
    pub failed_record_count: usize,
}

/// One row per (model, setting, condition) with at least one usable record.
pub fn build_summary(file: &ResponseFile) -> Result<Vec<SummaryRow>, ReportError> {
    let mut rows = Vec::new();
    for (key, group) in group_records(file) {
        if group.tables.is_empty() {
            continue;
        }
        let stats: Vec<DiversityStats> = group
            .tables
            .values()
            .map(DiversityStats::from_table)
            .collect();
        let agg = aggregate(&stats)?;
        rows.push(SummaryRow {
            model_name: key.model_name,
            setting: key.setting,
            condition: key.condition.2,
            mean_entropy_bits: agg.mean_entropy,
            median_count: agg.median_count,
            n_prompts: stats.len(),
            failed_record_count: group.failed,
        });
    }
    if rows.is_empty() {
        return Err(ReportError::EmptyRun);
    }
    Ok(rows)
}

fn format_count(row: &SummaryRow) -> String {
    if row.n_prompts % 2 == 1 {
        format!("{:.0}", row.median_count)
    } else {
        format!("{:.1}", row.median_count)
    }
}

/// Pipe table with columns Model, Setting, Condition, Entropy, Count.
pub fn render_markdown_table(rows: &[SummaryRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    let mut out = String::from("| Model | Setting | Condition | Entropy | Count |\n");
    out.push_str("|---|---|---|---|---|\n");
    for r in rows {
        writeln!(
            out,
            "| {} | {} | {} | {:.2} | {} |",
            r.model_name,
            r.setting,
            r.condition,
            r.mean_entropy_bits,
            format_count(r)
        )
        .expect("writing to a String");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTest {
    pub result: TTestResult,
    pub significant: bool,
}

impl MetricTest {
    fn of(result: TTestResult) -> Self {
        Self {
            significant: result.significant_at(SIGNIFICANCE_LEVEL),
            result,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestReport {
    pub baseline: String,
    pub treatment: String,
    pub alpha: f64,
    pub n_prompts: usize,
    pub count: MetricTest,
    pub entropy: MetricTest,
}

impl TTestReport {
    pub fn render(&self) -> String {
        let mut out = format!(
            "paired t-test: {} vs {} over {} prompts (alpha = {})\n",
            self.treatment, self.baseline, self.n_prompts, self.alpha
        );
        for (name, m) in [("count", &self.count), ("entropy", &self.entropy)] {
            writeln!(
                out,
                "{name}: mean diff {:.4}, t = {:.4}, df = {}, p = {:.4e} -> {}",
                m.result.mean_diff,
                m.result.t_statistic,
                m.result.degrees_of_freedom,
                m.result.p_two_sided,
                if m.significant {
                    "significant"
                } else {
                    "not significant"
                }
            )
            .expect("writing to a String");
        }
        out
    }
}

fn condition_stats(
    file: &ResponseFile,
    condition: &str,
) -> Result<BTreeMap<String, DiversityStats>, ReportError> {
    let mut tables: BTreeMap<String, FrequencyTable> = BTreeMap::new();
    let mut seen = false;
    for r in file.records.iter().filter(|r| r.condition == condition) {
        seen = true;
        if r.parse_status.is_success() && !r.items.is_empty() {
            tables
                .entry(r.prompt_id.clone())
                .or_insert_with(|| FrequencyTable::new(&r.prompt_id, &r.condition))
                .add_list(&r.items);
        }
    }
    if !seen || tables.is_empty() {
        return Err(ReportError::ConditionMissing(condition.to_string()));
    }
    Ok(tables
        .into_iter()
        .map(|(id, t)| (id, DiversityStats::from_table(&t)))
        .collect())
}

/// Paired t-tests on per-prompt distinct counts and entropies. Statistics
/// errors such as identical conditions (zero variance) are returned as-is.
pub fn build_ttest_report(
    file: &ResponseFile,
    baseline: &str,
    treatment: &str,
) -> Result<TTestReport, ReportError> {
    let base = condition_stats(file, baseline)?;
    let treat = condition_stats(file, treatment)?;
    if let Some(id) = treat.keys().find(|id| !base.contains_key(*id)) {
        return Err(ReportError::ConditionMissing(format!(
            "{baseline} has no usable records for prompt {id}"
        )));
    }
    if let Some(id) = base.keys().find(|id| !treat.contains_key(*id)) {
        return Err(ReportError::ConditionMissing(format!(
            "{treatment} has no usable records for prompt {id}"
        )));
    }
    // BTreeMap iteration gives both sides in the same sorted prompt-id order.
    let (b_count, b_entropy) = columns(base.values());
    let (t_count, t_entropy) = columns(treat.values());
    Ok(TTestReport {
        baseline: baseline.to_string(),
        treatment: treatment.to_string(),
        alpha: SIGNIFICANCE_LEVEL,
        n_prompts: base.len(),
        count: MetricTest::of(paired_t_test(&b_count, &t_count)?),
        entropy: MetricTest::of(paired_t_test(&b_entropy, &t_entropy)?),
    })
}

fn columns<'a>(stats: impl Iterator<Item = &'a DiversityStats>) -> (Vec<f64>, Vec<f64>) {
    stats
        .map(|s| (s.unique_count as f64, s.entropy_bits))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    RankCurve,
    Histogram,
}

impl std::str::FromStr for PlotKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rank_curve" => Ok(PlotKind::RankCurve),
            "histogram" => Ok(PlotKind::Histogram),
            other => Err(format!(
                "unknown plot kind {other:?} (expected rank_curve|histogram)"
            )),
        }
    }
}

/// Plot data as CSV text, rows sorted by condition then key.
pub fn plot_data_csv(
    file: &ResponseFile,
    kind: PlotKind,
    bin_width: u64,
) -> Result<String, ReportError> {
    let mut by_condition: BTreeMap<(u8, Option<ContextSpec>, String), Vec<FrequencyTable>> =
        BTreeMap::new();
    for (key, group) in group_records(file) {
        by_condition
            .entry(key.condition)
            .or_default()
            .extend(group.tables.into_values());
    }
    by_condition.retain(|_, tables| !tables.is_empty());
    if by_condition.is_empty() {
        return Err(ReportError::EmptyRun);
    }

    let mut out = String::new();
    match kind {
        PlotKind::RankCurve => {
            out.push_str("condition,rank,avg_frequency\n");
            for ((_, _, tag), tables) in &by_condition {
                for (rank, f) in frequency_rank_curve(tables)? {
                    writeln!(out, "{tag},{rank},{f:?}").expect("writing to a String");
                }
            }
        }
        PlotKind::Histogram => {
            out.push_str("condition,bin_lower_edge,frequency\n");
            for ((_, _, tag), tables) in &by_condition {
                let counts: Vec<u64> = tables.iter().map(|t| t.counts.len() as u64).collect();
                for (edge, f) in unique_count_histogram(&counts, bin_width)? {
                    writeln!(out, "{tag},{edge},{f}").expect("writing to a String");
                }
            }
        }
    }
    Ok(out)
}

/// Writes [`plot_data_csv`] to `out_path`. Nothing is written on error.
pub fn export_plot_data(
    file: &ResponseFile,
    kind: PlotKind,
    bin_width: u64,
    out_path: &Path,
) -> Result<(), ReportError> {
    let csv = plot_data_csv(file, kind, bin_width)?;
    std::fs::write(out_path, csv)?;
    Ok(())
}
