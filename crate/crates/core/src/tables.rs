//! Output tables behind each CLI subcommand.
//!
//! Column orders here are part of the output contract.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde_json::json;

use crate::corpus::Corpus;
use crate::evaluate::{CellEvaluation, Evaluation};
use crate::num::Scalar;
use crate::output::{Cell, Table};
use crate::report::{
    group_summary, leadtime_cdf, percentile_table, Cohort, CohortFilter, CveSummary, Dimension, Statistic,
    DEFAULT_PERCENTILES,
};
use crate::stability::{tradeoff_points, StabilityTimeline};
use crate::stats;

/// Filter applied by every table builder.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selection {
    pub filter: CohortFilter,
    /// Explicit cohort; report breakdowns cover every cohort when absent.
    pub cohort: Option<Cohort>,
}

impl Selection {
    pub fn new(filter: CohortFilter, cohort: Option<Cohort>) -> Self {
        let filter = CohortFilter { cohort: cohort.unwrap_or_default(), ..filter };
        Self { filter, cohort }
    }

    fn cve_rows<'a>(&self, rows: &'a [CveSummary]) -> BTreeMap<&'a str, &'a CveSummary> {
        rows.iter().filter(|r| self.filter.matches(r)).map(|r| (r.cve_id.as_str(), r)).collect()
    }

    fn cell_selected(&self, cell: &CellEvaluation, rows: &BTreeMap<&str, &CveSummary>) -> bool {
        rows.contains_key(cell.cve_id.as_str()) && self.filter.suite.is_none_or(|s| s == cell.suite)
    }
}

pub fn detection_table(evaluation: &Evaluation, rows: &[CveSummary], sel: &Selection) -> Table {
    let selected = sel.cve_rows(rows);
    let mut t = Table::new(vec![
        "cve_id",
        "version_id",
        "suite",
        "detected",
        "matching_alerts",
        "location_only_matches",
        "survived_filter_removals",
        "vulnerable_alerts",
        "fixed_alerts",
        "skipped_results",
    ]);
    for c in evaluation.cells.iter().filter(|c| sel.cell_selected(c, &selected)) {
        t.push(vec![
            c.cve_id.as_str().into(),
            c.version_id.as_str().into(),
            c.suite.as_str().into(),
            c.outcome.detected.into(),
            c.outcome.matching_alerts.len().into(),
            c.outcome.location_only_matches.into(),
            c.outcome.survived_filter_removals.into(),
            c.vul_alerts.into(),
            c.fix_alerts.into(),
            (c.skipped_vul + c.skipped_fix).into(),
        ]);
    }
    t
}

pub fn lead_time_table(corpus: &Corpus, rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t =
        Table::new(vec!["cve_id", "fix_date", "first_detecting_version", "release_date", "lead_time_days", "positive"]);
    for row in rows.iter().filter(|r| sel.filter.matches(r)) {
        let id = row.cve_id.as_str();
        let cve = corpus.cve(id).expect("summary rows come from the corpus");
        let first = row.lead.first_detecting_version.as_deref();
        let release = first.and_then(|v| corpus.version(v)).map(|v| v.release_date.to_string());
        t.push(vec![
            id.into(),
            cve.fix_date.to_string().into(),
            first.into(),
            release.into(),
            row.lead.lead_time_days.into(),
            row.lead.positive.into(),
        ]);
    }
    t
}

fn opt_exact<T: Scalar>(v: &Option<T>) -> Cell {
    v.as_ref().and_then(Scalar::exact_repr).into()
}

fn opt_float<T: Scalar>(v: &Option<T>) -> Cell {
    v.as_ref().map(Scalar::to_f64).into()
}

pub fn locality_table(evaluation: &Evaluation, rows: &[CveSummary], sel: &Selection) -> Table {
    let selected = sel.cve_rows(rows);
    let mut t = Table::new(vec![
        "cve_id",
        "version_id",
        "detected",
        "total_alerts",
        "alerts_in_vulnerable_files",
        "hard_project",
        "soft_project",
        "hard_file",
        "soft_file",
        "hard_project_exact",
        "soft_project_exact",
        "hard_file_exact",
        "soft_file_exact",
    ]);
    for c in evaluation.cells.iter().filter(|c| sel.cell_selected(c, &selected)) {
        let l = &c.locality;
        t.push(vec![
            c.cve_id.as_str().into(),
            c.version_id.as_str().into(),
            c.outcome.detected.into(),
            l.total_alerts.into(),
            l.alerts_in_vulnerable_files.into(),
            opt_float(&l.hard_project),
            opt_float(&l.soft_project),
            opt_float(&l.hard_file),
            opt_float(&l.soft_file),
            opt_exact(&l.hard_project),
            opt_exact(&l.soft_project),
            opt_exact(&l.hard_file),
            opt_exact(&l.soft_file),
        ]);
    }
    t
}

fn selected_timelines<'a>(
    evaluation: &'a Evaluation,
    rows: &[CveSummary],
    sel: &Selection,
) -> Vec<&'a StabilityTimeline> {
    let selected = sel.cve_rows(rows);
    evaluation.cves.iter().filter(|c| selected.contains_key(c.cve_id.as_str())).map(|c| &c.timeline).collect()
}

/// Long form: one row per (CVE, version).
pub fn timeline_table(evaluation: &Evaluation, rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t = Table::new(vec!["cve_id", "version_id", "state"]);
    for tl in selected_timelines(evaluation, rows, sel) {
        for p in &tl.points {
            t.push(vec![tl.cve_id.as_str().into(), p.version_id.as_str().into(), p.state.as_str().into()]);
        }
    }
    t
}

/// One JSON object per CVE timeline.
pub fn write_timelines_jsonl<W: Write>(
    evaluation: &Evaluation,
    rows: &[CveSummary],
    sel: &Selection,
    mut out: W,
) -> io::Result<()> {
    for tl in selected_timelines(evaluation, rows, sel) {
        serde_json::to_writer(&mut out, tl)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn stability_table(evaluation: &Evaluation, rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t = Table::new(vec!["cve_id", "ever_detected", "drops", "recoveries", "permanent_drop", "drop_versions"]);
    for tl in selected_timelines(evaluation, rows, sel) {
        let versions: Vec<&str> = tl.drops.iter().map(|d| d.to_version.as_str()).collect();
        t.push(vec![
            tl.cve_id.as_str().into(),
            tl.ever_detected.into(),
            tl.drops.len().into(),
            tl.recoveries.len().into(),
            tl.permanent_drop.into(),
            versions.join(";").into(),
        ]);
    }
    t
}

pub fn tradeoff_table(corpus: &Corpus, evaluation: &Evaluation, rows: &[CveSummary], sel: &Selection) -> Table {
    let selected = sel.cve_rows(rows);
    let keep = |key: &(String, String)| selected.contains_key(key.0.as_str());
    let outcomes = evaluation.outcome_map().into_iter().filter(|(k, _)| keep(k)).collect();
    let counts = evaluation
        .cells
        .iter()
        .filter(|c| sel.cell_selected(c, &selected))
        .map(|c| ((c.cve_id.clone(), c.version_id.clone()), c.vul_alerts))
        .collect();
    let mut t = Table::new(vec!["version_id", "cves_detected", "median_alerts", "is_minor"]);
    for p in tradeoff_points(corpus, &outcomes, &counts) {
        t.push(vec![p.version_id.into(), p.cves_detected.into(), p.median_alerts.into(), p.is_minor.into()]);
    }
    t
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

const METRICS: usize = 4;

fn metric_values(cell: &CellEvaluation) -> [Option<f64>; METRICS] {
    let l = cell.locality.to_f64();
    [l.hard_project, l.soft_project, l.hard_file, l.soft_file]
}

fn report_cohorts(sel: &Selection) -> Vec<Cohort> {
    match sel.cohort {
        Some(c) => vec![c],
        None => Cohort::CHAIN.to_vec(),
    }
}

/// The cohort locality and lead-time aggregates run on: detected or narrower.
fn detected_cohort(sel: &Selection) -> Cohort {
    sel.cohort.unwrap_or(Cohort::Detected).max(Cohort::Detected)
}

fn summary_table(rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t = Table::new(vec!["cohort", "cves"]);
    for cohort in Cohort::CHAIN {
        t.push(vec![cohort.as_str().into(), sel.filter.with_cohort(cohort).apply(rows).len().into()]);
    }
    t
}

fn cdf_table(rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t = Table::new(vec!["lead_time_days", "cves", "cumulative_fraction"]);
    let filter = sel.filter.with_cohort(detected_cohort(sel));
    if let Ok(points) = leadtime_cdf::<crate::Exact>(rows, &filter) {
        for p in points {
            t.push(vec![p.lead_time_days.into(), p.cves.into(), p.cumulative_fraction.to_f64().into()]);
        }
    }
    t
}

fn breakdown_table(rows: &[CveSummary], sel: &Selection, dim: Dimension) -> Table {
    let mut t = Table::new(vec!["cohort", dim.as_str(), dim.count_label()]);
    for cohort in report_cohorts(sel) {
        let group_rows: Vec<_> =
            sel.filter.with_cohort(cohort).apply(rows).into_iter().map(|r| r.group_row(None)).collect();
        for g in group_summary(&group_rows, dim, Statistic::Count).expect("summary rows carry the dimension") {
            t.push(vec![cohort.as_str().into(), g.group.into(), g.count.into()]);
        }
    }
    t
}

fn alert_count_table(rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t = Table::new(vec!["cohort", "cves", "p25", "p50", "p75", "p90"]);
    for cohort in report_cohorts(sel) {
        let counts: Vec<usize> =
            sel.filter.with_cohort(cohort).apply(rows).into_iter().filter_map(|r| r.alert_count).collect();
        let mut row: Vec<Cell> = vec![cohort.as_str().into(), counts.len().into()];
        match percentile_table(&counts, &DEFAULT_PERCENTILES) {
            Ok(ps) => row.extend(ps.into_iter().map(|p| Cell::from(p.value))),
            Err(_) => row.extend(DEFAULT_PERCENTILES.iter().map(|_| Cell::Null)),
        }
        t.push(row);
    }
    t
}

fn precision_tier_table(evaluation: &Evaluation, rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t = Table::new([&["precision_tier", "cves"][..], &TIER_COLUMNS].concat());
    let filter = sel.filter.with_cohort(detected_cohort(sel));
    let cves: Vec<&CveSummary> = filter.apply(rows).into_iter().filter(|r| r.precision_tier.is_some()).collect();
    let per_metric: Vec<Vec<_>> = (0..METRICS)
        .map(|i| {
            let group_rows: Vec<_> = cves
                .iter()
                .map(|r| {
                    let cell = r.representative_version.as_deref().and_then(|v| evaluation.cell(&r.cve_id, v));
                    r.group_row(cell.and_then(|c| metric_values(c)[i]))
                })
                .collect();
            let medians =
                group_summary(&group_rows, Dimension::PrecisionTier, Statistic::Median).expect("tier present");
            let sds = group_summary(&group_rows, Dimension::PrecisionTier, Statistic::Stddev).expect("tier present");
            (medians, sds)
        })
        .map(|(m, s)| m.into_iter().zip(s).collect())
        .collect();
    for (g, _) in per_metric.first().map(Vec::as_slice).unwrap_or_default() {
        let mut row: Vec<Cell> = vec![g.group.as_str().into(), g.count.into()];
        for metric in &per_metric {
            let (median, sd) = metric.iter().find(|(m, _)| m.group == g.group).expect("same groups per metric");
            row.extend([median.value.into(), sd.value.into(), median.defined.into()]);
        }
        t.push(row);
    }
    t
}

const TIER_COLUMNS: [&str; 12] = [
    "hard_project_median",
    "hard_project_stddev",
    "hard_project_n",
    "soft_project_median",
    "soft_project_stddev",
    "soft_project_n",
    "hard_file_median",
    "hard_file_stddev",
    "hard_file_n",
    "soft_file_median",
    "soft_file_stddev",
    "soft_file_n",
];

const VERSION_COLUMNS: [&str; 12] = [
    "hard_project_mean",
    "hard_project_median",
    "hard_project_n",
    "soft_project_mean",
    "soft_project_median",
    "soft_project_n",
    "hard_file_mean",
    "hard_file_median",
    "hard_file_n",
    "soft_file_mean",
    "soft_file_median",
    "soft_file_n",
];

fn version_locality_table(corpus: &Corpus, evaluation: &Evaluation, rows: &[CveSummary], sel: &Selection) -> Table {
    let mut t = Table::new([&["version_id", "cves"][..], &VERSION_COLUMNS].concat());
    let cohort = detected_cohort(sel);
    let selected = sel.cve_rows(rows);
    let attr: BTreeMap<&str, &CveSummary> =
        rows.iter().filter(|r| sel.filter.matches_attributes(r)).map(|r| (r.cve_id.as_str(), r)).collect();
    for version in corpus.versions() {
        let cells: Vec<&CellEvaluation> = evaluation
            .cells
            .iter()
            .filter(|c| c.version_id == version.id && c.outcome.detected)
            .filter(|c| sel.filter.suite.is_none_or(|s| s == c.suite))
            .filter(|c| match cohort {
                Cohort::PositiveLeadTime => selected.contains_key(c.cve_id.as_str()),
                _ => attr.contains_key(c.cve_id.as_str()),
            })
            .collect();
        if cells.is_empty() {
            continue;
        }
        let mut row: Vec<Cell> = vec![version.id.as_str().into(), cells.len().into()];
        for i in 0..METRICS {
            let values: Vec<f64> = cells.iter().filter_map(|c| metric_values(c)[i]).collect();
            row.extend([stats::mean(&values).into(), stats::median(&values).into(), values.len().into()]);
        }
        t.push(row);
    }
    t
}

/// Every aggregate table of the `report` command, keyed by file stem.
pub fn report_tables(
    corpus: &Corpus,
    evaluation: &Evaluation,
    rows: &[CveSummary],
    sel: &Selection,
) -> Vec<(&'static str, Table)> {
    vec![
        ("summary", summary_table(rows, sel)),
        ("leadtime_cdf", cdf_table(rows, sel)),
        ("severity", breakdown_table(rows, sel, Dimension::Severity)),
        ("language", breakdown_table(rows, sel, Dimension::Language)),
        ("cwe", breakdown_table(rows, sel, Dimension::Cwe)),
        ("alert_counts", alert_count_table(rows, sel)),
        ("precision_tiers", precision_tier_table(evaluation, rows, sel)),
        ("version_locality", version_locality_table(corpus, evaluation, rows, sel)),
    ]
}

/// Conventions behind the report numbers.
pub fn report_metadata(sel: &Selection) -> serde_json::Value {
    let f = &sel.filter;
    json!({
        "percentiles": {"method": "nearest_rank", "rank": "ceil(p / 100 * n)", "values": DEFAULT_PERCENTILES},
        "stddev": "population",
        "median_even": "mean of the two middle values",
        "version_locality_mean": "per CVE detected at the version",
        "precision_tier": "distinct declared precisions of the detecting alerts at the first detecting version",
        "alert_count_version": "first detecting version, else last successful version",
        "cwe_counting": "one count per CVE-CWE pair",
        "cohorts": report_cohorts(sel).iter().map(Cohort::as_str).collect::<Vec<_>>(),
        "locality_cohort": detected_cohort(sel).as_str(),
        "filter": {
            "language": f.language.map(|l| l.to_string()),
            "cwe": f.cwe,
            "severity": f.severity.map(|s| s.to_string()),
            "suite": f.suite.map(|s| s.to_string()),
            "precision_tier": f.precision_tier.map(|t| t.to_string()),
        },
        "absent_value": "null",
    })
}
