//! Aggregation of detection, locality and stability results into summary
//! tables: lead-time CDFs, breakdowns by CVE metadata, alert-count
//! percentiles and grouped statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, Language, Severity, Suite};
use crate::detection::LeadTimeResult;
use crate::evaluate::Evaluation;
use crate::num::Scalar;
use crate::sarifread::{Alert, Precision};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("cohort is empty after filtering")]
    EmptyCohort,
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
}

/// Precision class of the alerts that detected a CVE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionTier {
    Low,
    Medium,
    High,
    VeryHigh,
    /// Detected by alerts of more than one declared precision.
    Mixed,
}

impl PrecisionTier {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrecisionTier::Low => "low",
            PrecisionTier::Medium => "medium",
            PrecisionTier::High => "high",
            PrecisionTier::VeryHigh => "very_high",
            PrecisionTier::Mixed => "mixed",
        }
    }

    /// Tier of a set of alerts; `None` when no alert declares a precision.
    pub fn of_alerts(alerts: &[Alert]) -> Option<Self> {
        let declared: BTreeSet<Precision> =
            alerts.iter().map(|a| a.precision).filter(|p| *p != Precision::Unknown).collect();
        match declared.len() {
            0 => None,
            1 => Some(match declared.into_iter().next().expect("one element") {
                Precision::Low => PrecisionTier::Low,
                Precision::Medium => PrecisionTier::Medium,
                Precision::High => PrecisionTier::High,
                Precision::VeryHigh => PrecisionTier::VeryHigh,
                Precision::Unknown => unreachable!("filtered above"),
            }),
            _ => Some(PrecisionTier::Mixed),
        }
    }
}

impl fmt::Display for PrecisionTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecisionTier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(PrecisionTier::Low),
            "medium" => Ok(PrecisionTier::Medium),
            "high" => Ok(PrecisionTier::High),
            "very_high" | "very-high" => Ok(PrecisionTier::VeryHigh),
            "mixed" | "both" => Ok(PrecisionTier::Mixed),
            other => Err(format!("unknown precision tier `{other}`")),
        }
    }
}

/// Nested CVE populations: each cohort is a subset of the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    #[default]
    All,
    SuccessfulAnalyses,
    Detected,
    PositiveLeadTime,
}

impl Cohort {
    pub const CHAIN: [Cohort; 4] =
        [Cohort::All, Cohort::SuccessfulAnalyses, Cohort::Detected, Cohort::PositiveLeadTime];

    pub fn as_str(&self) -> &'static str {
        match self {
            Cohort::All => "all",
            Cohort::SuccessfulAnalyses => "successful_analyses",
            Cohort::Detected => "detected",
            Cohort::PositiveLeadTime => "positive_lead_time",
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cohort {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Cohort::CHAIN
            .into_iter()
            .find(|c| c.as_str() == s || c.as_str().replace('_', "-") == s)
            .ok_or_else(|| format!("unknown cohort `{s}`"))
    }
}

/// Per-CVE facts the aggregations filter and group on.
#[derive(Debug, Clone, PartialEq)]
pub struct CveSummary {
    pub cve_id: String,
    pub language: Language,
    pub cwes: Vec<String>,
    pub severity: Severity,
    /// Suites of the successful runs.
    pub suites: BTreeSet<Suite>,
    pub successful: bool,
    pub lead: LeadTimeResult,
    /// Version whose alerts represent the CVE: the first detecting version,
    /// else the last successful one.
    pub representative_version: Option<String>,
    /// Vulnerable-commit alert count at the representative version.
    pub alert_count: Option<usize>,
    pub precision_tier: Option<PrecisionTier>,
}

impl CveSummary {
    pub fn detected(&self) -> bool {
        self.lead.first_detecting_version.is_some()
    }

    pub fn in_cohort(&self, cohort: Cohort) -> bool {
        match cohort {
            Cohort::All => true,
            Cohort::SuccessfulAnalyses => self.successful,
            Cohort::Detected => self.successful && self.detected(),
            Cohort::PositiveLeadTime => self.successful && self.detected() && self.lead.positive,
        }
    }

    pub fn group_row(&self, value: Option<f64>) -> GroupRow {
        let mut keys = BTreeMap::new();
        keys.insert(Dimension::Language, vec![self.language.to_string()]);
        keys.insert(Dimension::Severity, vec![self.severity.to_string()]);
        keys.insert(Dimension::Cwe, self.cwes.clone());
        keys.insert(Dimension::Suite, self.suites.iter().map(ToString::to_string).collect());
        if let Some(tier) = self.precision_tier {
            keys.insert(Dimension::PrecisionTier, vec![tier.to_string()]);
        }
        GroupRow { keys, value }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CohortFilter {
    pub cohort: Cohort,
    pub language: Option<Language>,
    pub cwe: Option<String>,
    pub severity: Option<Severity>,
    pub suite: Option<Suite>,
    pub precision_tier: Option<PrecisionTier>,
}

impl CohortFilter {
    pub fn with_cohort(&self, cohort: Cohort) -> Self {
        Self { cohort, ..self.clone() }
    }

    /// Metadata constraints only, ignoring the cohort.
    pub fn matches_attributes(&self, row: &CveSummary) -> bool {
        self.language.is_none_or(|l| l == row.language)
            && self.cwe.as_ref().is_none_or(|c| row.cwes.iter().any(|w| w.eq_ignore_ascii_case(c)))
            && self.severity.is_none_or(|s| s == row.severity)
            && self.suite.is_none_or(|s| row.suites.contains(&s))
            && self.precision_tier.is_none_or(|t| row.precision_tier == Some(t))
    }

    pub fn matches(&self, row: &CveSummary) -> bool {
        row.in_cohort(self.cohort) && self.matches_attributes(row)
    }

    pub fn apply<'a>(&self, rows: &'a [CveSummary]) -> Vec<&'a CveSummary> {
        rows.iter().filter(|r| self.matches(r)).collect()
    }
}

/// One summary row per corpus CVE, in corpus order.
pub fn summarize(corpus: &Corpus, evaluation: &Evaluation) -> Vec<CveSummary> {
    corpus
        .cves()
        .iter()
        .zip(&evaluation.cves)
        .map(|(cve, eval)| {
            debug_assert_eq!(cve.cve_id, eval.cve_id);
            let cells: Vec<_> = evaluation.cells_of(&cve.cve_id).collect();
            let representative = match &eval.lead.first_detecting_version {
                Some(v) => cells.iter().find(|c| &c.version_id == v),
                None => cells.iter().max_by_key(|c| c.ordinal),
            };
            CveSummary {
                cve_id: cve.cve_id.clone(),
                language: cve.language,
                cwes: cve.cwes.clone(),
                severity: cve.severity,
                suites: cells.iter().map(|c| c.suite).collect(),
                successful: eval.successful,
                lead: eval.lead.clone(),
                representative_version: representative.map(|c| c.version_id.clone()),
                alert_count: representative.map(|c| c.vul_alerts),
                precision_tier: representative.and_then(|c| c.precision_tier),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CdfPoint<T> {
    pub lead_time_days: i64,
    /// CVEs with lead time at most `lead_time_days`.
    pub cves: usize,
    pub cumulative_fraction: T,
}

/// Empirical CDF of lead times over the detected CVEs that pass `filter`.
pub fn leadtime_cdf<T: Scalar>(rows: &[CveSummary], filter: &CohortFilter) -> Result<Vec<CdfPoint<T>>, ReportError> {
    let mut leads: Vec<i64> = filter.apply(rows).into_iter().filter_map(|r| r.lead.lead_time_days).collect();
    leadtime_cdf_of(&mut leads)
}

pub fn leadtime_cdf_of<T: Scalar>(leads: &mut [i64]) -> Result<Vec<CdfPoint<T>>, ReportError> {
    if leads.is_empty() {
        return Err(ReportError::EmptyCohort);
    }
    leads.sort_unstable();
    let total = leads.len();
    let mut points: Vec<CdfPoint<T>> = Vec::new();
    for (i, &lead) in leads.iter().enumerate() {
        let at_or_below = i + 1;
        match points.last_mut() {
            Some(p) if p.lead_time_days == lead => {
                p.cves = at_or_below;
                p.cumulative_fraction = T::ratio(at_or_below, total);
            }
            _ => points.push(CdfPoint {
                lead_time_days: lead,
                cves: at_or_below,
                cumulative_fraction: T::ratio(at_or_below, total),
            }),
        }
    }
    Ok(points)
}

pub const DEFAULT_PERCENTILES: [f64; 4] = [25.0, 50.0, 75.0, 90.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PercentileValue {
    pub percentile: f64,
    pub value: usize,
}

/// Nearest-rank percentiles of a multiset of counts.
pub fn percentile_table(counts: &[usize], percentiles: &[f64]) -> Result<Vec<PercentileValue>, ReportError> {
    if counts.is_empty() {
        return Err(ReportError::EmptyCohort);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    Ok(percentiles
        .iter()
        .filter_map(|&p| stats::nearest_rank(&sorted, p).map(|value| PercentileValue { percentile: p, value }))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Language,
    Severity,
    Cwe,
    Suite,
    PrecisionTier,
    Version,
}

impl Dimension {
    pub fn as_str(&self) -> &'static str {
        match self {
            Dimension::Language => "language",
            Dimension::Severity => "severity",
            Dimension::Cwe => "cwe",
            Dimension::Suite => "suite",
            Dimension::PrecisionTier => "precision_tier",
            Dimension::Version => "version",
        }
    }

    /// Whether a row can carry several values of this dimension.
    pub fn is_multi_valued(&self) -> bool {
        matches!(self, Dimension::Cwe | Dimension::Suite)
    }

    /// Header for the per-group count column.
    pub fn count_label(&self) -> &'static str {
        if *self == Dimension::Cwe {
            "cve_cwe_pairs"
        } else {
            "count"
        }
    }
}

impl FromStr for Dimension {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Dimension::Language,
            Dimension::Severity,
            Dimension::Cwe,
            Dimension::Suite,
            Dimension::PrecisionTier,
            Dimension::Version,
        ]
        .into_iter()
        .find(|d| d.as_str() == s)
        .ok_or_else(|| ReportError::UnknownDimension(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Count,
    Mean,
    Median,
    Stddev,
}

/// A groupable record: dimension values plus an optional measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub keys: BTreeMap<Dimension, Vec<String>>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStat {
    pub group: String,
    /// Rows in the group.
    pub count: usize,
    /// Rows with a defined measurement.
    pub defined: usize,
    pub value: Option<f64>,
}

/// One statistic per group, ordered by descending count then group name.
pub fn group_summary(
    rows: &[GroupRow],
    group_by: Dimension,
    statistic: Statistic,
) -> Result<Vec<GroupStat>, ReportError> {
    let mut groups: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
    for row in rows {
        let values =
            row.keys.get(&group_by).ok_or_else(|| ReportError::UnknownDimension(group_by.as_str().to_owned()))?;
        for key in values {
            let entry = groups.entry(key.as_str()).or_default();
            entry.0 += 1;
            entry.1.extend(row.value);
        }
    }
    let mut out: Vec<GroupStat> = groups
        .into_iter()
        .map(|(group, (count, values))| GroupStat {
            group: group.to_owned(),
            count,
            defined: values.len(),
            value: match statistic {
                Statistic::Count => Some(count as f64),
                Statistic::Mean => stats::mean(&values),
                Statistic::Median => stats::median(&values),
                Statistic::Stddev => stats::stddev(&values),
            },
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.group.cmp(&b.group)));
    Ok(out)
}
