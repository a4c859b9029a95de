//! Detection stability across the version catalog.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, RunStatus, VersionInfo};
use crate::detection::DetectionOutcome;
use crate::stats::median_of_counts;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StabilityError {
    #[error("version `{0}` appears more than once")]
    DuplicateVersion(String),
    #[error("version `{0}` is not in the catalog")]
    UnknownVersion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointState {
    Detected,
    NotDetected,
    Unobserved,
}

impl PointState {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointState::Detected => "detected",
            PointState::NotDetected => "not_detected",
            PointState::Unobserved => "unobserved",
        }
    }

    fn observed(&self) -> Option<bool> {
        match self {
            PointState::Detected => Some(true),
            PointState::NotDetected => Some(false),
            PointState::Unobserved => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TimelinePoint {
    pub ordinal: usize,
    pub version_id: String,
    pub state: PointState,
}

/// A transition between two consecutive points, both observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub from_version: String,
    pub to_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilityTimeline {
    pub cve_id: String,
    pub points: Vec<TimelinePoint>,
    pub drops: Vec<Transition>,
    pub recoveries: Vec<Transition>,
    pub permanent_drop: bool,
    pub ever_detected: bool,
}

impl StabilityTimeline {
    /// Derive events from an ordered point list.
    pub fn from_points(cve_id: impl Into<String>, points: Vec<TimelinePoint>) -> Self {
        let mut drops = Vec::new();
        let mut recoveries = Vec::new();
        for pair in points.windows(2) {
            let (Some(before), Some(after)) = (pair[0].state.observed(), pair[1].state.observed()) else {
                continue;
            };
            let t = || Transition { from_version: pair[0].version_id.clone(), to_version: pair[1].version_id.clone() };
            match (before, after) {
                (true, false) => drops.push(t()),
                (false, true) => recoveries.push(t()),
                _ => {}
            }
        }
        let ever_detected = points.iter().any(|p| p.state == PointState::Detected);
        let last_observed = points.iter().rev().find_map(|p| p.state.observed());
        let permanent_drop = ever_detected && last_observed == Some(false) && !drops.is_empty();
        Self { cve_id: cve_id.into(), points, drops, recoveries, permanent_drop, ever_detected }
    }
}

/// Timeline of one CVE over the whole catalog.
///
/// A version is observed when it has an outcome and its run did not fail;
/// versions with failed or missing runs are unobserved.
pub fn build_timeline(
    cve_id: &str,
    outcomes: &[DetectionOutcome],
    run_statuses: &[(String, RunStatus)],
    catalog: &[VersionInfo],
) -> Result<StabilityTimeline, StabilityError> {
    let known: HashSet<&str> = catalog.iter().map(|v| v.id.as_str()).collect();
    let mut statuses = HashMap::new();
    for (version, status) in run_statuses {
        if !known.contains(version.as_str()) {
            return Err(StabilityError::UnknownVersion(version.clone()));
        }
        if statuses.insert(version.as_str(), *status).is_some() {
            return Err(StabilityError::DuplicateVersion(version.clone()));
        }
    }
    let mut detected = HashMap::new();
    for o in outcomes {
        if !known.contains(o.version_id.as_str()) {
            return Err(StabilityError::UnknownVersion(o.version_id.clone()));
        }
        if detected.insert(o.version_id.as_str(), o.detected).is_some() {
            return Err(StabilityError::DuplicateVersion(o.version_id.clone()));
        }
    }
    let mut ordered: Vec<&VersionInfo> = catalog.iter().collect();
    ordered.sort_by_key(|v| v.ordinal);
    let points = ordered
        .into_iter()
        .map(|v| {
            let failed = statuses.get(v.id.as_str()) == Some(&RunStatus::AnalysisError);
            let state = match detected.get(v.id.as_str()) {
                _ if failed => PointState::Unobserved,
                Some(true) => PointState::Detected,
                Some(false) => PointState::NotDetected,
                None => PointState::Unobserved,
            };
            TimelinePoint { ordinal: v.ordinal, version_id: v.id.clone(), state }
        })
        .collect();
    Ok(StabilityTimeline::from_points(cve_id, points))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffPoint {
    pub version_id: String,
    pub cves_detected: usize,
    pub cves_observed: usize,
    pub median_alerts: f64,
    pub is_minor: bool,
}

/// Detected-CVE count against median vulnerable-commit alert count, one point
/// per version with at least one successful run.
///
/// `outcomes` and `alert_counts` are keyed by `(cve_id, version_id)`.
pub fn tradeoff_points(
    corpus: &Corpus,
    outcomes: &HashMap<(String, String), DetectionOutcome>,
    alert_counts: &HashMap<(String, String), usize>,
) -> Vec<TradeoffPoint> {
    let mut points = Vec::new();
    for version in corpus.versions() {
        let mut counts = Vec::new();
        let mut detected = 0;
        for cve in corpus.cves() {
            let Some(run) = cve.run(&version.id) else { continue };
            if !run.is_ok() {
                continue;
            }
            let key = (cve.cve_id.clone(), version.id.clone());
            if let Some(&n) = alert_counts.get(&key) {
                counts.push(n);
            }
            if outcomes.get(&key).is_some_and(|o| o.detected) {
                detected += 1;
            }
        }
        if counts.is_empty() {
            continue;
        }
        points.push(TradeoffPoint {
            version_id: version.id.clone(),
            cves_detected: detected,
            cves_observed: counts.len(),
            median_alerts: median_of_counts(&counts).expect("non-empty"),
            is_minor: version.is_minor(),
        });
    }
    points
}
