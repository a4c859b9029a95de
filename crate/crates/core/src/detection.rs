//! Detection predicate and lead time.
//!
//! A version detects a CVE when some alert on the vulnerable commit covers a
//! line the fix touched and that alert is gone from the fix commit.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{CommitKind, CveRecord, FixDelta, VersionInfo};
use crate::sarifread::{Alert, AlertSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectionError {
    #[error("alert sets come from different versions ({vulnerable} vs {fixed})")]
    VersionMismatch { vulnerable: String, fixed: String },
    #[error("expected a {expected} alert set, got {actual}")]
    CommitKindMismatch { expected: CommitKind, actual: CommitKind },
    #[error("outcome references version `{0}` which is not in the catalog")]
    UnknownVersion(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionOutcome {
    pub cve_id: String,
    pub version_id: String,
    pub detected: bool,
    /// Alerts passing both the location and the removal heuristic.
    pub matching_alerts: Vec<Alert>,
    /// Alerts passing the location heuristic alone.
    pub location_only_matches: usize,
    /// Location matches discarded because they survive into the fix.
    pub survived_filter_removals: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeadTimeResult {
    pub cve_id: String,
    pub first_detecting_version: Option<String>,
    pub lead_time_days: Option<i64>,
    pub positive: bool,
}

/// Whether two alerts are the same finding across the fix.
///
/// With a shared fingerprint key on both sides, any equal shared value is a
/// match. Otherwise the alerts match on file.
fn same_finding(a: &Alert, b: &Alert) -> bool {
    if a.query != b.query {
        return false;
    }
    let mut shared = a.fingerprints.iter().filter_map(|(k, v)| b.fingerprints.get(k).map(|w| v == w)).peekable();
    if shared.peek().is_some() {
        shared.any(|eq| eq)
    } else {
        a.file == b.file
    }
}

/// Whether `alert` is still reported on the fix commit.
pub fn alert_survives_fix(alert: &Alert, fix_alerts: &AlertSet) -> bool {
    fix_alerts.alerts.iter().any(|b| same_finding(alert, b))
}

/// Location heuristic alone: the alert's primary range covers a fix line of
/// its own file.
pub fn alert_at_fix_location(alert: &Alert, fix_delta: &FixDelta) -> bool {
    fix_delta.lines_in(&alert.file).any(|l| alert.lines.contains(l))
}

pub fn detect(
    fix_delta: &FixDelta,
    vul_alerts: &AlertSet,
    fix_alerts: &AlertSet,
) -> Result<DetectionOutcome, DetectionError> {
    if vul_alerts.version_id != fix_alerts.version_id {
        return Err(DetectionError::VersionMismatch {
            vulnerable: vul_alerts.version_id.clone(),
            fixed: fix_alerts.version_id.clone(),
        });
    }
    for (set, expected) in [(vul_alerts, CommitKind::Vulnerable), (fix_alerts, CommitKind::Fixed)] {
        if set.commit_kind != expected {
            return Err(DetectionError::CommitKindMismatch { expected, actual: set.commit_kind });
        }
    }

    let mut matching_alerts = Vec::new();
    let mut location_only_matches = 0;
    for alert in vul_alerts.alerts.iter().filter(|a| alert_at_fix_location(a, fix_delta)) {
        location_only_matches += 1;
        if !alert_survives_fix(alert, fix_alerts) {
            matching_alerts.push(alert.clone());
        }
    }
    Ok(DetectionOutcome {
        cve_id: vul_alerts.cve_id.clone(),
        version_id: vul_alerts.version_id.clone(),
        detected: !matching_alerts.is_empty(),
        survived_filter_removals: location_only_matches - matching_alerts.len(),
        location_only_matches,
        matching_alerts,
    })
}

/// Days between the fix and the release of the earliest detecting version.
pub fn lead_time(
    cve: &CveRecord,
    outcomes: &[DetectionOutcome],
    catalog: &[VersionInfo],
) -> Result<LeadTimeResult, DetectionError> {
    let mut first: Option<&VersionInfo> = None;
    for outcome in outcomes {
        let version = catalog
            .iter()
            .find(|v| v.id == outcome.version_id)
            .ok_or_else(|| DetectionError::UnknownVersion(outcome.version_id.clone()))?;
        if outcome.detected && first.is_none_or(|f| version.ordinal < f.ordinal) {
            first = Some(version);
        }
    }
    let lead_time_days = first.map(|v| (cve.fix_date - v.release_date).num_days());
    Ok(LeadTimeResult {
        cve_id: cve.cve_id.clone(),
        first_detecting_version: first.map(|v| v.id.clone()),
        lead_time_days,
        positive: lead_time_days.is_some_and(|d| d > 0),
    })
}
