//! SARIF 2.1.0 ingestion.
//!
//! Only the fields an alert tuple needs are read: rule id, primary location
//! (file and line range), `partialFingerprints`, and the rule's declared
//! precision. Related locations, code flows and columns are ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use percent_encoding::percent_decode_str;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{CommitKind, Suite};
use crate::path::normalize_repo_path;

pub const SUPPORTED_VERSION: &str = "2.1.0";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SarifError {
    #[error("invalid SARIF document: {0}")]
    SarifSyntax(String),
    #[error("unsupported SARIF version `{0}` (expected 2.1.0)")]
    SarifUnsupported(String),
}

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineRange {
    pub start: u32,
    pub end: u32,
}

impl LineRange {
    pub fn new(start: u32, end: u32) -> Self {
        assert!(start >= 1 && end >= start, "invalid line range {start}..={end}");
        Self { start, end }
    }

    pub fn contains(&self, line: u32) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn lines(&self) -> impl Iterator<Item = u32> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Precision {
    Low,
    Medium,
    High,
    VeryHigh,
    #[default]
    Unknown,
}

impl Precision {
    pub fn as_str(&self) -> &'static str {
        match self {
            Precision::Low => "low",
            Precision::Medium => "medium",
            Precision::High => "high",
            Precision::VeryHigh => "very_high",
            Precision::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Precision {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Precision::Low),
            "medium" => Ok(Precision::Medium),
            "high" => Ok(Precision::High),
            "very-high" | "very_high" | "veryhigh" => Ok(Precision::VeryHigh),
            "unknown" => Ok(Precision::Unknown),
            other => Err(format!("unknown precision `{other}`")),
        }
    }
}

impl Serialize for Precision {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// One analyzer finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Alert {
    pub query: String,
    pub file: String,
    pub lines: LineRange,
    pub fingerprints: BTreeMap<String, String>,
    pub version_id: String,
    pub precision: Precision,
}

/// Identifies which analysis an alert set came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertSetMeta {
    pub cve_id: String,
    pub version_id: String,
    pub commit_kind: CommitKind,
    pub suite: Suite,
}

/// All alerts of one analysis. Duplicates are kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlertSet {
    pub cve_id: String,
    pub version_id: String,
    pub commit_kind: CommitKind,
    pub suite: Suite,
    pub alerts: Vec<Alert>,
    /// Results that had no usable primary location or rule id.
    pub skipped: usize,
}

impl AlertSet {
    pub fn empty(meta: AlertSetMeta) -> Self {
        Self {
            cve_id: meta.cve_id,
            version_id: meta.version_id,
            commit_kind: meta.commit_kind,
            suite: meta.suite,
            alerts: Vec::new(),
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.alerts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alerts.is_empty()
    }
}

// Subset of the SARIF object model. Unknown members are ignored.

#[derive(Deserialize)]
struct Log {
    version: Option<String>,
    #[serde(default)]
    runs: Vec<Run>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Run {
    tool: Option<Tool>,
    #[serde(default)]
    results: Option<Vec<SarifResult>>,
    #[serde(default)]
    original_uri_base_ids: BTreeMap<String, ArtifactLocation>,
    #[serde(default)]
    artifacts: Vec<Artifact>,
}

#[derive(Deserialize)]
struct Tool {
    driver: Option<ToolComponent>,
    #[serde(default)]
    extensions: Vec<ToolComponent>,
}

#[derive(Deserialize)]
struct ToolComponent {
    #[serde(default)]
    rules: Vec<Rule>,
}

#[derive(Deserialize)]
struct Rule {
    id: Option<String>,
    #[serde(default)]
    properties: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SarifResult {
    rule_id: Option<String>,
    rule_index: Option<i64>,
    rule: Option<RuleReference>,
    #[serde(default)]
    locations: Vec<SarifLocation>,
    #[serde(default)]
    partial_fingerprints: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RuleReference {
    id: Option<String>,
    index: Option<i64>,
    tool_component: Option<ToolComponentReference>,
}

#[derive(Deserialize)]
struct ToolComponentReference {
    index: Option<i64>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct SarifLocation {
    physical_location: Option<PhysicalLocation>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct PhysicalLocation {
    artifact_location: Option<ArtifactLocation>,
    region: Option<Region>,
}

#[derive(Deserialize, Clone)]
#[serde(rename_all = "camelCase")]
struct ArtifactLocation {
    uri: Option<String>,
    uri_base_id: Option<String>,
    index: Option<i64>,
}

#[derive(Deserialize)]
struct Artifact {
    location: Option<ArtifactLocation>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Region {
    start_line: Option<i64>,
    end_line: Option<i64>,
}

/// Parse a SARIF document into the alert set of one analysis.
pub fn parse_sarif(doc: &str, meta: AlertSetMeta) -> Result<AlertSet, SarifError> {
    let log: Log = serde_json::from_str(doc).map_err(|e| SarifError::SarifSyntax(e.to_string()))?;
    match log.version.as_deref() {
        Some(SUPPORTED_VERSION) => {}
        Some(other) => return Err(SarifError::SarifUnsupported(other.to_owned())),
        None => return Err(SarifError::SarifSyntax("missing `version`".into())),
    }
    let mut set = AlertSet::empty(meta);
    for run in &log.runs {
        for result in run.results.iter().flatten() {
            match alert_from_result(run, result, &set.version_id) {
                Some(alert) => set.alerts.push(alert),
                None => set.skipped += 1,
            }
        }
    }
    Ok(set)
}

/// Total number of results across runs, for skip accounting.
pub fn count_results(doc: &str) -> Result<usize, SarifError> {
    let log: Log = serde_json::from_str(doc).map_err(|e| SarifError::SarifSyntax(e.to_string()))?;
    Ok(log.runs.iter().map(|r| r.results.as_ref().map_or(0, Vec::len)).sum())
}

fn alert_from_result(run: &Run, result: &SarifResult, version_id: &str) -> Option<Alert> {
    let rule = resolve_rule(run, result);
    let query = result
        .rule_id
        .clone()
        .or_else(|| result.rule.as_ref().and_then(|r| r.id.clone()))
        .or_else(|| rule.and_then(|r| r.id.clone()))
        .filter(|q| !q.is_empty())?;
    let rule = rule.or_else(|| find_rule_by_id(run, &query));

    let physical = result.locations.iter().find_map(|l| l.physical_location.as_ref())?;
    let region = physical.region.as_ref()?;
    let start = u32::try_from(region.start_line?).ok().filter(|&s| s >= 1)?;
    let end = region.end_line.and_then(|e| u32::try_from(e).ok()).unwrap_or(start).max(start);
    let file = resolve_file(run, physical.artifact_location.as_ref()?)?;

    let fingerprints = result
        .partial_fingerprints
        .iter()
        .map(|(k, v)| {
            let value = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), value)
        })
        .collect();
    let precision = rule
        .and_then(|r| r.properties.get("precision"))
        .and_then(Value::as_str)
        .and_then(|p| p.parse().ok())
        .unwrap_or_default();

    Some(Alert {
        query,
        file,
        lines: LineRange { start, end },
        fingerprints,
        version_id: version_id.to_owned(),
        precision,
    })
}

fn component(run: &Run, extension: Option<i64>) -> Option<&ToolComponent> {
    let tool = run.tool.as_ref()?;
    match extension {
        Some(i) => tool.extensions.get(usize::try_from(i).ok()?),
        None => tool.driver.as_ref(),
    }
}

fn resolve_rule<'r>(run: &'r Run, result: &SarifResult) -> Option<&'r Rule> {
    let (index, extension) = match &result.rule {
        Some(r) if r.index.is_some() => (r.index, r.tool_component.as_ref().and_then(|t| t.index)),
        _ => (result.rule_index, None),
    };
    let index = usize::try_from(index?).ok()?;
    component(run, extension)?.rules.get(index)
}

fn find_rule_by_id<'r>(run: &'r Run, id: &str) -> Option<&'r Rule> {
    let tool = run.tool.as_ref()?;
    tool.driver.iter().chain(&tool.extensions).flat_map(|c| &c.rules).find(|r| r.id.as_deref() == Some(id))
}

fn resolve_file(run: &Run, location: &ArtifactLocation) -> Option<String> {
    let location = match (&location.uri, location.index) {
        (Some(_), _) => location.clone(),
        (None, Some(i)) => run.artifacts.get(usize::try_from(i).ok()?)?.location.clone()?,
        (None, None) => return None,
    };
    let uri = decode(location.uri.as_deref()?);
    let path = match file_uri_path(&uri) {
        Some(absolute) => strip_absolute_base(run, &absolute)?,
        None if uri.contains("://") => return None,
        None => {
            let prefix = location.uri_base_id.as_deref().map(|b| base_prefix(run, b, 0)).unwrap_or_default();
            format!("{prefix}{uri}")
        }
    };
    normalize_repo_path(&path).ok()
}

fn decode(raw: &str) -> String {
    percent_decode_str(raw).decode_utf8_lossy().into_owned()
}

/// Path part of a `file:` URI, if it is one.
fn file_uri_path(uri: &str) -> Option<String> {
    let rest = uri.strip_prefix("file:")?;
    let path = match rest.strip_prefix("//") {
        // file://host/path or file:///path
        Some(authority) => &authority[authority.find('/').unwrap_or(authority.len())..],
        None => rest,
    };
    Some(path.to_owned())
}

/// Relative prefix contributed by a chain of `originalUriBaseIds`. Absolute
/// bases are the repository root and contribute nothing.
fn base_prefix(run: &Run, base: &str, depth: usize) -> String {
    let Some(entry) = run.original_uri_base_ids.get(base) else { return String::new() };
    let Some(uri) = entry.uri.as_deref().map(decode) else { return String::new() };
    if depth > 8 || uri.contains(':') || uri.starts_with('/') {
        return String::new();
    }
    let parent = entry.uri_base_id.as_deref().map(|b| base_prefix(run, b, depth + 1)).unwrap_or_default();
    let mut prefix = format!("{parent}{uri}");
    if !prefix.is_empty() && !prefix.ends_with('/') {
        prefix.push('/');
    }
    prefix
}

/// Make an absolute path repository-relative by stripping the longest
/// matching absolute base URI.
fn strip_absolute_base(run: &Run, absolute: &str) -> Option<String> {
    let mut best: Option<&str> = None;
    for entry in run.original_uri_base_ids.values() {
        let Some(base) = entry.uri.as_deref().map(decode) else { continue };
        let Some(base_path) = file_uri_path(&base).or_else(|| base.starts_with('/').then(|| base.clone())) else {
            continue;
        };
        let base_path = base_path.trim_end_matches('/');
        if let Some(rest) = absolute.strip_prefix(base_path) {
            if rest.starts_with('/') && best.is_none_or(|b| rest.len() < b.len()) {
                best = Some(&absolute[absolute.len() - rest.len()..]);
            }
        }
    }
    Some(best.unwrap_or(absolute).to_owned())
}
