//! Evaluation corpus: analyzer version catalog, CVE records and the file
//! layout that binds each (CVE, version) run to its pair of SARIF documents.
//!
//! The corpus is described by one JSON manifest. Every path inside it is
//! relative to the manifest's directory.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffparse::{parse_fix_diff, DiffError};
use crate::path::normalize_repo_path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed manifest {path}: {message}")]
    ManifestSyntax { path: PathBuf, message: String },
    #[error("invalid manifest entry {record}: {message}")]
    ManifestSemantic { record: String, message: String },
    #[error("missing file {path} (declared by {record})")]
    MissingFile { path: PathBuf, record: String },
    #[error("cannot parse version `{0}`")]
    VersionParse(String),
    #[error("fix diff of {record}: {source}")]
    FixDiff {
        record: String,
        #[source]
        source: DiffError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn semantic(record: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::ManifestSemantic { record: record.into(), message: message.into() }
}

// ---------------------------------------------------------------------------
// Versions
// ---------------------------------------------------------------------------

/// Numeric `major.minor.patch` ordering key; a missing patch is 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VersionKey {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

impl VersionKey {
    pub fn parse(id: &str) -> Result<Self, CorpusError> {
        let bare = strip_version_prefix(id);
        let parts: Vec<&str> = bare.split('.').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(CorpusError::VersionParse(id.to_owned()));
        }
        let mut nums = [0u64; 3];
        for (slot, part) in nums.iter_mut().zip(&parts) {
            if part.is_empty() || !part.bytes().all(|b| b.is_ascii_digit()) {
                return Err(CorpusError::VersionParse(id.to_owned()));
            }
            *slot = part.parse().map_err(|_| CorpusError::VersionParse(id.to_owned()))?;
        }
        Ok(Self { major: nums[0], minor: nums[1], patch: nums[2] })
    }

    /// `X.Y.0` releases.
    pub fn is_minor(&self) -> bool {
        self.patch == 0
    }
}

impl fmt::Display for VersionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

/// Drop a leading `v`/`V`.
pub fn strip_version_prefix(id: &str) -> &str {
    id.strip_prefix(['v', 'V']).unwrap_or(id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionInfo {
    pub id: String,
    pub release_date: NaiveDate,
    pub ordinal: usize,
}

impl VersionInfo {
    pub fn new(id: impl Into<String>, release_date: NaiveDate) -> Self {
        let id = id.into();
        Self { id: strip_version_prefix(&id).to_owned(), release_date, ordinal: 0 }
    }

    pub fn key(&self) -> Result<VersionKey, CorpusError> {
        VersionKey::parse(&self.id)
    }

    pub fn is_minor(&self) -> bool {
        self.key().map(|k| k.is_minor()).unwrap_or(false)
    }
}

/// Sort a catalog by numeric version and assign 0-based ordinals.
pub fn order_versions(catalog: Vec<VersionInfo>) -> Result<Vec<VersionInfo>, CorpusError> {
    let mut keyed = catalog
        .into_iter()
        .map(|mut v| {
            v.id = strip_version_prefix(&v.id).to_owned();
            v.key().map(|k| (k, v))
        })
        .collect::<Result<Vec<_>, _>>()?;
    keyed.sort_by(|(ka, a), (kb, b)| ka.cmp(kb).then_with(|| a.id.cmp(&b.id)));
    Ok(keyed.into_iter().enumerate().map(|(ordinal, (_, v))| VersionInfo { ordinal, ..v }).collect())
}

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.to_ascii_lowercase().as_str() {
                    $($text $(| $alias)* => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{}`", stringify!($name), other)),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Language {
    CCpp,
    Go,
    Java,
    Javascript,
    Python,
    Ruby,
    Other,
}

string_enum!(Language {
    CCpp => "c_cpp" | "c" | "cpp" | "c++",
    Go => "go",
    Java => "java",
    Javascript => "javascript" | "js" | "typescript",
    Python => "python",
    Ruby => "ruby",
    Other => "other",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Severity {
    Low,
    Medium,
    High,
    Critical,
    #[default]
    Unknown,
}

string_enum!(Severity {
    Low => "low",
    Medium => "medium",
    High => "high",
    Critical => "critical",
    Unknown => "unknown",
});

/// Query suite an analysis ran with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Suite {
    Default,
    #[default]
    SecurityExtended,
}

string_enum!(Suite {
    Default => "default" | "code-scanning" | "code_scanning",
    SecurityExtended => "security_extended" | "security-extended",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RunStatus {
    Ok,
    AnalysisError,
}

string_enum!(RunStatus {
    Ok => "ok",
    AnalysisError => "analysis_error",
});

/// Which side of the fix an analysis ran on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CommitKind {
    Vulnerable,
    Fixed,
}

string_enum!(CommitKind {
    Vulnerable => "vulnerable" | "vul",
    Fixed => "fixed" | "fix",
});

// ---------------------------------------------------------------------------
// Fix delta
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub file: String,
    pub line: u32,
}

impl Location {
    pub fn new(file: impl Into<String>, line: u32) -> Self {
        Self { file: file.into(), line }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FixDeltaError {
    #[error("location {0}:{1} names a file outside the delta's file set")]
    LocationOutsideFiles(String, u32),
    #[error("location {0} has line 0")]
    ZeroLine(String),
    #[error("path `{0}` is not normalized")]
    NotNormalized(String),
}

/// Files and old-side lines a fix commit touches.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixDelta {
    files: BTreeSet<String>,
    locations: BTreeSet<Location>,
}

impl FixDelta {
    pub fn new(files: BTreeSet<String>, locations: BTreeSet<Location>) -> Result<Self, FixDeltaError> {
        for f in &files {
            if normalize_repo_path(f).ok().as_deref() != Some(f.as_str()) {
                return Err(FixDeltaError::NotNormalized(f.clone()));
            }
        }
        for loc in &locations {
            if loc.line == 0 {
                return Err(FixDeltaError::ZeroLine(loc.file.clone()));
            }
            if !files.contains(&loc.file) {
                return Err(FixDeltaError::LocationOutsideFiles(loc.file.clone(), loc.line));
            }
        }
        Ok(Self { files, locations })
    }

    pub fn files(&self) -> &BTreeSet<String> {
        &self.files
    }

    pub fn locations(&self) -> &BTreeSet<Location> {
        &self.locations
    }

    pub fn contains_file(&self, file: &str) -> bool {
        self.files.contains(file)
    }

    pub fn contains(&self, file: &str, line: u32) -> bool {
        self.locations.contains(&Location { file: file.to_owned(), line })
    }

    /// Vulnerable lines of one file.
    pub fn lines_in<'a>(&'a self, file: &'a str) -> impl Iterator<Item = u32> + 'a {
        self.locations.range(Location::new(file, 0)..).take_while(move |l| l.file == file).map(|l| l.line)
    }
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEntry {
    pub version_id: String,
    pub status: RunStatus,
    #[serde(default)]
    pub suite: Suite,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vulnerable_sarif: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_sarif: Option<String>,
    /// Tail of the analyzer output for failed runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunEntry {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn sarif_path(&self, kind: CommitKind) -> Option<&str> {
        match kind {
            CommitKind::Vulnerable => self.vulnerable_sarif.as_deref(),
            CommitKind::Fixed => self.fixed_sarif.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CveRecord {
    pub cve_id: String,
    pub repo_id: String,
    pub language: Language,
    pub cwes: Vec<String>,
    pub severity: Severity,
    pub fix_date: NaiveDate,
    pub vulnerable_commit: String,
    pub fix_commit: String,
    /// Manifest-relative path of the fix diff.
    pub fix_diff: String,
    pub fix_delta: FixDelta,
    /// Ordered by version ordinal.
    pub runs: Vec<RunEntry>,
    /// Pass-through lifecycle dates; never used in computations.
    pub introduced_date: Option<NaiveDate>,
    pub disclosed_date: Option<NaiveDate>,
    pub published_date: Option<NaiveDate>,
}

impl CveRecord {
    pub fn run(&self, version_id: &str) -> Option<&RunEntry> {
        self.runs.iter().find(|r| r.version_id == version_id)
    }

    pub fn commit(&self, kind: CommitKind) -> &str {
        match kind {
            CommitKind::Vulnerable => &self.vulnerable_commit,
            CommitKind::Fixed => &self.fix_commit,
        }
    }
}

/// A loaded, validated corpus. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    root: PathBuf,
    versions: Vec<VersionInfo>,
    cves: Vec<CveRecord>,
}

impl Corpus {
    /// Validate and assemble a corpus in memory.
    pub fn new(
        root: impl Into<PathBuf>,
        versions: Vec<VersionInfo>,
        cves: Vec<CveRecord>,
    ) -> Result<Self, CorpusError> {
        let root = root.into();
        let versions = validate_catalog(versions)?;
        let mut corpus = Self { root, versions, cves: Vec::with_capacity(cves.len()) };
        let mut seen = HashSet::new();
        for mut cve in cves {
            if !seen.insert(cve.cve_id.clone()) {
                return Err(semantic(&cve.cve_id, "duplicate cve_id"));
            }
            corpus.validate_cve(&mut cve)?;
            corpus.cves.push(cve);
        }
        Ok(corpus)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn versions(&self) -> &[VersionInfo] {
        &self.versions
    }

    pub fn cves(&self) -> &[CveRecord] {
        &self.cves
    }

    pub fn version(&self, id: &str) -> Option<&VersionInfo> {
        let id = strip_version_prefix(id);
        self.versions.iter().find(|v| v.id == id)
    }

    pub fn cve(&self, id: &str) -> Option<&CveRecord> {
        self.cves.iter().find(|c| c.cve_id == id)
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    /// Replace (or insert) the run entry of one CVE at one version.
    pub fn set_run(&mut self, cve_id: &str, run: RunEntry) -> Result<(), CorpusError> {
        let ordinals: HashMap<&str, usize> = self.versions.iter().map(|v| (v.id.as_str(), v.ordinal)).collect();
        let Some(&ordinal) = ordinals.get(run.version_id.as_str()) else {
            return Err(semantic(cve_id, format!("unknown version `{}`", run.version_id)));
        };
        let cve = self.cves.iter_mut().find(|c| c.cve_id == cve_id).ok_or_else(|| semantic(cve_id, "unknown cve"))?;
        cve.runs.retain(|r| r.version_id != run.version_id);
        let at = cve
            .runs
            .iter()
            .position(|r| ordinals.get(r.version_id.as_str()).is_some_and(|&o| o > ordinal))
            .unwrap_or(cve.runs.len());
        cve.runs.insert(at, run);
        Ok(())
    }

    fn validate_cve(&self, cve: &mut CveRecord) -> Result<(), CorpusError> {
        let record = cve.cve_id.as_str();
        if record.trim().is_empty() {
            return Err(semantic("<cve>", "empty cve_id"));
        }
        if cve.repo_id.trim().is_empty() {
            return Err(semantic(record, "empty repo_id"));
        }
        if cve.vulnerable_commit.is_empty() || cve.fix_commit.is_empty() {
            return Err(semantic(record, "empty commit hash"));
        }
        if cve.vulnerable_commit == cve.fix_commit {
            return Err(semantic(record, "vulnerable_commit equals fix_commit"));
        }
        let mut seen = HashSet::new();
        for run in &mut cve.runs {
            run.version_id = strip_version_prefix(&run.version_id).to_owned();
            let run_record = format!("{record} run {}", run.version_id);
            if self.version(&run.version_id).is_none() {
                return Err(semantic(run_record, "version not in catalog"));
            }
            if !seen.insert(run.version_id.clone()) {
                return Err(semantic(run_record, "version appears more than once among runs"));
            }
            match run.status {
                RunStatus::Ok => {
                    for kind in [CommitKind::Vulnerable, CommitKind::Fixed] {
                        let Some(rel) = run.sarif_path(kind) else {
                            return Err(semantic(&run_record, format!("ok run lacks {kind} SARIF path")));
                        };
                        let path = self.resolve(rel);
                        if !path.is_file() {
                            return Err(CorpusError::MissingFile { path, record: run_record.clone() });
                        }
                    }
                }
                RunStatus::AnalysisError => {
                    if run.vulnerable_sarif.is_some() || run.fixed_sarif.is_some() {
                        return Err(semantic(run_record, "analysis_error run carries SARIF paths"));
                    }
                }
            }
        }
        let ordinal = |id: &str| self.version(id).map(|v| v.ordinal).unwrap_or(usize::MAX);
        cve.runs.sort_by_key(|r| ordinal(&r.version_id));
        Ok(())
    }
}

fn validate_catalog(versions: Vec<VersionInfo>) -> Result<Vec<VersionInfo>, CorpusError> {
    let mut keys = HashSet::new();
    for v in &versions {
        let key = VersionKey::parse(&v.id)
            .map_err(|_| semantic(format!("version {}", v.id), "not a dotted numeric version"))?;
        if !keys.insert(key) {
            return Err(semantic(format!("version {}", v.id), "duplicate version id"));
        }
    }
    let ordered = order_versions(versions)?;
    for pair in ordered.windows(2) {
        if pair[1].release_date < pair[0].release_date {
            return Err(semantic(
                format!("version {}", pair[1].id),
                format!("released {} before preceding version {}", pair[1].release_date, pair[0].id),
            ));
        }
    }
    Ok(ordered)
}

// ---------------------------------------------------------------------------
// Manifest document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub versions: Vec<ManifestVersion>,
    #[serde(default)]
    pub cves: Vec<ManifestCve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVersion {
    pub id: String,
    pub release_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestCve {
    pub cve_id: String,
    pub repo_id: String,
    pub language: Language,
    #[serde(default)]
    pub cwes: Vec<String>,
    #[serde(default)]
    pub severity: Severity,
    pub fix_date: NaiveDate,
    pub vulnerable_commit: String,
    pub fix_commit: String,
    pub fix_diff: String,
    #[serde(default)]
    pub runs: Vec<RunEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub introduced_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disclosed_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_date: Option<NaiveDate>,
}

/// Read, parse and validate a manifest and every file it references.
pub fn load_corpus(manifest_path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile { path: manifest_path.to_owned(), record: "<manifest>".into() }
        } else {
            CorpusError::Io { path: manifest_path.to_owned(), source }
        }
    })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CorpusError::ManifestSyntax { path: manifest_path.to_owned(), message: e.to_string() })?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    Corpus::from_manifest(manifest, root)
}

impl Corpus {
    pub fn from_manifest(manifest: Manifest, root: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let root = root.into();
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(semantic("<manifest>", format!("unsupported schema_version {}", manifest.schema_version)));
        }
        let versions = manifest.versions.into_iter().map(|v| VersionInfo::new(v.id, v.release_date)).collect();
        let mut deltas: HashMap<String, FixDelta> = HashMap::new();
        let mut cves = Vec::with_capacity(manifest.cves.len());
        for c in manifest.cves {
            let fix_delta = match deltas.get(&c.fix_diff) {
                Some(d) => d.clone(),
                None => {
                    let path = root.join(&c.fix_diff);
                    let text = fs::read_to_string(&path)
                        .map_err(|_| CorpusError::MissingFile { path: path.clone(), record: c.cve_id.clone() })?;
                    let delta = parse_fix_diff(&text)
                        .map_err(|source| CorpusError::FixDiff { record: c.cve_id.clone(), source })?;
                    deltas.insert(c.fix_diff.clone(), delta.clone());
                    delta
                }
            };
            cves.push(CveRecord {
                cve_id: c.cve_id,
                repo_id: c.repo_id,
                language: c.language,
                cwes: c.cwes,
                severity: c.severity,
                fix_date: c.fix_date,
                vulnerable_commit: c.vulnerable_commit,
                fix_commit: c.fix_commit,
                fix_diff: c.fix_diff,
                fix_delta,
                runs: c.runs,
                introduced_date: c.introduced_date,
                disclosed_date: c.disclosed_date,
                published_date: c.published_date,
            });
        }
        Corpus::new(root, versions, cves)
    }

    pub fn to_manifest(&self) -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION,
            versions: self
                .versions
                .iter()
                .map(|v| ManifestVersion { id: v.id.clone(), release_date: v.release_date })
                .collect(),
            cves: self
                .cves
                .iter()
                .map(|c| ManifestCve {
                    cve_id: c.cve_id.clone(),
                    repo_id: c.repo_id.clone(),
                    language: c.language,
                    cwes: c.cwes.clone(),
                    severity: c.severity,
                    fix_date: c.fix_date,
                    vulnerable_commit: c.vulnerable_commit.clone(),
                    fix_commit: c.fix_commit.clone(),
                    fix_diff: c.fix_diff.clone(),
                    runs: c.runs.clone(),
                    introduced_date: c.introduced_date,
                    disclosed_date: c.disclosed_date,
                    published_date: c.published_date,
                })
                .collect(),
        }
    }

    /// Write the manifest next to `path` and atomically rename it into place.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let mut body = serde_json::to_string_pretty(&self.to_manifest()).expect("manifest serializes");
        body.push('\n');
        let tmp = path.with_extension("json.tmp");
        let io = |source| CorpusError::Io { path: tmp.clone(), source };
        {
            let mut file = fs::File::create(&tmp).map_err(io)?;
            file.write_all(body.as_bytes()).map_err(io)?;
            file.sync_all().map_err(io)?;
        }
        fs::rename(&tmp, path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })
    }
}
