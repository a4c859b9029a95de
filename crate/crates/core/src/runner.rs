//! Campaign execution: run an analyzer command for every missing
//! (CVE, commit, version) cell and record the results in the manifest.

use std::collections::{HashSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{CommitKind, Corpus, CorpusError, CveRecord, RunEntry, RunStatus, Suite};
use crate::sarifread::{parse_sarif, AlertSetMeta};

const ERROR_TAIL_BYTES: u64 = 2048;
const POLL_INTERVAL: Duration = Duration::from_millis(10);
const MAX_RETRIES: u32 = 10;

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("invalid campaign config: {0}")]
    ConfigInvalid(String),
    #[error("workdir {path} is not writable: {source}")]
    WorkdirUnwritable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub command_template: String,
    pub workdir: PathBuf,
    #[serde(default = "one")]
    pub max_parallel: usize,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    #[serde(default)]
    pub retry_limit: u32,
    #[serde(default)]
    pub suite: Suite,
    /// Directory holding one checkout per repo_id; `{repo_path}` expands to
    /// `<repo_root>/<repo_id>`.
    #[serde(default)]
    pub repo_root: Option<PathBuf>,
    /// Relative paths resolve against this directory; commands run in it.
    #[serde(skip, default = "dot")]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}
fn default_timeout() -> u64 {
    3600
}
fn dot() -> PathBuf {
    PathBuf::from(".")
}

impl CampaignConfig {
    pub fn new(command_template: impl Into<String>, workdir: impl Into<PathBuf>) -> Self {
        Self {
            command_template: command_template.into(),
            workdir: workdir.into(),
            max_parallel: one(),
            timeout_seconds: default_timeout(),
            retry_limit: 0,
            suite: Suite::default(),
            repo_root: None,
            base_dir: dot(),
        }
    }

    /// Load a `.toml` or JSON config. Relative paths are taken from the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| RunnerError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let mut config: CampaignConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| RunnerError::ConfigInvalid(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| RunnerError::ConfigInvalid(format!("{}: {e}", path.display())))?
        };
        config.base_dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_owned(),
            _ => dot(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let t = &self.command_template;
        if !t.contains("{output_sarif}") {
            return Err(RunnerError::ConfigInvalid("command_template lacks {output_sarif}".into()));
        }
        if !t.contains("{commit}") && !t.contains("{version}") {
            return Err(RunnerError::ConfigInvalid("command_template needs {commit} or {version}".into()));
        }
        if self.max_parallel == 0 {
            return Err(RunnerError::ConfigInvalid("max_parallel must be positive".into()));
        }
        if self.timeout_seconds == 0 {
            return Err(RunnerError::ConfigInvalid("timeout_seconds must be positive".into()));
        }
        if self.retry_limit > MAX_RETRIES {
            return Err(RunnerError::ConfigInvalid(format!("retry_limit above {MAX_RETRIES}")));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn workdir(&self) -> PathBuf {
        self.resolve(&self.workdir)
    }

    fn repo_path(&self, repo_id: &str) -> PathBuf {
        match &self.repo_root {
            Some(root) => self.resolve(root).join(repo_id),
            None => PathBuf::from(repo_id),
        }
    }
}

/// One analyzer execution.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cell {
    pub cve_id: String,
    pub commit_kind: CommitKind,
    pub version_id: String,
}

impl Cell {
    fn tag(&self) -> String {
        format!("{}_{}_{}", file_safe(&self.cve_id), file_safe(&self.version_id), short_kind(self.commit_kind))
    }
}

fn short_kind(kind: CommitKind) -> &'static str {
    match kind {
        CommitKind::Vulnerable => "vul",
        CommitKind::Fixed => "fix",
    }
}

fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || "-._".contains(c) { c } else { '_' }).collect()
}

/// Manifest-relative location where a cell's SARIF is kept.
pub fn canonical_sarif(cell: &Cell) -> String {
    format!("sarif/{}.sarif", cell.tag())
}

fn cell_cached(corpus: &Corpus, cve: &CveRecord, cell: &Cell) -> bool {
    if cve.run(&cell.version_id).is_some_and(RunEntry::is_ok) {
        return true;
    }
    corpus.resolve(&canonical_sarif(cell)).is_file()
}

/// Cells without a cached result, ordered by CVE, version ordinal, commit.
pub fn plan_campaign(corpus: &Corpus, _config: &CampaignConfig) -> Vec<Cell> {
    let mut plan = Vec::new();
    for cve in corpus.cves() {
        for version in corpus.versions() {
            for commit_kind in [CommitKind::Vulnerable, CommitKind::Fixed] {
                let cell = Cell { cve_id: cve.cve_id.clone(), commit_kind, version_id: version.id.clone() };
                if !cell_cached(corpus, cve, &cell) {
                    plan.push(cell);
                }
            }
        }
    }
    plan
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFailure {
    pub cell: Cell,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CampaignSummary {
    pub cells: usize,
    /// Process launches, counting retries.
    pub executions: usize,
    pub succeeded: usize,
    pub failures: Vec<CellFailure>,
}

impl CampaignSummary {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Job<'a> {
    cell: Cell,
    cve: &'a CveRecord,
}

struct Outcome {
    cell: Cell,
    attempts: usize,
    result: Result<PathBuf, String>,
}

struct Env<'a> {
    config: &'a CampaignConfig,
    workdir: PathBuf,
}

/// Run `plan` and fold each result into `corpus`, rewriting the manifest at
/// `manifest_path` after every cell.
pub fn execute(
    corpus: &mut Corpus,
    manifest_path: &Path,
    plan: &[Cell],
    config: &CampaignConfig,
) -> Result<CampaignSummary, RunnerError> {
    config.validate()?;
    let workdir = config.workdir();
    prepare_workdir(&workdir)?;
    let sarif_dir = corpus.resolve("sarif");
    fs::create_dir_all(&sarif_dir).map_err(|source| RunnerError::WorkdirUnwritable { path: sarif_dir, source })?;

    let snapshot = corpus.clone();
    let mut jobs = VecDeque::new();
    for cell in plan {
        let cve = snapshot
            .cve(&cell.cve_id)
            .ok_or_else(|| RunnerError::ConfigInvalid(format!("plan names unknown cve {}", cell.cve_id)))?;
        if snapshot.version(&cell.version_id).is_none() {
            return Err(RunnerError::ConfigInvalid(format!("plan names unknown version {}", cell.version_id)));
        }
        jobs.push_back(Job { cell: cell.clone(), cve });
    }
    let queue = Mutex::new(jobs);
    let env = Env { config, workdir };
    let mut summary = CampaignSummary { cells: plan.len(), ..Default::default() };
    let workers = config.max_parallel.min(plan.len()).max(1);

    thread::scope(|scope| -> Result<(), RunnerError> {
        let (tx, rx) = mpsc::channel::<Outcome>();
        for _ in 0..workers {
            let tx = tx.clone();
            let queue = &queue;
            let env = &env;
            let snapshot = &snapshot;
            scope.spawn(move || loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some(job) = job else { break };
                let outcome = run_cell(env, snapshot, &job);
                if tx.send(outcome).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: only this loop touches the corpus and manifest.
        for outcome in rx {
            summary.executions += outcome.attempts;
            record(corpus, config, &outcome)?;
            match outcome.result {
                Ok(_) => summary.succeeded += 1,
                Err(message) => {
                    log::warn!("{}: {}", outcome.cell.tag(), message.lines().next().unwrap_or_default());
                    summary.failures.push(CellFailure { cell: outcome.cell, message })
                }
            }
            corpus.write_manifest(manifest_path)?;
        }
        Ok(())
    })?;

    summary.failures.sort_by_key(|f| order_key(&snapshot, &f.cell));
    Ok(summary)
}

fn order_key(corpus: &Corpus, cell: &Cell) -> (usize, usize, CommitKind) {
    let cve = corpus.cves().iter().position(|c| c.cve_id == cell.cve_id).unwrap_or(usize::MAX);
    let ordinal = corpus.version(&cell.version_id).map_or(usize::MAX, |v| v.ordinal);
    (cve, ordinal, cell.commit_kind)
}

fn prepare_workdir(workdir: &Path) -> Result<(), RunnerError> {
    let unwritable = |source| RunnerError::WorkdirUnwritable { path: workdir.to_owned(), source };
    fs::create_dir_all(workdir.join("logs")).map_err(unwritable)?;
    fs::create_dir_all(workdir.join("tmp")).map_err(unwritable)?;
    let probe = workdir.join(".write-probe");
    File::create(&probe).and_then(|mut f| f.write_all(b"ok")).map_err(unwritable)?;
    fs::remove_file(&probe).map_err(unwritable)
}

fn record(corpus: &mut Corpus, config: &CampaignConfig, outcome: &Outcome) -> Result<(), RunnerError> {
    let cell = &outcome.cell;
    let entry = match &outcome.result {
        Err(message) => RunEntry {
            version_id: cell.version_id.clone(),
            status: RunStatus::AnalysisError,
            suite: config.suite,
            vulnerable_sarif: None,
            fixed_sarif: None,
            error: Some(message.clone()),
        },
        Ok(_) => {
            let partner = Cell {
                commit_kind: match cell.commit_kind {
                    CommitKind::Vulnerable => CommitKind::Fixed,
                    CommitKind::Fixed => CommitKind::Vulnerable,
                },
                ..cell.clone()
            };
            if !corpus.resolve(&canonical_sarif(&partner)).is_file() {
                return Ok(());
            }
            let (vul, fix) = match cell.commit_kind {
                CommitKind::Vulnerable => (cell.clone(), partner),
                CommitKind::Fixed => (partner, cell.clone()),
            };
            RunEntry {
                version_id: cell.version_id.clone(),
                status: RunStatus::Ok,
                suite: config.suite,
                vulnerable_sarif: Some(canonical_sarif(&vul)),
                fixed_sarif: Some(canonical_sarif(&fix)),
                error: None,
            }
        }
    };
    corpus.set_run(&cell.cve_id, entry)?;
    Ok(())
}

fn run_cell(env: &Env<'_>, corpus: &Corpus, job: &Job<'_>) -> Outcome {
    let cell = &job.cell;
    let tmp_sarif = env.workdir.join("tmp").join(format!("{}.sarif", cell.tag()));
    let log_path = env
        .workdir
        .join("logs")
        .join(file_safe(&cell.cve_id))
        .join(file_safe(&cell.version_id))
        .join(format!("{}.log", short_kind(cell.commit_kind)));
    let attempts_allowed = 1 + env.config.retry_limit as usize;
    let mut attempts = 0;
    let mut last_error = String::new();
    while attempts < attempts_allowed {
        attempts += 1;
        match attempt(env, job, &tmp_sarif, &log_path, attempts) {
            Ok(()) => {
                let dest = corpus.resolve(&canonical_sarif(cell));
                let result = move_file(&tmp_sarif, &dest).map(|_| dest).map_err(|e| format!("cannot store SARIF: {e}"));
                return Outcome { cell: cell.clone(), attempts, result };
            }
            Err(e) => last_error = e,
        }
    }
    Outcome { cell: cell.clone(), attempts, result: Err(last_error) }
}

fn attempt(env: &Env<'_>, job: &Job<'_>, tmp_sarif: &Path, log_path: &Path, number: usize) -> Result<(), String> {
    let cell = &job.cell;
    let config = env.config;
    let _ = fs::remove_file(tmp_sarif);
    fs::create_dir_all(log_path.parent().expect("log path has a parent")).map_err(|e| format!("log dir: {e}"))?;
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(number > 1)
        .truncate(number == 1)
        .open(log_path)
        .map_err(|e| format!("cannot open log {}: {e}", log_path.display()))?;
    let start_of_attempt = log.seek(SeekFrom::End(0)).unwrap_or(0);

    let commit = job.cve.commit(cell.commit_kind);
    let repo_path = config.repo_path(&job.cve.repo_id);
    let suite = config.suite.as_str();
    let output = absolute(tmp_sarif);
    let command = substitute(
        &config.command_template,
        &[
            ("repo_path", &repo_path.to_string_lossy()),
            ("commit", commit),
            ("version", &cell.version_id),
            ("suite", suite),
            ("output_sarif", &output.to_string_lossy()),
        ],
    );
    let _ = writeln!(log, "# attempt {number}: {command}");
    let stdout = log.try_clone().map_err(|e| format!("log handle: {e}"))?;
    let stderr = log.try_clone().map_err(|e| format!("log handle: {e}"))?;

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .current_dir(&config.base_dir)
        .env("CELL_CVE_ID", &cell.cve_id)
        .env("CELL_COMMIT", commit)
        .env("CELL_COMMIT_KIND", cell.commit_kind.as_str())
        .env("CELL_VERSION", &cell.version_id)
        .env("CELL_SUITE", suite)
        .env("CELL_REPO_PATH", &repo_path)
        .env("CELL_OUTPUT_SARIF", &output)
        .stdin(Stdio::null())
        .stdout(stdout)
        .stderr(stderr)
        .process_group(0)
        .spawn()
        .map_err(|e| format!("cannot spawn sh: {e}"))?;

    let deadline = Instant::now() + Duration::from_secs(config.timeout_seconds);
    let status: Option<ExitStatus> = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if Instant::now() >= deadline => {
                kill_group(child.id());
                let _ = child.wait();
                break None;
            }
            Ok(None) => thread::sleep(POLL_INTERVAL),
            Err(e) => return Err(format!("wait failed: {e}")),
        }
    };
    let failure = match status {
        None => Some(format!("timeout after {}s", config.timeout_seconds)),
        Some(s) if !s.success() => Some(format!("command failed with {s}")),
        Some(_) => match fs::read_to_string(tmp_sarif) {
            Err(e) => Some(format!("no SARIF at {}: {e}", tmp_sarif.display())),
            Ok(doc) => {
                let meta = AlertSetMeta {
                    cve_id: cell.cve_id.clone(),
                    version_id: cell.version_id.clone(),
                    commit_kind: cell.commit_kind,
                    suite: config.suite,
                };
                parse_sarif(&doc, meta).err().map(|e| format!("unusable SARIF: {e}"))
            }
        },
    };
    match failure {
        None => Ok(()),
        Some(reason) => {
            let tail = log_tail(log_path, start_of_attempt);
            let _ = writeln!(log, "# {reason}");
            Err(if tail.is_empty() { reason } else { format!("{reason}\n{tail}") })
        }
    }
}

fn kill_group(pid: u32) {
    // SAFETY: signalling our own child's process group.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

fn log_tail(path: &Path, from: u64) -> String {
    let Ok(mut file) = File::open(path) else { return String::new() };
    let len = file.metadata().map(|m| m.len()).unwrap_or(0);
    let start = from.max(len.saturating_sub(ERROR_TAIL_BYTES));
    let mut buf = Vec::new();
    if file.seek(SeekFrom::Start(start)).is_err() || file.read_to_end(&mut buf).is_err() {
        return String::new();
    }
    String::from_utf8_lossy(&buf).trim_end().to_owned()
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_owned())
}

fn move_file(from: &Path, to: &Path) -> io::Result<()> {
    if let Some(dir) = to.parent() {
        fs::create_dir_all(dir)?;
    }
    let staged = to.with_extension("sarif.part");
    if fs::rename(from, &staged).is_err() {
        fs::copy(from, &staged)?;
        fs::remove_file(from)?;
    }
    fs::rename(staged, to)
}

/// Single-quote a value for `sh`.
pub fn shell_quote(value: &str) -> String {
    format!("'{}'", value.replace('\'', r"'\''"))
}

/// Replace each `{name}` with the quoted value; unknown braces stay as is.
pub fn substitute(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values.iter().find(|(k, _)| *k == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(&shell_quote(value));
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Cells of `plan` still lacking a result after a (possibly interrupted)
/// campaign, for progress reporting.
pub fn remaining<'a>(corpus: &Corpus, plan: &'a [Cell]) -> Vec<&'a Cell> {
    let done: HashSet<&Cell> =
        plan.iter().filter(|c| corpus.cve(&c.cve_id).is_some_and(|cve| cell_cached(corpus, cve, c))).collect();
    plan.iter().filter(|c| !done.contains(c)).collect()
}
