//! Unified diff parsing into pre-image (vulnerable commit) coordinates.
//!
//! A fix commit is described by its unified diff. The locations that matter
//! for matching alerts on the vulnerable commit are old-side line numbers:
//! every deleted line, plus one anchor line for each run of inserted lines
//! that has no deletion next to it.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::corpus::{FixDelta, FixDeltaError, Location};
use crate::path::{normalize_path, normalize_repo_path, PathError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiffError {
    #[error("line {line}: {message}")]
    DiffSyntax { line: usize, message: String },
    #[error("diff contains no file headers and no hunks")]
    EmptyDiff,
    #[error("line {line}: {source}")]
    Path {
        line: usize,
        #[source]
        source: PathError,
    },
    #[error(transparent)]
    Delta(#[from] FixDeltaError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HunkLine {
    Context(String),
    Delete(String),
    Insert(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub old_start: u32,
    pub old_count: u32,
    pub new_start: u32,
    pub new_count: u32,
    pub ops: Vec<HunkLine>,
}

impl Hunk {
    /// Old-side line number of the first line this hunk consumes.
    ///
    /// With an empty old range, git writes the line *after which* the
    /// insertion happens.
    pub fn first_old_line(&self) -> u32 {
        if self.old_count == 0 {
            self.old_start + 1
        } else {
            self.old_start
        }
    }

    /// Old-side locations touched by this hunk.
    pub fn old_locations(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut next_old = self.first_old_line();
        let mut i = 0;
        while i < self.ops.len() {
            match &self.ops[i] {
                HunkLine::Context(_) => {
                    next_old += 1;
                    i += 1;
                }
                HunkLine::Delete(_) => {
                    out.push(next_old);
                    next_old += 1;
                    i += 1;
                }
                HunkLine::Insert(_) => {
                    let start = i;
                    while i < self.ops.len() && matches!(self.ops[i], HunkLine::Insert(_)) {
                        i += 1;
                    }
                    let deletion_before = start > 0 && matches!(self.ops[start - 1], HunkLine::Delete(_));
                    let deletion_after = i < self.ops.len() && matches!(self.ops[i], HunkLine::Delete(_));
                    if !deletion_before && !deletion_after {
                        out.push(next_old.saturating_sub(1).max(1));
                    }
                }
            }
        }
        out
    }
}

/// One file section of a diff.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilePatch {
    /// `None` for newly created files.
    pub old_path: Option<String>,
    /// `None` for deleted files.
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
    pub binary: bool,
}

/// Parse a unified or git-extended diff into per-file patches.
pub fn parse_unified_diff(text: &str) -> Result<Vec<FilePatch>, DiffError> {
    Parser::new(text).run()
}

/// Parse the diff of a fix commit into its vulnerable-commit delta.
pub fn parse_fix_diff(text: &str) -> Result<FixDelta, DiffError> {
    let patches = parse_unified_diff(text)?;
    if patches.is_empty() {
        return Err(DiffError::EmptyDiff);
    }
    let mut by_file: BTreeMap<String, BTreeSet<u32>> = BTreeMap::new();
    for patch in &patches {
        let Some(old) = &patch.old_path else { continue };
        for hunk in &patch.hunks {
            let lines = hunk.old_locations();
            if !lines.is_empty() {
                by_file.entry(old.clone()).or_default().extend(lines);
            }
        }
    }
    let files = by_file.keys().cloned().collect();
    let locations = by_file
        .into_iter()
        .flat_map(|(file, lines)| lines.into_iter().map(move |line| Location::new(file.clone(), line)))
        .collect();
    Ok(FixDelta::new(files, locations)?)
}

struct Parser<'a> {
    lines: Vec<&'a str>,
    pos: usize,
    patches: Vec<FilePatch>,
    current: Option<FilePatch>,
    // Whether `current` already received a `---`/`+++` pair.
    current_has_markers: bool,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().collect(), pos: 0, patches: Vec::new(), current: None, current_has_markers: false }
    }

    fn syntax(&self, line: usize, message: impl Into<String>) -> DiffError {
        DiffError::DiffSyntax { line: line + 1, message: message.into() }
    }

    fn path(&self, line: usize, raw: &str) -> Result<String, DiffError> {
        normalize_path(raw).map_err(|source| DiffError::Path { line: line + 1, source })
    }

    fn repo_path(&self, line: usize, raw: &str) -> Result<String, DiffError> {
        normalize_repo_path(raw.trim()).map_err(|source| DiffError::Path { line: line + 1, source })
    }

    fn flush(&mut self) {
        if let Some(patch) = self.current.take() {
            self.patches.push(patch);
        }
        self.current_has_markers = false;
    }

    fn run(mut self) -> Result<Vec<FilePatch>, DiffError> {
        while self.pos < self.lines.len() {
            let idx = self.pos;
            let line = self.lines[idx];
            self.pos += 1;

            if let Some(rest) = line.strip_prefix("diff --git ") {
                self.flush();
                let (old, new) = split_git_header(rest);
                let old_path = old.map(|p| self.path(idx, &p)).transpose()?;
                let new_path = new.map(|p| self.path(idx, &p)).transpose()?;
                self.current = Some(FilePatch { old_path, new_path, ..FilePatch::default() });
                continue;
            }
            if line.starts_with("--- ") && self.lines.get(self.pos).is_some_and(|n| n.starts_with("+++ ")) {
                let starts_new = match &self.current {
                    None => true,
                    Some(p) => self.current_has_markers || !p.hunks.is_empty(),
                };
                if starts_new {
                    self.flush();
                    self.current = Some(FilePatch::default());
                }
                let old = marker_path(&line[4..]).map(|p| self.path(idx, p)).transpose()?;
                let next = self.lines[self.pos];
                let new = marker_path(&next[4..]).map(|p| self.path(idx + 1, p)).transpose()?;
                self.pos += 1;
                let patch = self.current.as_mut().expect("file patch started");
                patch.old_path = old;
                patch.new_path = new;
                self.current_has_markers = true;
                continue;
            }
            if line.starts_with("@@") {
                if self.current.is_none() {
                    return Err(self.syntax(idx, "hunk before any file header"));
                }
                let hunk = self.hunk(idx, line)?;
                self.current.as_mut().expect("checked above").hunks.push(hunk);
                continue;
            }
            if line == "-- " {
                // format-patch signature separator
                break;
            }
            if self.current.is_some() && self.extended_header(idx, line)? {
                continue;
            }
            if line.starts_with('\\') || line.trim().is_empty() {
                continue;
            }
            if self.current.is_some() && matches!(line.as_bytes()[0], b'+' | b'-' | b' ') {
                return Err(self.syntax(idx, "diff content outside of a hunk"));
            }
            // Anything else (commit message preamble, diffstat) is ignored.
        }
        self.flush();
        Ok(self.patches)
    }

    /// Handle git extended header lines. Returns whether the line was one.
    fn extended_header(&mut self, idx: usize, line: &str) -> Result<bool, DiffError> {
        if let Some(rest) = line.strip_prefix("rename from ").or_else(|| line.strip_prefix("copy from ")) {
            let p = self.repo_path(idx, rest)?;
            self.current.as_mut().expect("in file").old_path = Some(p);
            return Ok(true);
        }
        if let Some(rest) = line.strip_prefix("rename to ").or_else(|| line.strip_prefix("copy to ")) {
            let p = self.repo_path(idx, rest)?;
            self.current.as_mut().expect("in file").new_path = Some(p);
            return Ok(true);
        }
        if line.starts_with("new file mode") {
            self.current.as_mut().expect("in file").old_path = None;
            return Ok(true);
        }
        if line.starts_with("deleted file mode") {
            self.current.as_mut().expect("in file").new_path = None;
            return Ok(true);
        }
        if line.starts_with("Binary files ") {
            self.current.as_mut().expect("in file").binary = true;
            return Ok(true);
        }
        if line.starts_with("GIT binary patch") {
            self.current.as_mut().expect("in file").binary = true;
            while self.pos < self.lines.len() && !self.lines[self.pos].starts_with("diff --git ") {
                self.pos += 1;
            }
            return Ok(true);
        }
        const IGNORED: [&str; 6] =
            ["index ", "old mode ", "new mode ", "similarity index ", "dissimilarity index ", "mode "];
        Ok(IGNORED.iter().any(|p| line.starts_with(p)))
    }

    fn hunk(&mut self, idx: usize, header: &str) -> Result<Hunk, DiffError> {
        let (old_start, old_count, new_start, new_count) =
            parse_hunk_header(header).ok_or_else(|| self.syntax(idx, format!("malformed hunk header `{header}`")))?;
        if old_count > 0 && old_start == 0 {
            return Err(self.syntax(idx, "hunk old range starts at line 0"));
        }
        let mut ops = Vec::with_capacity((old_count + new_count) as usize);
        let (mut old_left, mut new_left) = (old_count, new_count);
        while old_left > 0 || new_left > 0 {
            let Some(&line) = self.lines.get(self.pos) else {
                return Err(self.syntax(self.pos, "hunk truncated before its declared line counts"));
            };
            let at = self.pos;
            self.pos += 1;
            let (tag, body) = match line.as_bytes().first() {
                None => (b' ', ""),
                Some(&b) => (b, &line[1..]),
            };
            match tag {
                b' ' if old_left > 0 && new_left > 0 => {
                    old_left -= 1;
                    new_left -= 1;
                    ops.push(HunkLine::Context(body.to_owned()));
                }
                b'-' if old_left > 0 => {
                    old_left -= 1;
                    ops.push(HunkLine::Delete(body.to_owned()));
                }
                b'+' if new_left > 0 => {
                    new_left -= 1;
                    ops.push(HunkLine::Insert(body.to_owned()));
                }
                b'\\' => {}
                _ => return Err(self.syntax(at, "hunk line inconsistent with declared counts")),
            }
        }
        Ok(Hunk { old_start, old_count, new_start, new_count, ops })
    }
}

/// `@@ -a[,b] +c[,d] @@ ...`
fn parse_hunk_header(line: &str) -> Option<(u32, u32, u32, u32)> {
    let rest = line.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let mut ranges = rest[..end].split(' ');
    let old = ranges.next()?.strip_prefix('-')?;
    let new = ranges.next()?.strip_prefix('+')?;
    if ranges.next().is_some() {
        return None;
    }
    let (os, oc) = parse_range(old)?;
    let (ns, nc) = parse_range(new)?;
    Some((os, oc, ns, nc))
}

fn parse_range(range: &str) -> Option<(u32, u32)> {
    match range.split_once(',') {
        Some((start, count)) => Some((start.parse().ok()?, count.parse().ok()?)),
        None => Some((range.parse().ok()?, 1)),
    }
}

/// Path of a `---`/`+++` marker, `None` for `/dev/null`.
fn marker_path(raw: &str) -> Option<&str> {
    let path = raw.split('\t').next().unwrap_or(raw).trim_end();
    (path != "/dev/null").then_some(path)
}

/// Best-effort split of `a/x b/y` from a `diff --git` line.
fn split_git_header(rest: &str) -> (Option<String>, Option<String>) {
    let rest = rest.trim_end();
    if let Some(quoted) = rest.strip_prefix('"') {
        if let Some(close) = quoted.find('"') {
            let first = &rest[..close + 2];
            let second = rest[close + 2..].trim_start();
            return (Some(first.to_owned()), Some(second.to_owned()));
        }
    }
    // Identical old and new names: the split point is the midpoint.
    if rest.len() % 2 == 1 {
        let mid = rest.len() / 2;
        let (a, b) = (&rest[..mid], &rest[mid + 1..]);
        if rest.as_bytes()[mid] == b' ' && a.get(2..) == b.get(2..) {
            return (Some(a.to_owned()), Some(b.to_owned()));
        }
    }
    match rest.rfind(" b/") {
        Some(pos) => (Some(rest[..pos].to_owned()), Some(rest[pos + 1..].to_owned())),
        None => (None, None),
    }
}
