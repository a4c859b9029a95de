//! Generators and brute-force oracles shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sastline_core::corpus::{CommitKind, FixDelta, Language, Location, Severity, Suite};
use sastline_core::detection::LeadTimeResult;
use sastline_core::diffparse::{FilePatch, HunkLine};
use sastline_core::report::CveSummary;
use sastline_core::sarifread::{Alert, AlertSet, AlertSetMeta, LineRange, Precision};
use sastline_core::stability::{PointState, StabilityTimeline, TimelinePoint};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const FILES: [&str; 7] = ["a.c", "src/b.c", "src/x/c.c", "src/x/d.h", "lib/e.js", "lib/y/z/f.js", "g.py"];
const QUERIES: [&str; 3] = ["q/one", "q/two", "q/three"];
const MAX_LINE: u32 = 30;

pub fn alert_set(kind: CommitKind, alerts: Vec<Alert>) -> AlertSet {
    let mut set = AlertSet::empty(AlertSetMeta {
        cve_id: "CVE-0000-0001".into(),
        version_id: "2.0.0".into(),
        commit_kind: kind,
        suite: Suite::Default,
    });
    set.alerts = alerts;
    set
}

pub fn alert(query: &str, file: &str, start: u32, end: u32, fingerprints: &[(&str, &str)]) -> Alert {
    Alert {
        query: query.into(),
        file: file.into(),
        lines: LineRange::new(start, end),
        fingerprints: fingerprints.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        version_id: "2.0.0".into(),
        precision: Precision::Unknown,
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub delta: FixDelta,
    pub vul: AlertSet,
    pub fix: AlertSet,
}

fn random_fingerprints(rng: &mut ChaCha8Rng) -> BTreeMap<String, String> {
    let mut fp = BTreeMap::new();
    for key in ["primaryLocationLineHash", "other"] {
        if rng.gen_bool(0.4) {
            fp.insert(key.to_owned(), format!("h{}", rng.gen_range(0..3)));
        }
    }
    fp
}

pub fn random_alert(rng: &mut ChaCha8Rng, files: &[&str]) -> Alert {
    let start = rng.gen_range(1..=MAX_LINE);
    let end = start + rng.gen_range(0..4);
    Alert {
        query: QUERIES.choose(rng).unwrap().to_string(),
        file: files.choose(rng).unwrap().to_string(),
        lines: LineRange::new(start, end),
        fingerprints: random_fingerprints(rng),
        version_id: "2.0.0".into(),
        precision: Precision::Unknown,
    }
}

/// At most 5 files, 10 alerts per commit and 10 fix lines.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let mut pool = FILES.to_vec();
    pool.shuffle(rng);
    pool.truncate(rng.gen_range(1..=5));
    let fix_files = &pool[..rng.gen_range(1..=pool.len())];

    let mut locations = BTreeSet::new();
    for _ in 0..rng.gen_range(1..=10) {
        locations.insert(Location::new(*fix_files.choose(rng).unwrap(), rng.gen_range(1..=MAX_LINE)));
    }
    let files = locations.iter().map(|l| l.file.clone()).collect();
    let delta = FixDelta::new(files, locations).unwrap();

    let vul: Vec<Alert> = (0..rng.gen_range(0..=10)).map(|_| random_alert(rng, &pool)).collect();
    let mut fix = Vec::new();
    for _ in 0..rng.gen_range(0..=10) {
        // Often a shifted copy of a vulnerable alert, so survival gets exercised.
        if !vul.is_empty() && rng.gen_bool(0.6) {
            let mut a = vul.choose(rng).unwrap().clone();
            let shift = rng.gen_range(0..5);
            a.lines = LineRange::new(a.lines.start + shift, a.lines.end + shift);
            if rng.gen_bool(0.3) {
                a.fingerprints = random_fingerprints(rng);
            }
            if rng.gen_bool(0.2) {
                a.file = pool.choose(rng).unwrap().to_string();
            }
            fix.push(a);
        } else {
            fix.push(random_alert(rng, &pool));
        }
    }
    Instance { delta, vul: alert_set(CommitKind::Vulnerable, vul), fix: alert_set(CommitKind::Fixed, fix) }
}

/// Location heuristic by enumerating every covered line.
pub fn oracle_at_fix(alert: &Alert, delta: &FixDelta) -> bool {
    (alert.lines.start..=alert.lines.end)
        .any(|line| delta.locations().iter().any(|l| l.file == alert.file && l.line == line))
}

/// Removal heuristic, spelled out case by case.
pub fn oracle_survives(alert: &Alert, fix: &AlertSet) -> bool {
    fix.alerts.iter().any(|b| {
        if b.query != alert.query {
            return false;
        }
        let common: Vec<&String> = alert.fingerprints.keys().filter(|k| b.fingerprints.contains_key(*k)).collect();
        if common.is_empty() {
            b.file == alert.file
        } else {
            common.iter().any(|k| alert.fingerprints[*k] == b.fingerprints[*k])
        }
    })
}

pub fn oracle_detect(inst: &Instance) -> bool {
    inst.vul.alerts.iter().any(|a| oracle_at_fix(a, &inst.delta) && !oracle_survives(a, &inst.fix))
}

pub fn oracle_location_only(inst: &Instance) -> bool {
    inst.vul.alerts.iter().any(|a| oracle_at_fix(a, &inst.delta))
}

// ---------------------------------------------------------------------------
// Unified diffs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DiffCase {
    pub path: String,
    pub pre: Vec<String>,
    pub post: Vec<String>,
    pub text: String,
    /// Old-side locations computed from the edit script.
    pub expected_locations: BTreeSet<u32>,
}

#[derive(Clone, Copy, PartialEq)]
enum Op {
    Keep,
    Del,
    Ins,
}

/// A random single-file diff with 1 to 4 hunks.
pub fn random_diff(rng: &mut ChaCha8Rng) -> DiffCase {
    let path = FILES.choose(rng).unwrap().to_string();
    let n = rng.gen_range(0..40usize);
    let pre: Vec<String> = (1..=n).map(|i| format!("line {i} {}", rng.gen_range(0..1000))).collect();
    let mut post = Vec::new();
    let mut body = String::new();
    let mut expected = BTreeSet::new();
    let mut old = 0usize; // old lines consumed so far
    let mut offset: i64 = 0;
    let mut fresh = 0;
    let hunks = rng.gen_range(1..=4);
    for h in 0..hunks {
        let remaining = n - old;
        let gap = if remaining == 0 { 0 } else { rng.gen_range(0..=remaining.min(6)) };
        post.extend(pre[old..old + gap].iter().cloned());
        old += gap;
        let span = if n - old == 0 { 0 } else { rng.gen_range(0..=(n - old).min(8)) };
        let mut ops = Vec::new();
        for _ in 0..span {
            ops.push(if rng.gen_bool(0.5) { Op::Keep } else { Op::Del });
        }
        for _ in 0..rng.gen_range(0..=3) {
            let at = rng.gen_range(0..=ops.len());
            ops.insert(at, Op::Ins);
        }
        if !ops.iter().any(|o| *o != Op::Keep) {
            ops.push(Op::Ins);
        }
        let old_count = ops.iter().filter(|o| **o != Op::Ins).count();
        let new_count = ops.iter().filter(|o| **o != Op::Del).count();
        let old_start = if old_count == 0 { old } else { old + 1 };
        let new_start_base = (old as i64 + offset) as usize;
        let new_start = if new_count == 0 { new_start_base } else { new_start_base + 1 };
        body.push_str(&format!("@@ -{old_start},{old_count} +{new_start},{new_count} @@ hunk {h}\n"));

        // Expected anchors, from the script: deletions, plus insertion runs
        // not adjacent to a deletion anchored at the old line before them.
        let mut cursor = old;
        let mut i = 0;
        while i < ops.len() {
            match ops[i] {
                Op::Keep => {
                    body.push_str(&format!(" {}\n", pre[cursor]));
                    post.push(pre[cursor].clone());
                    cursor += 1;
                    i += 1;
                }
                Op::Del => {
                    body.push_str(&format!("-{}\n", pre[cursor]));
                    expected.insert(cursor as u32 + 1);
                    cursor += 1;
                    i += 1;
                }
                Op::Ins => {
                    let run_start = i;
                    while i < ops.len() && ops[i] == Op::Ins {
                        fresh += 1;
                        let line = format!("new {fresh}");
                        body.push_str(&format!("+{line}\n"));
                        post.push(line);
                        i += 1;
                    }
                    let before = run_start > 0 && ops[run_start - 1] == Op::Del;
                    let after = i < ops.len() && ops[i] == Op::Del;
                    if !before && !after {
                        expected.insert((cursor as u32).max(1));
                    }
                }
            }
        }
        old = cursor;
        offset += new_count as i64 - old_count as i64;
        if old == n && h + 1 < hunks {
            break;
        }
    }
    post.extend(pre[old..].iter().cloned());
    let text =
        format!("diff --git a/{path} b/{path}\nindex 1111111..2222222 100644\n--- a/{path}\n+++ b/{path}\n{body}");
    DiffCase { path, pre, post, text, expected_locations: expected }
}

/// Apply a parsed patch to `pre`, checking context and deleted lines.
pub fn replay(pre: &[String], patch: &FilePatch) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut next = 0usize; // index into pre
    for hunk in &patch.hunks {
        let first = hunk.first_old_line() as usize - 1;
        if first < next || first > pre.len() {
            return Err(format!("hunk at {} out of order", hunk.old_start));
        }
        out.extend(pre[next..first].iter().cloned());
        next = first;
        for op in &hunk.ops {
            match op {
                HunkLine::Context(s) | HunkLine::Delete(s) => {
                    if pre.get(next) != Some(s) {
                        return Err(format!("mismatch at old line {}", next + 1));
                    }
                    if matches!(op, HunkLine::Context(_)) {
                        out.push(s.clone());
                    }
                    next += 1;
                }
                HunkLine::Insert(s) => out.push(s.clone()),
            }
        }
    }
    out.extend(pre[next..].iter().cloned());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Timelines
// ---------------------------------------------------------------------------

pub fn timeline(states: &[Option<bool>]) -> StabilityTimeline {
    let points = states
        .iter()
        .enumerate()
        .map(|(i, s)| TimelinePoint {
            ordinal: i,
            version_id: format!("2.{i}.0"),
            state: match s {
                Some(true) => PointState::Detected,
                Some(false) => PointState::NotDetected,
                None => PointState::Unobserved,
            },
        })
        .collect();
    StabilityTimeline::from_points("CVE-0000-0001", points)
}

pub fn random_states(rng: &mut ChaCha8Rng) -> Vec<Option<bool>> {
    let len = rng.gen_range(1..=50);
    (0..len)
        .map(|_| match rng.gen_range(0..5) {
            0 => None,
            1 | 2 => Some(true),
            _ => Some(false),
        })
        .collect()
}

/// Events as (kind, index of the later point).
pub fn events(t: &StabilityTimeline) -> Vec<(char, usize)> {
    let index = |v: &str| t.points.iter().position(|p| p.version_id == v).unwrap();
    let mut ev: Vec<(char, usize)> = t
        .drops
        .iter()
        .map(|d| ('d', index(&d.to_version)))
        .chain(t.recoveries.iter().map(|r| ('r', index(&r.to_version))))
        .collect();
    ev.sort_by_key(|e| e.1);
    ev
}

/// Prefix restriction never invents events and keeps the drop/recovery
/// alternation. Returns a description of the first violation.
pub fn check_timeline(states: &[Option<bool>]) -> Result<(), String> {
    let full = timeline(states);
    let full_events = events(&full);
    for k in 1..=states.len() {
        let prefix = timeline(&states[..k]);
        let expected: Vec<_> = full_events.iter().copied().filter(|e| e.1 < k).collect();
        if events(&prefix) != expected {
            return Err(format!("prefix {k} of {states:?}"));
        }
    }
    // Events never span a gap, so alternation holds within each run of
    // consecutive observed points.
    let mut segment_start = 0;
    for (i, s) in states.iter().enumerate().chain([(states.len(), &None)]) {
        if s.is_some() {
            continue;
        }
        let kinds: Vec<char> = full_events.iter().filter(|e| e.1 > segment_start && e.1 < i).map(|e| e.0).collect();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("events do not alternate within a segment of {states:?}"));
        }
        segment_start = i + 1;
    }
    if full.permanent_drop && (states.iter().rev().find_map(|s| *s) != Some(false) || !full.ever_detected) {
        return Err(format!("permanent_drop without a final miss in {states:?}"));
    }
    let gap_free = states.iter().all(Option::is_some);
    if gap_free && states.first() == Some(&Some(true)) {
        let diff = full.drops.len() as i64 - full.recoveries.len() as i64;
        if !(0..=1).contains(&diff) {
            return Err(format!("drops - recoveries = {diff} in {states:?}"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Corpora on disk
// ---------------------------------------------------------------------------

pub const EMPTY_SARIF: &str = r#"{"version":"2.1.0","runs":[{"tool":{"driver":{"name":"stub"}},"results":[]}]}"#;

pub const SIMPLE_DIFF: &str =
    "diff --git a/src/a.c b/src/a.c\n--- a/src/a.c\n+++ b/src/a.c\n@@ -3,3 +3,3 @@\n ctx\n-bad();\n+good();\n ctx\n";

/// Write a manifest with `cves` CVEs over `versions` (id, release date),
/// each CVE sharing one fix diff and carrying no runs.
pub fn write_manifest(dir: &std::path::Path, cves: usize, versions: &[(String, String)]) -> std::path::PathBuf {
    std::fs::create_dir_all(dir.join("diffs")).unwrap();
    std::fs::write(dir.join("diffs/fix.diff"), SIMPLE_DIFF).unwrap();
    let versions: Vec<_> =
        versions.iter().map(|(id, date)| serde_json::json!({"id": id, "release_date": date})).collect();
    const LANGUAGES: [&str; 6] = ["c_cpp", "go", "java", "javascript", "python", "ruby"];
    const SEVERITIES: [&str; 4] = ["low", "medium", "high", "critical"];
    let cves: Vec<_> = (0..cves)
        .map(|i| {
            serde_json::json!({
                "cve_id": format!("CVE-2022-{i:05}"),
                "repo_id": format!("org/repo{}", i % 17),
                "language": LANGUAGES[i % 6],
                "cwes": [format!("CWE-{}", 20 + i % 7)],
                "severity": SEVERITIES[i % 4],
                "fix_date": "2022-03-01",
                "vulnerable_commit": format!("{i:07x}0"),
                "fix_commit": format!("{i:07x}1"),
                "fix_diff": "diffs/fix.diff",
            })
        })
        .collect();
    let path = dir.join("manifest.json");
    let doc = serde_json::json!({"schema_version": 1, "versions": versions, "cves": cves});
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

pub fn versions(n: usize) -> Vec<(String, String)> {
    let start: chrono::NaiveDate = "2019-01-01".parse().unwrap();
    (0..n)
        .map(|i| (format!("2.{}.{}", i / 5, i % 5), (start + chrono::Duration::days(7 * i as i64)).to_string()))
        .collect()
}

// ---------------------------------------------------------------------------
// Report fixtures
// ---------------------------------------------------------------------------

pub fn summary_row(i: usize, severity: Severity, lead: Option<i64>, successful: bool) -> CveSummary {
    CveSummary {
        cve_id: format!("CVE-2023-{i:05}"),
        language: [Language::CCpp, Language::Java, Language::Python][i % 3],
        cwes: vec![format!("CWE-{}", i % 5), format!("CWE-{}", 100 + i % 2)],
        severity,
        suites: Default::default(),
        successful,
        lead: LeadTimeResult {
            cve_id: format!("CVE-2023-{i:05}"),
            first_detecting_version: lead.map(|_| "2.9.0".into()),
            lead_time_days: lead,
            positive: lead.is_some_and(|d| d > 0),
        },
        representative_version: None,
        alert_count: None,
        precision_tier: None,
    }
}

/// 171 detected CVEs with the severity mix {low 14, medium 68, high 63,
/// critical 26}, 83 of them with positive lead time, plus undetected noise.
pub fn detected_fixture() -> Vec<CveSummary> {
    let mut severities = Vec::new();
    for (s, n) in [(Severity::Low, 14), (Severity::Medium, 68), (Severity::High, 63), (Severity::Critical, 26)] {
        severities.extend(std::iter::repeat_n(s, n));
    }
    let mut rows: Vec<CveSummary> = severities
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let lead = if i % 171 < 83 { (i as i64 % 300) + 1 } else { -(i as i64 % 40) };
            summary_row(i, s, Some(lead), true)
        })
        .collect();
    rows.extend((0..200).map(|i| summary_row(1000 + i, Severity::High, None, i % 3 != 0)));
    rows
}

/// Value at 1-based rank `r` of a 171-element fixture pinned at ranks 43,
/// 86, 129 and 154.
pub fn pinned(r: i64) -> usize {
    let ceil_div = |a: i64, b: i64| (a + b - 1) / b;
    (match r {
        ..=43 => ceil_div(5 * r, 43),
        44..=86 => 5 + ceil_div(9 * (r - 43), 43),
        87..=129 => 14 + ceil_div(38 * (r - 86), 43),
        130..=154 => 52 + ceil_div(72 * (r - 129), 25),
        _ => 124 + (r - 154) * 10,
    }) as usize
}
