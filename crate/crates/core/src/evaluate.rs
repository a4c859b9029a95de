//! Runs detection, locality and stability over every successful run of a
//! corpus.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{CommitKind, Corpus, CveRecord, RunEntry};
use crate::detection::{detect, lead_time, DetectionError, DetectionOutcome, LeadTimeResult};
use crate::locality::LocalityReport;
use crate::report::PrecisionTier;
use crate::sarifread::{parse_sarif, AlertSetMeta, SarifError};
use crate::stability::{build_timeline, StabilityError, StabilityTimeline};
use crate::Exact;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Sarif {
        path: PathBuf,
        #[source]
        source: SarifError,
    },
    #[error("{cve_id}: {source}")]
    Detection {
        cve_id: String,
        #[source]
        source: DetectionError,
    },
    #[error("{cve_id}: {source}")]
    Stability {
        cve_id: String,
        #[source]
        source: StabilityError,
    },
}

/// Results for one successful (CVE, version) run.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEvaluation {
    pub cve_id: String,
    pub version_id: String,
    pub ordinal: usize,
    pub suite: crate::corpus::Suite,
    pub outcome: DetectionOutcome,
    pub locality: LocalityReport<Exact>,
    pub vul_alerts: usize,
    pub fix_alerts: usize,
    pub skipped_vul: usize,
    pub skipped_fix: usize,
    pub precision_tier: Option<PrecisionTier>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CveEvaluation {
    pub cve_id: String,
    pub successful: bool,
    pub lead: LeadTimeResult,
    pub timeline: StabilityTimeline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Corpus CVE order, then version ordinal.
    pub cells: Vec<CellEvaluation>,
    /// Corpus CVE order.
    pub cves: Vec<CveEvaluation>,
}

impl Evaluation {
    pub fn cells_of<'a>(&'a self, cve_id: &'a str) -> impl Iterator<Item = &'a CellEvaluation> + 'a {
        self.cells.iter().filter(move |c| c.cve_id == cve_id)
    }

    pub fn cell(&self, cve_id: &str, version_id: &str) -> Option<&CellEvaluation> {
        self.cells.iter().find(|c| c.cve_id == cve_id && c.version_id == version_id)
    }

    pub fn outcome_map(&self) -> HashMap<(String, String), DetectionOutcome> {
        self.cells.iter().map(|c| ((c.cve_id.clone(), c.version_id.clone()), c.outcome.clone())).collect()
    }

    pub fn alert_count_map(&self) -> HashMap<(String, String), usize> {
        self.cells.iter().map(|c| ((c.cve_id.clone(), c.version_id.clone()), c.vul_alerts)).collect()
    }
}

fn evaluate_cell(corpus: &Corpus, cve: &CveRecord, run: &RunEntry) -> Result<CellEvaluation, EvaluationError> {
    let load = |kind: CommitKind| {
        let rel = run.sarif_path(kind).expect("ok runs carry SARIF paths");
        let path = corpus.resolve(rel);
        let text = fs::read_to_string(&path).map_err(|source| EvaluationError::Io { path: path.clone(), source })?;
        let meta = AlertSetMeta {
            cve_id: cve.cve_id.clone(),
            version_id: run.version_id.clone(),
            commit_kind: kind,
            suite: run.suite,
        };
        parse_sarif(&text, meta).map_err(|source| EvaluationError::Sarif { path, source })
    };
    let vul = load(CommitKind::Vulnerable)?;
    let fix = load(CommitKind::Fixed)?;
    let outcome = detect(&cve.fix_delta, &vul, &fix)
        .map_err(|source| EvaluationError::Detection { cve_id: cve.cve_id.clone(), source })?;
    let locality = LocalityReport::compute(&vul, &cve.fix_delta);
    let precision_tier = PrecisionTier::of_alerts(&outcome.matching_alerts);
    Ok(CellEvaluation {
        cve_id: cve.cve_id.clone(),
        version_id: run.version_id.clone(),
        ordinal: corpus.version(&run.version_id).map(|v| v.ordinal).unwrap_or_default(),
        suite: run.suite,
        vul_alerts: vul.alerts.len(),
        fix_alerts: fix.alerts.len(),
        skipped_vul: vul.skipped,
        skipped_fix: fix.skipped,
        outcome,
        locality,
        precision_tier,
    })
}

/// Evaluate every successful run. Cells are computed in parallel; the
/// result order is deterministic.
pub fn evaluate(corpus: &Corpus) -> Result<Evaluation, EvaluationError> {
    let jobs: Vec<(&CveRecord, &RunEntry)> =
        corpus.cves().iter().flat_map(|c| c.runs.iter().filter(|r| r.is_ok()).map(move |r| (c, r))).collect();
    let cells = jobs.par_iter().map(|(cve, run)| evaluate_cell(corpus, cve, run)).collect::<Result<Vec<_>, _>>()?;

    let mut cves = Vec::with_capacity(corpus.cves().len());
    for cve in corpus.cves() {
        let outcomes: Vec<DetectionOutcome> =
            cells.iter().filter(|c| c.cve_id == cve.cve_id).map(|c| c.outcome.clone()).collect();
        let lead = lead_time(cve, &outcomes, corpus.versions())
            .map_err(|source| EvaluationError::Detection { cve_id: cve.cve_id.clone(), source })?;
        let statuses: Vec<_> = cve.runs.iter().map(|r| (r.version_id.clone(), r.status)).collect();
        let timeline = build_timeline(&cve.cve_id, &outcomes, &statuses, corpus.versions())
            .map_err(|source| EvaluationError::Stability { cve_id: cve.cve_id.clone(), source })?;
        cves.push(CveEvaluation {
            cve_id: cve.cve_id.clone(),
            successful: cve.runs.iter().any(RunEntry::is_ok),
            lead,
            timeline,
        });
    }
    Ok(Evaluation { cells, cves })
}
