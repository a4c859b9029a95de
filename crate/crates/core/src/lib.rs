//! Evaluate static analyzers across their release history: which CVEs each
//! version detects, how early, how close its alerts land to the vulnerable
//! code, and how stable detection is from version to version.
//!
//! Ratio metrics are generic over [`Scalar`]; [`Exact`] gives bit-exact
//! rationals and `f64` gives fast approximate values.

pub mod corpus;
pub mod detection;
pub mod diffparse;
pub mod evaluate;
pub mod locality;
pub mod num;
pub mod output;
pub mod path;
pub mod report;
pub mod runner;
pub mod sarifread;
pub mod stability;
pub mod stats;
pub mod tables;

pub use corpus::{
    load_corpus, Corpus, CorpusError, CveRecord, FixDelta, Language, Location, RunEntry, RunStatus, Severity, Suite,
    VersionInfo,
};
pub use detection::{detect, lead_time, DetectionOutcome, LeadTimeResult};
pub use diffparse::{parse_fix_diff, parse_unified_diff};
pub use evaluate::{evaluate, Evaluation};
pub use locality::LocalityReport;
pub use num::Scalar;
pub use report::{Cohort, CohortFilter, PrecisionTier, ReportError};
pub use runner::{execute, plan_campaign, CampaignConfig, Cell, RunnerError};
pub use sarifread::{parse_sarif, Alert, AlertSet, LineRange};
pub use stability::{build_timeline, StabilityTimeline, TradeoffPoint};

/// Arbitrary-precision rational scalar.
pub type Exact = num_rational::BigRational;
pub type ExactLocality = LocalityReport<Exact>;
pub type FloatLocality = LocalityReport<f64>;
