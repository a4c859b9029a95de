//! `sastline`: evaluate a SAST analyzer across its versions from the command
//! line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sastline_core::output::Format;
use sastline_core::report::{Cohort, CohortFilter, PrecisionTier};
use sastline_core::{Language, Severity, Suite};

#[derive(Debug, Parser)]
#[command(
    name = "sastline",
    version,
    about = "Measure SAST detection, lead time, locality and stability across analyzer versions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check that a manifest and every file it references load.
    Validate(Common),
    /// Run the analyzer for every cell lacking a result.
    Run {
        #[command(flatten)]
        common: Common,
        /// Campaign config (`.toml` or JSON).
        #[arg(long)]
        config: PathBuf,
        /// Print the plan without executing it.
        #[arg(long)]
        dry_run: bool,
    },
    /// Per-version detection outcomes and per-CVE lead times.
    Detect(Common),
    /// Hard/soft, project/file locality per successful run.
    Locality(Common),
    /// Detection timelines with drops and recoveries.
    Stability(Common),
    /// Detected CVEs against median alert count per version.
    Tradeoff(Common),
    /// Aggregate tables: cohorts, lead-time CDF, breakdowns, percentiles.
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long, default_value = "manifest.json")]
    manifest: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = Format::Csv)]
    format: Format,
    /// all, successful_analyses, detected or positive_lead_time.
    #[arg(long)]
    cohort: Option<Cohort>,
    #[arg(long)]
    language: Option<Language>,
    #[arg(long)]
    cwe: Option<String>,
    #[arg(long)]
    severity: Option<Severity>,
    #[arg(long)]
    suite: Option<Suite>,
    #[arg(long)]
    precision_tier: Option<PrecisionTier>,
}

impl Common {
    fn filter(&self) -> CohortFilter {
        CohortFilter {
            cohort: self.cohort.unwrap_or_default(),
            language: self.language,
            cwe: self.cwe.clone(),
            severity: self.severity,
            suite: self.suite,
            precision_tier: self.precision_tier,
        }
    }
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Partial(usize),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Partial(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(e) | Failure::Data(e) => eprintln!("error: {e:#}"),
                Failure::Partial(n) => eprintln!("error: {n} cell(s) failed; see the run log"),
            }
            ExitCode::from(failure.code())
        }
    }
}
