use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use sastline_core::output::{Format, Table};
use sastline_core::report::summarize;
use sastline_core::runner::{execute, plan_campaign, CampaignConfig, RunnerError};
use sastline_core::tables::{self, Selection};
use sastline_core::{evaluate, load_corpus, Corpus, Evaluation};

use crate::{Command, Common, Failure};

type Outcome = Result<(), Failure>;

pub(crate) fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Validate(c) => validate(&c),
        Command::Run { common, config, dry_run } => run(&common, &config, dry_run),
        Command::Detect(c) => analyze(&c, |corpus, eval, rows, sel| {
            vec![
                ("detection", tables::detection_table(eval, rows, sel)),
                ("lead_time", tables::lead_time_table(corpus, rows, sel)),
            ]
        }),
        Command::Locality(c) => {
            analyze(&c, |_, eval, rows, sel| vec![("locality", tables::locality_table(eval, rows, sel))])
        }
        Command::Stability(c) => stability(&c),
        Command::Tradeoff(c) => {
            analyze(&c, |corpus, eval, rows, sel| vec![("tradeoff", tables::tradeoff_table(corpus, eval, rows, sel))])
        }
        Command::Report(c) => report(&c),
    }
}

fn data<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Data(e.into())
}

fn load(common: &Common) -> Result<(Corpus, Evaluation), Failure> {
    let corpus = load_corpus(&common.manifest)
        .with_context(|| format!("loading {}", common.manifest.display()))
        .map_err(data)?;
    let evaluation = evaluate(&corpus).map_err(data)?;
    Ok((corpus, evaluation))
}

fn write(out: &Path, stem: &str, table: &Table, format: Format) -> Outcome {
    let path = table
        .write_file(out, stem, format)
        .with_context(|| format!("writing {stem} to {}", out.display()))
        .map_err(data)?;
    println!("{}", path.display());
    Ok(())
}

type Builder = fn(&Corpus, &Evaluation, &[sastline_core::report::CveSummary], &Selection) -> Vec<(&'static str, Table)>;

fn analyze(common: &Common, build: Builder) -> Outcome {
    let (corpus, evaluation) = load(common)?;
    let rows = summarize(&corpus, &evaluation);
    let sel = Selection::new(common.filter(), common.cohort);
    for (stem, table) in build(&corpus, &evaluation, &rows, &sel) {
        write(&common.out, stem, &table, common.format)?;
    }
    Ok(())
}

fn validate(common: &Common) -> Outcome {
    let (corpus, evaluation) = load(common)?;
    let runs: usize = corpus.cves().iter().map(|c| c.runs.len()).sum();
    println!(
        "ok: {} versions, {} CVEs, {} runs ({} successful)",
        corpus.versions().len(),
        corpus.cves().len(),
        runs,
        evaluation.cells.len()
    );
    Ok(())
}

fn run(common: &Common, config_path: &Path, dry_run: bool) -> Outcome {
    let config = CampaignConfig::load(config_path).map_err(|e| Failure::Usage(e.into()))?;
    let mut corpus = load_corpus(&common.manifest)
        .with_context(|| format!("loading {}", common.manifest.display()))
        .map_err(data)?;
    let plan = plan_campaign(&corpus, &config);
    if dry_run {
        for cell in &plan {
            println!("{}\t{}\t{}", cell.cve_id, cell.version_id, cell.commit_kind);
        }
        return Ok(());
    }
    log::info!("{} cell(s) to run", plan.len());
    let summary = execute(&mut corpus, &common.manifest, &plan, &config).map_err(|e| match e {
        RunnerError::ConfigInvalid(_) => Failure::Usage(e.into()),
        other => data(other),
    })?;
    println!("cells: {}, succeeded: {}, failed: {}", summary.cells, summary.succeeded, summary.failures.len());
    for f in &summary.failures {
        let first = f.message.lines().next().unwrap_or_default();
        eprintln!("failed {} {} {}: {first}", f.cell.cve_id, f.cell.version_id, f.cell.commit_kind);
    }
    if summary.is_complete() {
        Ok(())
    } else {
        Err(Failure::Partial(summary.failures.len()))
    }
}

fn stability(common: &Common) -> Outcome {
    let (corpus, evaluation) = load(common)?;
    let corpus_rows = summarize(&corpus, &evaluation);
    let sel = Selection::new(common.filter(), common.cohort);
    match common.format {
        Format::Csv => {
            write(&common.out, "timelines", &tables::timeline_table(&evaluation, &corpus_rows, &sel), Format::Csv)?
        }
        Format::Jsonl => {
            fs::create_dir_all(&common.out).map_err(data)?;
            let path = common.out.join("timelines.jsonl");
            let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display())).map_err(data)?;
            tables::write_timelines_jsonl(&evaluation, &corpus_rows, &sel, BufWriter::new(file)).map_err(data)?;
            println!("{}", path.display());
        }
    }
    write(&common.out, "stability", &tables::stability_table(&evaluation, &corpus_rows, &sel), common.format)
}

fn report(common: &Common) -> Outcome {
    let (corpus, evaluation) = load(common)?;
    let rows = summarize(&corpus, &evaluation);
    let sel = Selection::new(common.filter(), common.cohort);
    for (stem, table) in tables::report_tables(&corpus, &evaluation, &rows, &sel) {
        write(&common.out, stem, &table, common.format)?;
    }
    let path = common.out.join("metadata.json");
    let mut body = serde_json::to_string_pretty(&tables::report_metadata(&sel)).expect("metadata serializes");
    body.push('\n');
    fs::write(&path, body).with_context(|| format!("writing {}", path.display())).map_err(data)?;
    println!("{}", path.display());
    Ok(())
}
