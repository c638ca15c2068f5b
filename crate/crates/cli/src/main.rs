use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context as _};
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use sv_assess::context::{self, ContextDump};
use sv_assess::corpus::{self, FunctionBoundary, Manifest};
use sv_assess::features::{to_triplets, FeatureKind, Featurizer, VocabSource};
use sv_assess::io::{self, write_atomic};
use sv_assess::runner::{
    self, render, render_scores_csv, render_stats_csv, InputType, ReportFormat, RunnerError,
};
use sv_assess::{
    ContextKind, DependenceGraph, EmbeddingTable, ExperimentConfig, ExperimentReport,
    FunctionRecord,
};

#[derive(Parser)]
#[command(
    name = "sv-assess",
    version,
    about = "Function-level software vulnerability assessment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input: commit directory for `mine`, dataset file for the other stages.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Rendering of the report.
    #[arg(long, global = true, default_value = "markdown")]
    format: ReportFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Extract labeled vulnerable functions from fixing commits.
    Mine,
    /// Write the context selections of every record.
    Contextualize,
    /// Fit featurizers on the dataset and export feature matrices.
    Featurize,
    /// Run the configured experiment matrix.
    RunExperiment,
    /// Render a saved report.
    Report {
        /// report.json written by run-experiment.
        report: PathBuf,
    },
}

/// An error and the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn validation(error: anyhow::Error) -> Failure {
    Failure { code: 1, error }
}

fn runtime(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

impl From<RunnerError> for Failure {
    fn from(e: RunnerError) -> Self {
        let code = if e.is_validation() { 1 } else { 2 };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    let path = value
        .as_deref()
        .ok_or_else(|| validation(anyhow!("--{flag} is required")))?;
    if flag != "out" && !path.exists() {
        return Err(validation(anyhow!("{} does not exist", path.display())));
    }
    Ok(path)
}

fn write(path: &Path, contents: &str) -> Outcome {
    write_atomic(path, contents.as_bytes())?;
    info!("wrote {}", path.display());
    Ok(())
}

fn create_out(cli: &Cli) -> Result<PathBuf, Failure> {
    let out = required(&cli.out, "out")?.to_path_buf();
    fs::create_dir_all(&out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(runtime)?;
    Ok(out)
}

fn load_config(cli: &Cli) -> Result<Option<ExperimentConfig>, Failure> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    if !path.exists() {
        return Err(validation(anyhow!("{} does not exist", path.display())));
    }
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(Some(config))
}

fn load_records(
    cli: &Cli,
    config: Option<&ExperimentConfig>,
) -> Result<(Vec<FunctionRecord>, String), Failure> {
    let path = match (&cli.dataset, config.and_then(|c| c.dataset.as_ref())) {
        (Some(p), _) | (None, Some(p)) => p.clone(),
        (None, None) => return Err(validation(anyhow!("--dataset is required"))),
    };
    if !path.exists() {
        return Err(validation(anyhow!("{} does not exist", path.display())));
    }
    Ok(runner::load_dataset(&path)?)
}

#[derive(serde::Deserialize)]
struct BoundaryFile {
    project: String,
    files: BTreeMap<String, Vec<FunctionBoundary>>,
}

fn read_lines(path: &Path) -> Result<Vec<String>, Failure> {
    Ok(io::read_to_string(path)?
        .lines()
        .map(str::to_string)
        .collect())
}

/// Commit directory layout: `<commit>.diff`, `<commit>.boundaries.json`,
/// optional pre-change sources under `<commit>.src/<path>`, and a
/// `labels.json` manifest.
fn mine(cli: &Cli) -> Outcome {
    let dir = required(&cli.dataset, "dataset")?;
    let out = create_out(cli)?;
    let manifest_path = dir.join("labels.json");
    if !manifest_path.exists() {
        return Err(validation(anyhow!(
            "{} does not exist",
            manifest_path.display()
        )));
    }
    let manifest: Manifest =
        corpus::load_manifest(&manifest_path).map_err(|e| validation(e.into()))?;
    let mut diffs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .map_err(runtime)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "diff"))
        .collect();
    diffs.sort();

    let mut records = Vec::new();
    let mut log = Vec::new();
    for diff_path in &diffs {
        let stem = diff_path.file_stem().unwrap().to_string_lossy().to_string();
        let text = io::read_to_string(diff_path)?;
        let mut changes = corpus::parse_unified_diff(&text)
            .map_err(|e| validation(anyhow!("{}: {e}", diff_path.display())))?;
        for c in &mut changes {
            if c.commit_id.is_empty() {
                c.commit_id = stem.clone();
            }
        }
        let commit = changes
            .first()
            .map_or(stem.clone(), |c| c.commit_id.clone());
        let bounds_path = dir.join(format!("{stem}.boundaries.json"));
        if !bounds_path.exists() {
            warn!("{stem}: no boundaries file, skipped");
            log.push(json!({"commit": commit, "skipped": "no boundaries file"}));
            continue;
        }
        let bounds: BoundaryFile = io::read_json(&bounds_path).map_err(|e| validation(e.into()))?;
        let mut sources = BTreeMap::new();
        for path in bounds.files.keys() {
            let src = dir.join(format!("{stem}.src")).join(path);
            if src.exists() {
                sources.insert(path.clone(), read_lines(&src)?);
            }
        }
        let mined = corpus::mine_commit(&changes, &bounds.files, &sources, &bounds.project);
        let mut unlabeled = 0;
        let mut invalid = Vec::new();
        let found = mined.functions.len();
        for f in mined.functions {
            let Some(labels) = manifest.get(&f.commit_id) else {
                unlabeled += 1;
                continue;
            };
            let id = f.id.clone();
            match f.with_labels(labels.clone()) {
                Ok(r) => records.push(r),
                Err(e) => invalid.push(json!({"function": id, "reason": e.to_string()})),
            }
        }
        log.push(json!({
            "commit": commit,
            "rejected": mined.rejected,
            "functions": found,
            "excluded": mined.excluded,
            "orphan_deleted_lines": mined.orphans,
            "test_files_skipped": mined.test_files_skipped,
            "unlabeled": unlabeled,
            "invalid": invalid,
        }));
    }
    let summary = json!({
        "commits": diffs.len(),
        "records": records.len(),
        "vulnerable_line_ratio": corpus::vulnerable_line_ratio(&records),
        "commit_log": log,
    });
    write(&out.join("dataset.jsonl"), &io::to_jsonl(&records))?;
    write(
        &out.join("mining_log.json"),
        &(serde_json::to_string_pretty(&summary).unwrap() + "\n"),
    )?;
    println!(
        "mined {} records from {} commits",
        records.len(),
        diffs.len()
    );
    Ok(())
}

fn default_input_types() -> Vec<InputType> {
    vec![InputType::single(runner::InputKind::VulnOnly)]
}

fn contextualize(cli: &Cli) -> Outcome {
    let config = load_config(cli)?;
    let (records, _) = load_records(cli, config.as_ref())?;
    let out = create_out(cli)?;
    let master = cli
        .seed
        .or(config.as_ref().map(|c| c.seed))
        .unwrap_or(runner::DEFAULT_SEED);
    let kinds: Vec<ContextKind> = match &config {
        Some(c) => {
            let mut kinds: Vec<ContextKind> = Vec::new();
            for t in &c.input_types {
                let kind = t.context_kind(0);
                if !kinds.contains(&kind) {
                    kinds.push(kind);
                }
            }
            kinds
        }
        None => vec![
            ContextKind::Ps,
            ContextKind::Surrounding(runner::DEFAULT_WINDOW),
            ContextKind::Function,
            ContextKind::Residual,
            ContextKind::RandomNonvuln(0),
        ],
    };
    let mut dumps: Vec<ContextDump> = Vec::new();
    for r in &records {
        let graph = DependenceGraph::from_record(r);
        for &kind in &kinds {
            let kind = match kind {
                ContextKind::RandomNonvuln(_) => {
                    ContextKind::RandomNonvuln(runner::random_seed_for(master, r))
                }
                k => k,
            };
            dumps.push(context::select(r, &graph, kind).dump(r));
        }
    }
    write(&out.join("contexts.jsonl"), &io::to_jsonl(&dumps))?;
    println!(
        "wrote {} selections for {} records",
        dumps.len(),
        records.len()
    );
    Ok(())
}

fn featurize(cli: &Cli) -> Outcome {
    let config = load_config(cli)?;
    let (records, _) = load_records(cli, config.as_ref())?;
    let out = create_out(cli)?;
    let master = cli
        .seed
        .or(config.as_ref().map(|c| c.seed))
        .unwrap_or(runner::DEFAULT_SEED);
    let (input_types, features) = match &config {
        Some(c) => (c.input_types.clone(), c.features.clone()),
        None => (default_input_types(), vec![FeatureKind::BagTokens]),
    };
    let graphs: Vec<DependenceGraph> = records.iter().map(DependenceGraph::from_record).collect();
    let ids: String = records.iter().map(|r| format!("{}\n", r.id)).collect();
    write(&out.join("rows.txt"), &ids)?;
    for input in &input_types {
        let assembled = runner::assemble_all(&records, &graphs, input, master);
        let refs: Vec<_> = assembled.iter().collect();
        for feature in &features {
            let featurizer = match feature {
                FeatureKind::BagTokens => Featurizer::fit_bag(VocabSource::Tokens, &refs),
                FeatureKind::BagSubtokens => Featurizer::fit_bag(VocabSource::Subtokens, &refs),
                FeatureKind::EmbeddingAverage(path) => {
                    let table = EmbeddingTable::load(path).map_err(|e| validation(e.into()))?;
                    Featurizer::Embedding(std::sync::Arc::new(table))
                }
            };
            let rows: Vec<_> = assembled.iter().map(|a| featurizer.transform(a)).collect();
            let stem = format!("{}.{}", input.label().replace(':', "_"), feature.label());
            write(&out.join(format!("{stem}.triplets")), &to_triplets(&rows))?;
            if let Featurizer::Bag(vocab) = &featurizer {
                let text = serde_json::to_string_pretty(vocab).unwrap() + "\n";
                write(&out.join(format!("{stem}.vocabulary.json")), &text)?;
            }
            let dimension = rows.first().map_or(0, |r| r.dimension);
            println!("{stem}: {} rows x {dimension} columns", rows.len());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let mut config =
        load_config(cli)?.ok_or_else(|| validation(anyhow!("--config is required")))?;
    let (records, sha) = load_records(cli, Some(&config))?;
    if let Some(d) = &cli.dataset {
        config.dataset = Some(d.clone());
    }
    let out = create_out(cli)?;
    let report = runner::run_experiment(&config, records, &sha)?;
    write_report_files(&out, &report, cli.format)?;
    write(
        &out.join("config.json"),
        &(serde_json::to_string_pretty(&config).unwrap() + "\n"),
    )?;
    println!(
        "{} records, {} cells, {} round scores",
        report.provenance.records,
        report.cells.len(),
        report.scores.len()
    );
    Ok(())
}

fn write_report_files(out: &Path, report: &ExperimentReport, format: ReportFormat) -> Outcome {
    write(
        &out.join("report.json"),
        &render(report, ReportFormat::Json),
    )?;
    write(&out.join("scores.csv"), &render_scores_csv(report))?;
    write(&out.join("stats.csv"), &render_stats_csv(report))?;
    if format != ReportFormat::Json {
        write(
            &out.join(format!("report.{}", format.extension())),
            &render(report, format),
        )?;
    }
    Ok(())
}

fn report(cli: &Cli, path: &Path) -> Outcome {
    if !path.exists() {
        return Err(validation(anyhow!("{} does not exist", path.display())));
    }
    let report: ExperimentReport = io::read_json(path).map_err(|e| validation(e.into()))?;
    let text = render(&report, cli.format);
    match &cli.out {
        Some(_) => {
            let out = create_out(cli)?;
            write(
                &out.join(format!("report.{}", cli.format.extension())),
                &text,
            )
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Mine => mine(&cli),
        Command::Contextualize => contextualize(&cli),
        Command::Featurize => featurize(&cli),
        Command::RunExperiment => run(&cli),
        Command::Report { report: path } => report(&cli, path),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
