//! End-to-end experiments over the rotating split protocol.
//!
//! One split plan is shared by every cell so that paired comparisons see the
//! same test folds. A job is one (input type, feature, round) triple: it
//! fits the featurizer on the round's training folds, then grid-searches
//! every task and classifier on the validation fold and scores the test fold.

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    ClassifierSpec, ExperimentConfig, InputKind, InputType, DEFAULT_SEED, DEFAULT_WINDOW,
};
pub use report::{render, render_markdown, render_scores_csv, render_stats_csv, ReportFormat};

use crate::context::{self, AssembledInput};
use crate::corpus::{CvssTask, FunctionRecord};
use crate::depgraph::DependenceGraph;
use crate::eval::{self, make_split_plan, wilcoxon_one_sided, EvalError, PairedScores, SplitPlan};
use crate::features::{
    EmbeddingTable, FeatureError, FeatureKind, FeatureVector, Featurizer, VocabSource,
};
use crate::io::{self, IoError};
use crate::models::{grid_search, ModelError};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl RunnerError {
    /// Whether the error stems from bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            RunnerError::InvalidConfig(_) | RunnerError::Dataset(_) | RunnerError::Eval(_) => true,
            RunnerError::Features(FeatureError::Table { .. }) => true,
            RunnerError::Io(IoError::Json { .. }) => true,
            RunnerError::Features(FeatureError::Io(IoError::Json { .. })) => true,
            RunnerError::Model(ModelError::InvalidConfig(_)) => true,
            _ => false,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parse a dataset: JSON lines of function records, or one JSON array.
pub fn parse_dataset(text: &str, origin: &str) -> Result<Vec<FunctionRecord>, RunnerError> {
    let records: Vec<FunctionRecord> = if text.trim_start().starts_with('[') {
        serde_json::from_str(text).map_err(|e| RunnerError::Dataset(format!("{origin}: {e}")))?
    } else {
        io::parse_jsonl(text, origin).map_err(|e| RunnerError::Dataset(e.to_string()))?
    };
    let mut ids = BTreeSet::new();
    for r in &records {
        if !ids.insert(r.id.as_str()) {
            return Err(RunnerError::Dataset(format!(
                "duplicate function id `{}`",
                r.id
            )));
        }
    }
    Ok(records)
}

/// Load a dataset and its sha256 fingerprint.
pub fn load_dataset(path: &Path) -> Result<(Vec<FunctionRecord>, String), RunnerError> {
    let text = io::read_to_string(path)?;
    let records = parse_dataset(&text, &path.display().to_string())?;
    Ok((records, sha256_hex(text.as_bytes())))
}

/// Seed for the random selection of one record.
pub fn random_seed_for(master: u64, record: &FunctionRecord) -> u64 {
    seed::derive(seed::derive(master, "random_nonvuln"), &record.id)
}

/// Model inputs of every record for one input type.
pub fn assemble_all(
    records: &[FunctionRecord],
    graphs: &[DependenceGraph],
    input: &InputType,
    master_seed: u64,
) -> Vec<AssembledInput> {
    records
        .par_iter()
        .zip(graphs)
        .map(|(r, g)| {
            let mut sel =
                context::select(r, g, input.context_kind(random_seed_for(master_seed, r)));
            if !input.input.includes_vuln() {
                sel = sel.without_vuln();
            }
            context::assemble_input(r, &sel, input.mode)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundScore {
    pub round: usize,
    pub task: CvssTask,
    pub input_type: String,
    pub feature: String,
    pub classifier: String,
    pub best_config: String,
    pub validation_mcc: f64,
    pub mcc: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub task: CvssTask,
    pub input_type: String,
    pub feature: String,
    pub classifier: String,
    pub rounds: usize,
    pub mean_mcc: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Mcc,
    F1,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Mcc => "mcc",
            Measure::F1 => "f1",
        }
    }

    fn of(self, s: &RoundScore) -> f64 {
        match self {
            Measure::Mcc => s.mcc,
            Measure::F1 => s.f1,
        }
    }
}

/// One-sided comparison of `first > second` on paired cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatistic {
    pub measure: Measure,
    pub first: String,
    pub second: String,
    pub n_pairs: usize,
    pub n_used: usize,
    pub p_value: f64,
    pub z: f64,
    pub r: f64,
    pub effect: eval::EffectSize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub dataset_sha256: String,
    pub master_seed: u64,
    pub split_seed: u64,
    pub rounds: Vec<usize>,
    pub records: usize,
    pub dropped_empty_ps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub tasks: Vec<CvssTask>,
    pub input_types: Vec<String>,
    pub scores: Vec<RoundScore>,
    pub cells: Vec<CellSummary>,
    pub statistics: Vec<PairStatistic>,
}

impl ExperimentReport {
    /// Mean of `measure` over all feature and classifier cells of a task and input type.
    pub fn table_value(&self, task: CvssTask, input_type: &str, measure: Measure) -> Option<f64> {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.task == task && c.input_type == input_type)
            .map(|c| match measure {
                Measure::Mcc => c.mean_mcc,
                Measure::F1 => c.mean_f1,
            })
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn statistic(&self, measure: Measure, first: &str, second: &str) -> Option<&PairStatistic> {
        self.statistics
            .iter()
            .find(|s| s.measure == measure && s.first == first && s.second == second)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Records kept for the experiment and their graphs.
pub struct Prepared {
    pub records: Vec<FunctionRecord>,
    pub graphs: Vec<DependenceGraph>,
    pub dropped_empty_ps: usize,
}

pub fn prepare(config: &ExperimentConfig, records: Vec<FunctionRecord>) -> Prepared {
    let graphs: Vec<DependenceGraph> = records
        .par_iter()
        .map(DependenceGraph::from_record)
        .collect();
    if !config.filters_empty_ps() {
        return Prepared {
            records,
            graphs,
            dropped_empty_ps: 0,
        };
    }
    let (mut kept, mut kept_graphs) = (Vec::new(), Vec::new());
    let mut dropped = 0;
    for (r, g) in records.into_iter().zip(graphs) {
        if context::program_slicing_context(&r, &g)
            .context_indices
            .is_empty()
        {
            dropped += 1;
        } else {
            kept.push(r);
            kept_graphs.push(g);
        }
    }
    if dropped > 0 {
        info!("dropped {dropped} records without PS context");
    }
    Prepared {
        records: kept,
        graphs: kept_graphs,
        dropped_empty_ps: dropped,
    }
}

fn fit_featurizer(
    kind: &FeatureKind,
    tables: &BTreeMap<String, Arc<EmbeddingTable>>,
    train: &[&AssembledInput],
) -> Featurizer {
    match kind {
        FeatureKind::BagTokens => Featurizer::fit_bag(VocabSource::Tokens, train),
        FeatureKind::BagSubtokens => Featurizer::fit_bag(VocabSource::Subtokens, train),
        FeatureKind::EmbeddingAverage(_) => Featurizer::Embedding(tables[&kind.label()].clone()),
    }
}

fn pick<'a, T>(items: &'a [T], idx: &[usize]) -> Vec<&'a T> {
    idx.iter().map(|&i| &items[i]).collect()
}

struct Job<'a> {
    input: &'a InputType,
    inputs: &'a [AssembledInput],
    feature: &'a FeatureKind,
    round: usize,
}

fn run_job(
    job: &Job<'_>,
    config: &ExperimentConfig,
    records: &[FunctionRecord],
    plan: &SplitPlan,
    tables: &BTreeMap<String, Arc<EmbeddingTable>>,
) -> Result<Vec<RoundScore>, RunnerError> {
    let round = plan.round(job.round);
    let train_idx = plan.indices_in(&round.train_folds);
    let val_idx = plan.fold_indices(round.val_fold);
    let test_idx = plan.fold_indices(round.test_fold);
    let featurizer = fit_featurizer(job.feature, tables, &pick(job.inputs, &train_idx));
    let featurize = |idx: &[usize]| -> Vec<FeatureVector> {
        idx.iter()
            .map(|&i| featurizer.transform(&job.inputs[i]))
            .collect()
    };
    let (train_x, val_x, test_x) = (
        featurize(&train_idx),
        featurize(&val_idx),
        featurize(&test_idx),
    );
    let input_label = job.input.label();
    let feature_label = job.feature.label();
    let mut out = Vec::new();
    for &task in &config.tasks {
        let labels =
            |idx: &[usize]| -> Vec<&str> { idx.iter().map(|&i| records[i].label(task)).collect() };
        let (train_y, val_y, test_y) = (labels(&train_idx), labels(&val_idx), labels(&test_idx));
        for spec in &config.classifiers {
            let cell_seed = seed::derive(
                config.seed,
                &format!(
                    "{task}/{input_label}/{feature_label}/{}/{}",
                    spec.family, job.round
                ),
            );
            let best = grid_search(&spec.grid(), &train_x, &train_y, &val_x, &val_y, cell_seed)?;
            let pred = best.model.predict(&test_x)?;
            let pred: Vec<&str> = pred.iter().map(String::as_str).collect();
            out.push(RoundScore {
                round: job.round,
                task,
                input_type: input_label.clone(),
                feature: feature_label.clone(),
                classifier: spec.family.name().to_string(),
                best_config: best.config.to_string(),
                validation_mcc: best.validation_mcc,
                mcc: eval::mcc(&test_y, &pred),
                f1: eval::macro_f1(&test_y, &pred),
            });
        }
    }
    Ok(out)
}

fn summarize(scores: &[RoundScore]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(CvssTask, &str, &str, &str), Vec<&RoundScore>> = BTreeMap::new();
    for s in scores {
        groups
            .entry((s.task, &s.input_type, &s.feature, &s.classifier))
            .or_default()
            .push(s);
    }
    groups
        .into_iter()
        .map(|((task, input, feature, classifier), v)| {
            let n = v.len() as f64;
            CellSummary {
                task,
                input_type: input.to_string(),
                feature: feature.to_string(),
                classifier: classifier.to_string(),
                rounds: v.len(),
                mean_mcc: v.iter().map(|s| s.mcc).sum::<f64>() / n,
                mean_f1: v.iter().map(|s| s.f1).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Wilcoxon tests between every ordered pair of input types, pairing
/// scores at the (task, feature, classifier, round) level.
pub fn compare_inputs(scores: &[RoundScore], input_types: &[String]) -> Vec<PairStatistic> {
    type Key<'a> = (CvssTask, &'a str, &'a str, usize);
    let mut by_input: BTreeMap<&str, BTreeMap<Key<'_>, &RoundScore>> = BTreeMap::new();
    for s in scores {
        by_input
            .entry(&s.input_type)
            .or_default()
            .insert((s.task, &s.feature, &s.classifier, s.round), s);
    }
    let mut out = Vec::new();
    for measure in [Measure::Mcc, Measure::F1] {
        for a in input_types {
            for b in input_types {
                if a == b {
                    continue;
                }
                let (Some(sa), Some(sb)) = (by_input.get(a.as_str()), by_input.get(b.as_str()))
                else {
                    continue;
                };
                let (mut first, mut second) = (Vec::new(), Vec::new());
                for (key, x) in sa {
                    if let Some(y) = sb.get(key) {
                        first.push(measure.of(x));
                        second.push(measure.of(y));
                    }
                }
                let n_pairs = first.len();
                let Ok(pairs) = PairedScores::new(first, second) else {
                    continue;
                };
                let w = wilcoxon_one_sided(&pairs);
                if w.degenerate {
                    warn!(
                        "{a} vs {b} on {}: all paired differences are zero",
                        measure.name()
                    );
                }
                out.push(PairStatistic {
                    measure,
                    first: a.clone(),
                    second: b.clone(),
                    n_pairs,
                    n_used: w.n_used,
                    p_value: w.p_value,
                    z: w.z,
                    r: w.r,
                    effect: eval::effect_size_label(w.r),
                    degenerate: w.degenerate,
                });
            }
        }
    }
    out
}

/// Run the configured experiment on in-memory records.
pub fn run_experiment(
    config: &ExperimentConfig,
    records: Vec<FunctionRecord>,
    dataset_sha256: &str,
) -> Result<ExperimentReport, RunnerError> {
    config.validate()?;
    let prepared = prepare(config, records);
    let records = &prepared.records;
    let split_seed = seed::derive(config.seed, "split");
    let plan = make_split_plan(records.len(), split_seed)?;

    let mut tables = BTreeMap::new();
    for f in &config.features {
        if let FeatureKind::EmbeddingAverage(path) = f {
            tables.insert(f.label(), Arc::new(EmbeddingTable::load(path)?));
        }
    }
    let inputs: Vec<Vec<AssembledInput>> = config
        .input_types
        .iter()
        .map(|t| assemble_all(records, &prepared.graphs, t, config.seed))
        .collect();
    let rounds = config.rounds();
    let mut jobs = Vec::new();
    for (input, assembled) in config.input_types.iter().zip(&inputs) {
        for feature in &config.features {
            for &round in &rounds {
                jobs.push(Job {
                    input,
                    inputs: assembled,
                    feature,
                    round,
                });
            }
        }
    }
    info!("running {} jobs over {} records", jobs.len(), records.len());
    let scores: Vec<RoundScore> = jobs
        .par_iter()
        .map(|job| run_job(job, config, records, &plan, &tables))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    let input_types: Vec<String> = config.input_types.iter().map(InputType::label).collect();
    let config_json = serde_json::to_vec(config).expect("config serializes");
    Ok(ExperimentReport {
        provenance: Provenance {
            config_sha256: sha256_hex(&config_json),
            dataset_sha256: dataset_sha256.to_string(),
            master_seed: config.seed,
            split_seed,
            rounds,
            records: records.len(),
            dropped_empty_ps: prepared.dropped_empty_ps,
        },
        tasks: config.tasks.clone(),
        cells: summarize(&scores),
        statistics: compare_inputs(&scores, &input_types),
        input_types,
        scores,
    })
}
