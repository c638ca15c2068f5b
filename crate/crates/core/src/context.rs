//! Context selection around vulnerable statements and model input assembly.
//!
//! All selections hold statement indices in ascending program order and never
//! include cosmetic lines or the vulnerable lines themselves.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::corpus::FunctionRecord;
use crate::depgraph::DependenceGraph;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ContextKind {
    /// Program slicing: backward and forward slices of the vulnerable lines.
    Ps,
    /// `n` code lines before and after each vulnerable line.
    Surrounding(usize),
    /// Every non-vulnerable code line.
    Function,
    /// As many random non-vulnerable lines as there are vulnerable lines.
    RandomNonvuln(u64),
    /// Function context minus PS context.
    Residual,
    /// No context.
    None,
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContextKind::Ps => f.write_str("ps"),
            ContextKind::Surrounding(n) => write!(f, "surrounding({n})"),
            ContextKind::Function => f.write_str("function"),
            ContextKind::RandomNonvuln(s) => write!(f, "random_nonvuln({s})"),
            ContextKind::Residual => f.write_str("residual"),
            ContextKind::None => f.write_str("none"),
        }
    }
}

impl FromStr for ContextKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let arg = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
        };
        match s {
            "ps" => return Ok(ContextKind::Ps),
            "function" => return Ok(ContextKind::Function),
            "residual" => return Ok(ContextKind::Residual),
            "none" => return Ok(ContextKind::None),
            _ => {}
        }
        if let Some(n) = arg("surrounding") {
            return n
                .parse()
                .map(ContextKind::Surrounding)
                .map_err(|_| format!("bad window size in `{s}`"));
        }
        if let Some(seed) = arg("random_nonvuln") {
            return seed
                .parse()
                .map(ContextKind::RandomNonvuln)
                .map_err(|_| format!("bad seed in `{s}`"));
        }
        Err(format!("unknown context kind `{s}`"))
    }
}

impl Serialize for ContextKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContextKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSelection {
    pub function_id: String,
    pub kind: ContextKind,
    pub context_indices: BTreeSet<usize>,
    pub vuln_indices: BTreeSet<usize>,
}

impl ContextSelection {
    fn new(record: &FunctionRecord, kind: ContextKind, context: BTreeSet<usize>) -> Self {
        debug_assert!(context.is_disjoint(&record.vuln_line_indices));
        debug_assert!(context.iter().all(|&i| !record.statements[i].is_cosmetic));
        ContextSelection {
            function_id: record.id.clone(),
            kind,
            context_indices: context,
            vuln_indices: record.vuln_line_indices.clone(),
        }
    }

    /// The same context with the vulnerable lines left out, for
    /// context-only inputs.
    pub fn without_vuln(mut self) -> Self {
        self.vuln_indices.clear();
        self
    }

    /// Audit line of the context dump: original line numbers per part.
    pub fn dump(&self, record: &FunctionRecord) -> ContextDump {
        let lines = |set: &BTreeSet<usize>| {
            set.iter()
                .map(|&i| record.statements[i].original_line_number)
                .collect()
        };
        ContextDump {
            function_id: self.function_id.clone(),
            kind: self.kind,
            vuln_lines: lines(&self.vuln_indices),
            context_lines: lines(&self.context_indices),
        }
    }
}

/// One line of the context dump file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDump {
    pub function_id: String,
    pub kind: ContextKind,
    pub vuln_lines: Vec<usize>,
    pub context_lines: Vec<usize>,
}

fn reach(adj: &[Vec<usize>], seeds: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut seen = vec![false; adj.len()];
    let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
    let mut out = BTreeSet::new();
    while let Some(n) = queue.pop_front() {
        for &m in &adj[n] {
            if !seen[m] {
                seen[m] = true;
                out.insert(m);
                queue.push_back(m);
            }
        }
    }
    out.retain(|i| !seeds.contains(i));
    out
}

/// Nodes from which some seed is reachable over one or more edges.
pub fn backward_slice(graph: &DependenceGraph, seeds: &BTreeSet<usize>) -> BTreeSet<usize> {
    reach(&graph.predecessors(), seeds)
}

/// Nodes reachable from some seed over one or more edges.
pub fn forward_slice(graph: &DependenceGraph, seeds: &BTreeSet<usize>) -> BTreeSet<usize> {
    reach(&graph.successors(), seeds)
}

/// Union of backward and forward slices of `vuln`, minus `vuln` and cosmetic nodes.
pub fn slice_indices(graph: &DependenceGraph, vuln: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut ctx = backward_slice(graph, vuln);
    ctx.extend(forward_slice(graph, vuln));
    ctx.retain(|i| {
        !vuln.contains(i) && graph.nodes[*i].kind != crate::depgraph::StatementKind::Cosmetic
    });
    ctx
}

pub fn program_slicing_context(
    record: &FunctionRecord,
    graph: &DependenceGraph,
) -> ContextSelection {
    let ctx = slice_indices(graph, &record.vuln_line_indices);
    ContextSelection::new(record, ContextKind::Ps, ctx)
}

pub fn surrounding_context(record: &FunctionRecord, n: usize) -> ContextSelection {
    let code: Vec<usize> = record
        .code_indices()
        .filter(|i| !record.is_vulnerable(*i))
        .collect();
    let mut ctx = BTreeSet::new();
    if n > 0 {
        for &v in &record.vuln_line_indices {
            let split = code.partition_point(|&i| i < v);
            ctx.extend(code[split.saturating_sub(n)..split].iter().copied());
            ctx.extend(code[split..(split + n).min(code.len())].iter().copied());
        }
    }
    ContextSelection::new(record, ContextKind::Surrounding(n), ctx)
}

pub fn function_context(record: &FunctionRecord) -> ContextSelection {
    let ctx: BTreeSet<usize> = record
        .code_indices()
        .filter(|i| !record.is_vulnerable(*i))
        .collect();
    if ctx.is_empty() {
        warn!("{}: function context is empty", record.id);
    }
    ContextSelection::new(record, ContextKind::Function, ctx)
}

pub fn random_nonvuln(record: &FunctionRecord, seed: u64) -> ContextSelection {
    let pool: Vec<usize> = record
        .code_indices()
        .filter(|i| !record.is_vulnerable(*i))
        .collect();
    let amount = record.vuln_line_indices.len().min(pool.len());
    let mut rng = seed::rng(seed);
    let ctx = index::sample(&mut rng, pool.len(), amount)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    ContextSelection::new(record, ContextKind::RandomNonvuln(seed), ctx)
}

pub fn residual_context(record: &FunctionRecord, ps: &ContextSelection) -> ContextSelection {
    let mut ctx = function_context(record).context_indices;
    ctx.retain(|i| !ps.context_indices.contains(i));
    ContextSelection::new(record, ContextKind::Residual, ctx)
}

pub fn no_context(record: &FunctionRecord) -> ContextSelection {
    ContextSelection::new(record, ContextKind::None, BTreeSet::new())
}

/// Compute any selection kind for a record.
pub fn select(
    record: &FunctionRecord,
    graph: &DependenceGraph,
    kind: ContextKind,
) -> ContextSelection {
    match kind {
        ContextKind::Ps => program_slicing_context(record, graph),
        ContextKind::Surrounding(n) => surrounding_context(record, n),
        ContextKind::Function => function_context(record),
        ContextKind::RandomNonvuln(s) => random_nonvuln(record, s),
        ContextKind::Residual => residual_context(record, &program_slicing_context(record, graph)),
        ContextKind::None => no_context(record),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyMode {
    Single,
    Double,
}

/// Model input text. In single mode everything lives in `part_vuln`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledInput {
    pub mode: AssemblyMode,
    pub part_vuln: String,
    pub part_context: String,
}

fn join_lines<'a>(record: &'a FunctionRecord, indices: impl Iterator<Item = &'a usize>) -> String {
    indices
        .map(|&i| record.statements[i].text.trim())
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn assemble_input(
    record: &FunctionRecord,
    selection: &ContextSelection,
    mode: AssemblyMode,
) -> AssembledInput {
    match mode {
        AssemblyMode::Single => {
            let merged: BTreeSet<usize> = selection
                .vuln_indices
                .union(&selection.context_indices)
                .copied()
                .collect();
            AssembledInput {
                mode,
                part_vuln: join_lines(record, merged.iter()),
                part_context: String::new(),
            }
        }
        AssemblyMode::Double => AssembledInput {
            mode,
            part_vuln: join_lines(record, selection.vuln_indices.iter()),
            part_context: join_lines(record, selection.context_indices.iter()),
        },
    }
}

/// Text of all code lines of a function.
pub fn whole_function_text(record: &FunctionRecord) -> String {
    let code: Vec<usize> = record.code_indices().collect();
    join_lines(record, code.iter())
}
