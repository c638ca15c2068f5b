//! Commit mining and dataset curation.
//!
//! Vulnerability-fixing commits arrive as unified diffs. Every function of a
//! changed (non-test) file that loses at least one non-cosmetic line becomes a
//! vulnerable function, and its deleted lines become the vulnerable
//! statements. CVSS labels are joined in from a manifest keyed by commit id.

mod cosmetic;
mod diff;
mod extract;
mod kappa;
mod labels;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cosmetic::{is_cosmetic_line, CommentState};
pub use diff::{is_test_path, parse_unified_diff};
pub use extract::{
    extract_vulnerable_functions, filter_vfc, mine_commit, ExclusionReason, Extraction,
    FunctionBoundary, MinedCommit, RejectReason, VfcVerdict, MAX_CHANGED_LINES, MAX_FILES,
};
pub use kappa::cohen_kappa;
pub use labels::{attach_labels, load_manifest, parse_manifest, LabelJoin, Manifest};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CorpusError {
    #[error("line {line}: malformed hunk header `{text}`")]
    MalformedHunk { line: usize, text: String },
    #[error("manifest entry for commit `{commit}` is missing `{field}`")]
    MissingLabel { commit: String, field: &'static str },
    #[error("invalid function record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("annotation lists must be non-empty and of equal length (got {0} and {1})")]
    AnnotationLength(usize, usize),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// One line of a diff, numbered in the pre-change file for deletions and
/// context, and in the post-change file for additions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub line_number: usize,
    pub text: String,
    /// For added lines: the pre-change line the addition is inserted before.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_anchor: Option<usize>,
}

impl DiffLine {
    pub fn new(line_number: usize, text: impl Into<String>) -> Self {
        DiffLine {
            line_number,
            text: text.into(),
            old_anchor: None,
        }
    }
}

/// The changes a commit made to one file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommitChange {
    pub commit_id: String,
    pub file_path: String,
    pub is_test_file: bool,
    pub deleted_lines: Vec<DiffLine>,
    pub added_lines: Vec<DiffLine>,
    /// Unchanged lines shown by the diff, numbered in the pre-change file.
    #[serde(default)]
    pub context_lines: Vec<DiffLine>,
}

impl CommitChange {
    pub fn changed_line_count(&self) -> usize {
        self.deleted_lines.len() + self.added_lines.len()
    }
}

/// One physical line of a vulnerable function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub original_line_number: usize,
    pub text: String,
    pub is_cosmetic: bool,
}

/// The seven CVSS v2 base metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvssTask {
    AccessVector,
    AccessComplexity,
    Authentication,
    Confidentiality,
    Integrity,
    Availability,
    Severity,
}

impl CvssTask {
    pub const ALL: [CvssTask; 7] = [
        CvssTask::AccessVector,
        CvssTask::AccessComplexity,
        CvssTask::Authentication,
        CvssTask::Confidentiality,
        CvssTask::Integrity,
        CvssTask::Availability,
        CvssTask::Severity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CvssTask::AccessVector => "access_vector",
            CvssTask::AccessComplexity => "access_complexity",
            CvssTask::Authentication => "authentication",
            CvssTask::Confidentiality => "confidentiality",
            CvssTask::Integrity => "integrity",
            CvssTask::Availability => "availability",
            CvssTask::Severity => "severity",
        }
    }

    /// Human-readable row title used in rendered tables.
    pub fn title(self) -> &'static str {
        match self {
            CvssTask::AccessVector => "Access Vector",
            CvssTask::AccessComplexity => "Access Complexity",
            CvssTask::Authentication => "Authentication",
            CvssTask::Confidentiality => "Confidentiality",
            CvssTask::Integrity => "Integrity",
            CvssTask::Availability => "Availability",
            CvssTask::Severity => "Severity",
        }
    }
}

impl fmt::Display for CvssTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CvssTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CvssTask::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown CVSS task `{s}`"))
    }
}

/// Categorical labels of the seven base metrics. Values are opaque strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CvssLabelSet {
    pub access_vector: String,
    pub access_complexity: String,
    pub authentication: String,
    pub confidentiality: String,
    pub integrity: String,
    pub availability: String,
    pub severity: String,
}

impl CvssLabelSet {
    pub fn get(&self, task: CvssTask) -> &str {
        match task {
            CvssTask::AccessVector => &self.access_vector,
            CvssTask::AccessComplexity => &self.access_complexity,
            CvssTask::Authentication => &self.authentication,
            CvssTask::Confidentiality => &self.confidentiality,
            CvssTask::Integrity => &self.integrity,
            CvssTask::Availability => &self.availability,
            CvssTask::Severity => &self.severity,
        }
    }

    /// The first empty field, if any.
    pub fn first_missing(&self) -> Option<CvssTask> {
        CvssTask::ALL
            .into_iter()
            .find(|t| self.get(*t).trim().is_empty())
    }
}

/// A vulnerable function before labels are attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerableFunction {
    pub id: String,
    pub project: String,
    pub commit_id: String,
    pub statements: Vec<Statement>,
    pub vuln_line_indices: BTreeSet<usize>,
}

impl VulnerableFunction {
    pub fn with_labels(self, labels: CvssLabelSet) -> Result<FunctionRecord, CorpusError> {
        FunctionRecord::new(
            self.id,
            self.project,
            self.commit_id,
            self.statements,
            self.vuln_line_indices,
            labels,
        )
    }
}

/// One labeled vulnerable function, the unit of analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawFunctionRecord")]
pub struct FunctionRecord {
    pub id: String,
    pub project: String,
    pub commit_id: String,
    pub statements: Vec<Statement>,
    pub vuln_line_indices: BTreeSet<usize>,
    pub labels: CvssLabelSet,
}

#[derive(Deserialize)]
struct RawFunctionRecord {
    id: String,
    project: String,
    commit_id: String,
    statements: Vec<Statement>,
    vuln_line_indices: BTreeSet<usize>,
    labels: CvssLabelSet,
}

impl TryFrom<RawFunctionRecord> for FunctionRecord {
    type Error = CorpusError;

    fn try_from(raw: RawFunctionRecord) -> Result<Self, Self::Error> {
        FunctionRecord::new(
            raw.id,
            raw.project,
            raw.commit_id,
            raw.statements,
            raw.vuln_line_indices,
            raw.labels,
        )
    }
}

impl FunctionRecord {
    /// Build a record, checking the dataset invariants.
    pub fn new(
        id: String,
        project: String,
        commit_id: String,
        statements: Vec<Statement>,
        vuln_line_indices: BTreeSet<usize>,
        labels: CvssLabelSet,
    ) -> Result<Self, CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidRecord {
            id: id.clone(),
            reason,
        };
        if vuln_line_indices.is_empty() {
            return Err(invalid("no vulnerable statements".into()));
        }
        for &i in &vuln_line_indices {
            match statements.get(i) {
                None => return Err(invalid(format!("vulnerable index {i} out of range"))),
                Some(s) if s.is_cosmetic => {
                    return Err(invalid(format!("vulnerable index {i} is cosmetic")))
                }
                Some(_) => {}
            }
        }
        let code_lines = statements.iter().filter(|s| !s.is_cosmetic).count();
        if code_lines <= vuln_line_indices.len() {
            return Err(invalid("no non-vulnerable code statement".into()));
        }
        if let Some(task) = labels.first_missing() {
            return Err(invalid(format!("label `{task}` is empty")));
        }
        Ok(FunctionRecord {
            id,
            project,
            commit_id,
            statements,
            vuln_line_indices,
            labels,
        })
    }

    pub fn is_vulnerable(&self, index: usize) -> bool {
        self.vuln_line_indices.contains(&index)
    }

    pub fn label(&self, task: CvssTask) -> &str {
        self.labels.get(task)
    }

    /// Indices of the code (non-cosmetic) statements.
    pub fn code_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.statements
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_cosmetic)
            .map(|(i, _)| i)
    }
}

/// Share of code lines that are vulnerable over a set of records.
pub fn vulnerable_line_ratio(records: &[FunctionRecord]) -> f64 {
    let (vuln, code) = records.iter().fold((0usize, 0usize), |(v, c), r| {
        (v + r.vuln_line_indices.len(), c + r.code_indices().count())
    });
    if code == 0 {
        0.0
    } else {
        vuln as f64 / code as f64
    }
}

#[cfg(test)]
pub(crate) fn test_labels(value: &str) -> CvssLabelSet {
    CvssLabelSet {
        access_vector: value.into(),
        access_complexity: value.into(),
        authentication: value.into(),
        confidentiality: value.into(),
        integrity: value.into(),
        availability: value.into(),
        severity: value.into(),
    }
}
