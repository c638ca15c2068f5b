//! CVSS label manifest and the label join.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{CorpusError, CvssLabelSet, CvssTask, FunctionRecord, VulnerableFunction};
use crate::io;

pub type Manifest = BTreeMap<String, CvssLabelSet>;

#[derive(Deserialize)]
struct RawEntry {
    access_vector: Option<String>,
    access_complexity: Option<String>,
    authentication: Option<String>,
    confidentiality: Option<String>,
    integrity: Option<String>,
    availability: Option<String>,
    severity: Option<String>,
}

fn validate(commit: &str, raw: RawEntry) -> Result<CvssLabelSet, CorpusError> {
    let take = |value: Option<String>, task: CvssTask| match value {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(CorpusError::MissingLabel {
            commit: commit.to_string(),
            field: task.name(),
        }),
    };
    Ok(CvssLabelSet {
        access_vector: take(raw.access_vector, CvssTask::AccessVector)?,
        access_complexity: take(raw.access_complexity, CvssTask::AccessComplexity)?,
        authentication: take(raw.authentication, CvssTask::Authentication)?,
        confidentiality: take(raw.confidentiality, CvssTask::Confidentiality)?,
        integrity: take(raw.integrity, CvssTask::Integrity)?,
        availability: take(raw.availability, CvssTask::Availability)?,
        severity: take(raw.severity, CvssTask::Severity)?,
    })
}

/// Parse a manifest (`{commit_id: {seven string fields}}`), validating every entry.
pub fn parse_manifest(json: &str) -> Result<Manifest, CorpusError> {
    let raw: BTreeMap<String, RawEntry> =
        serde_json::from_str(json).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    raw.into_iter()
        .map(|(commit, entry)| {
            let labels = validate(&commit, entry)?;
            Ok((commit, labels))
        })
        .collect()
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let text = io::read_to_string(path).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    parse_manifest(&text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelJoin {
    pub records: Vec<FunctionRecord>,
    pub dropped: usize,
}

/// Attach manifest labels; functions whose commit has no entry are dropped.
pub fn attach_labels(
    functions: Vec<VulnerableFunction>,
    manifest: &Manifest,
) -> Result<LabelJoin, CorpusError> {
    let mut join = LabelJoin {
        records: Vec::with_capacity(functions.len()),
        dropped: 0,
    };
    for f in functions {
        match manifest.get(&f.commit_id) {
            Some(labels) => join.records.push(f.with_labels(labels.clone())?),
            None => join.dropped += 1,
        }
    }
    Ok(join)
}
