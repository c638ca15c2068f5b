//! Commit filtering and vulnerable function extraction.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{CommentState, CommitChange, DiffLine, Statement, VulnerableFunction};

/// Commits touching more files than this are treated as tangled.
pub const MAX_FILES: usize = 100;
/// Commits changing more lines (deleted + added) than this are treated as tangled.
pub const MAX_CHANGED_LINES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooManyFiles,
    TooManyLines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfcVerdict {
    Accept,
    Reject(RejectReason),
}

/// Reject tangled commits by size.
pub fn filter_vfc(changes: &[CommitChange]) -> VfcVerdict {
    if changes.len() > MAX_FILES {
        return VfcVerdict::Reject(RejectReason::TooManyFiles);
    }
    let lines: usize = changes.iter().map(CommitChange::changed_line_count).sum();
    if lines > MAX_CHANGED_LINES {
        return VfcVerdict::Reject(RejectReason::TooManyLines);
    }
    VfcVerdict::Accept
}

/// A function's extent in the pre-change file, 1-based and inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionBoundary {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    OnlyAdditions,
    CosmeticOnly,
    EntireBodyDeleted,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub functions: Vec<VulnerableFunction>,
    pub excluded: Vec<(String, ExclusionReason)>,
    /// Deleted lines outside every function boundary.
    pub orphans: Vec<DiffLine>,
}

/// Extract the vulnerable functions of one changed file.
///
/// `pre_change_source` is the full pre-change file, one entry per line. When
/// it is absent, function text is rebuilt from the diff's context and
/// deleted lines, so lines the diff does not show are missing from the
/// statements.
pub fn extract_vulnerable_functions(
    change: &CommitChange,
    boundaries: &[FunctionBoundary],
    project: &str,
    pre_change_source: Option<&[String]>,
) -> Extraction {
    let mut out = Extraction::default();
    if change.is_test_file {
        return out;
    }
    let known: BTreeMap<usize, &str> = match pre_change_source {
        Some(lines) => lines
            .iter()
            .enumerate()
            .map(|(i, l)| (i + 1, l.as_str()))
            .collect(),
        None => change
            .context_lines
            .iter()
            .chain(&change.deleted_lines)
            .map(|l| (l.line_number, l.text.as_str()))
            .collect(),
    };
    let deleted: BTreeSet<usize> = change.deleted_lines.iter().map(|l| l.line_number).collect();
    let inside = |line: usize| boundaries.iter().any(|b| b.start <= line && line <= b.end);
    out.orphans = change
        .deleted_lines
        .iter()
        .filter(|l| !inside(l.line_number))
        .cloned()
        .collect();
    if !out.orphans.is_empty() {
        debug!(
            "{}: {} deleted line(s) outside every function",
            change.file_path,
            out.orphans.len()
        );
    }

    for b in boundaries {
        let has_deleted = deleted.range(b.start..=b.end).next().is_some();
        if !has_deleted {
            let has_added = change
                .added_lines
                .iter()
                .filter_map(|l| l.old_anchor)
                .any(|a| b.start < a && a <= b.end);
            if has_added {
                out.excluded
                    .push((b.name.clone(), ExclusionReason::OnlyAdditions));
            }
            continue;
        }

        let mut state = CommentState::new();
        let mut statements = Vec::new();
        let mut vuln = BTreeSet::new();
        let mut missing = 0usize;
        for line in b.start..=b.end {
            let Some(text) = known.get(&line) else {
                missing += 1;
                continue;
            };
            let is_cosmetic = state.classify(text);
            if deleted.contains(&line) && !is_cosmetic {
                vuln.insert(statements.len());
            }
            statements.push(Statement {
                original_line_number: line,
                text: (*text).to_string(),
                is_cosmetic,
            });
        }
        if missing > 0 {
            warn!(
                "{}:{}: {missing} line(s) of the function are not in the diff",
                change.file_path, b.name
            );
        }
        if vuln.is_empty() {
            out.excluded
                .push((b.name.clone(), ExclusionReason::CosmeticOnly));
            continue;
        }
        let code_lines = statements.iter().filter(|s| !s.is_cosmetic).count();
        if code_lines == vuln.len() {
            out.excluded
                .push((b.name.clone(), ExclusionReason::EntireBodyDeleted));
            continue;
        }
        out.functions.push(VulnerableFunction {
            id: format!(
                "{}:{}:{}:{}",
                change.commit_id, change.file_path, b.name, b.start
            ),
            project: project.to_string(),
            commit_id: change.commit_id.clone(),
            statements,
            vuln_line_indices: vuln,
        });
    }
    out
}

/// Outcome of mining one commit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MinedCommit {
    pub rejected: Option<RejectReason>,
    pub functions: Vec<VulnerableFunction>,
    pub excluded: Vec<(String, ExclusionReason)>,
    pub orphans: usize,
    pub test_files_skipped: usize,
}

/// Filter one commit and extract its vulnerable functions. `boundaries` and
/// `sources` are keyed by file path.
pub fn mine_commit(
    changes: &[CommitChange],
    boundaries: &BTreeMap<String, Vec<FunctionBoundary>>,
    sources: &BTreeMap<String, Vec<String>>,
    project: &str,
) -> MinedCommit {
    let mut mined = MinedCommit::default();
    if let VfcVerdict::Reject(reason) = filter_vfc(changes) {
        mined.rejected = Some(reason);
        return mined;
    }
    for change in changes {
        if change.is_test_file {
            mined.test_files_skipped += 1;
            continue;
        }
        let Some(bounds) = boundaries.get(&change.file_path) else {
            warn!("no function boundaries for {}", change.file_path);
            mined.orphans += change.deleted_lines.len();
            continue;
        };
        let source = sources.get(&change.file_path).map(Vec::as_slice);
        let ex = extract_vulnerable_functions(change, bounds, project, source);
        mined.orphans += ex.orphans.len();
        mined.functions.extend(ex.functions);
        mined.excluded.extend(ex.excluded);
    }
    mined
}

#[cfg(test)]
mod tests {
    use super::*;

    fn change_with(files: usize, lines_per_file: usize) -> Vec<CommitChange> {
        (0..files)
            .map(|f| CommitChange {
                commit_id: "c".into(),
                file_path: format!("F{f}.java"),
                deleted_lines: (0..lines_per_file)
                    .map(|i| DiffLine::new(i + 1, "x();"))
                    .collect(),
                ..CommitChange::default()
            })
            .collect()
    }

    #[test]
    fn tangled_commit_thresholds() {
        let mut many_files = change_with(101, 0);
        many_files[0].deleted_lines = (0..50).map(|i| DiffLine::new(i + 1, "x")).collect();
        assert_eq!(
            filter_vfc(&many_files),
            VfcVerdict::Reject(RejectReason::TooManyFiles)
        );
        let mut big = change_with(2, 5000);
        big[1].added_lines.push(DiffLine::new(1, "y"));
        assert_eq!(
            filter_vfc(&big),
            VfcVerdict::Reject(RejectReason::TooManyLines)
        );
        assert_eq!(filter_vfc(&change_with(1, 2)), VfcVerdict::Accept);
        assert_eq!(filter_vfc(&change_with(100, 100)), VfcVerdict::Accept);
    }

    fn source(lines: &[&str]) -> Vec<String> {
        lines.iter().map(|s| s.to_string()).collect()
    }

    fn bound(name: &str, start: usize, end: usize) -> FunctionBoundary {
        FunctionBoundary {
            name: name.into(),
            start,
            end,
        }
    }

    #[test]
    fn exclusion_rules() {
        let src = source(&[
            "void a() {", // 1
            "  x = 1;",   // 2
            "  y = 2;",   // 3
            "}",          // 4
            "void b() {", // 5
            "  // note",  // 6
            "  z = 3;",   // 7
            "}",          // 8
            "void c() {", // 9
            "  w = 4;",   // 10
            "}",          // 11
            "int f;",     // 12
        ]);
        let change = CommitChange {
            commit_id: "c1".into(),
            file_path: "A.java".into(),
            deleted_lines: vec![
                DiffLine::new(2, "  x = 1;"),
                DiffLine::new(6, "  // note"),
                DiffLine::new(9, "void c() {"),
                DiffLine::new(10, "  w = 4;"),
                DiffLine::new(11, "}"),
                DiffLine::new(12, "int f;"),
            ],
            added_lines: vec![DiffLine {
                line_number: 3,
                text: "  q();".into(),
                old_anchor: Some(7),
            }],
            ..CommitChange::default()
        };
        let bounds = [bound("a", 1, 4), bound("b", 5, 8), bound("c", 9, 11)];
        let ex = extract_vulnerable_functions(&change, &bounds, "p", Some(&src));
        assert_eq!(ex.functions.len(), 1);
        let f = &ex.functions[0];
        assert_eq!(f.id, "c1:A.java:a:1");
        assert_eq!(f.vuln_line_indices, [1].into());
        assert_eq!(f.statements.len(), 4);
        assert_eq!(
            ex.excluded,
            vec![
                ("b".to_string(), ExclusionReason::CosmeticOnly),
                ("c".to_string(), ExclusionReason::EntireBodyDeleted),
            ]
        );
        assert_eq!(ex.orphans, vec![DiffLine::new(12, "int f;")]);
    }

    #[test]
    fn additions_only_function_is_excluded() {
        let src = source(&["void a() {", "  x = 1;", "}"]);
        let change = CommitChange {
            commit_id: "c".into(),
            file_path: "A.java".into(),
            added_lines: vec![DiffLine {
                line_number: 3,
                text: "  check();".into(),
                old_anchor: Some(3),
            }],
            ..CommitChange::default()
        };
        let ex = extract_vulnerable_functions(&change, &[bound("a", 1, 3)], "p", Some(&src));
        assert!(ex.functions.is_empty());
        assert_eq!(
            ex.excluded,
            vec![("a".to_string(), ExclusionReason::OnlyAdditions)]
        );
    }

    #[test]
    fn test_files_yield_nothing() {
        let change = CommitChange {
            is_test_file: true,
            deleted_lines: vec![DiffLine::new(2, "x();")],
            ..CommitChange::default()
        };
        let ex = extract_vulnerable_functions(&change, &[bound("t", 1, 3)], "p", None);
        assert_eq!(ex, Extraction::default());
    }

    #[test]
    fn comment_lines_inside_block_are_never_vulnerable() {
        let src = source(&[
            "void a() {",
            "  /* begin",
            "  x = 1;",
            "  */",
            "  y();",
            "  z();",
            "}",
        ]);
        let change = CommitChange {
            commit_id: "c".into(),
            file_path: "A.java".into(),
            deleted_lines: vec![DiffLine::new(3, "  x = 1;"), DiffLine::new(5, "  y();")],
            ..CommitChange::default()
        };
        let ex = extract_vulnerable_functions(&change, &[bound("a", 1, 7)], "p", Some(&src));
        let f = &ex.functions[0];
        assert!(f.statements[2].is_cosmetic);
        assert_eq!(f.vuln_line_indices, [4].into());
    }
}
