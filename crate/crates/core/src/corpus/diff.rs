//! Unified diff parsing.

use super::{CommitChange, CorpusError, DiffLine};

struct Hunk {
    old_line: usize,
    new_line: usize,
    old_left: usize,
    new_left: usize,
}

/// Parse `@@ -a[,b] +c[,d] @@` into (a, b, c, d).
fn parse_hunk_header(line: &str) -> Option<(usize, usize, usize, usize)> {
    let rest = line.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let mut parts = rest[..end].split(' ');
    let old = parts.next()?.strip_prefix('-')?;
    let new = parts.next()?.strip_prefix('+')?;
    if parts.next().is_some() {
        return None;
    }
    let range = |s: &str| -> Option<(usize, usize)> {
        match s.split_once(',') {
            Some((start, len)) => Some((start.parse().ok()?, len.parse().ok()?)),
            None => Some((s.parse().ok()?, 1)),
        }
    };
    let (a, b) = range(old)?;
    let (c, d) = range(new)?;
    Some((a, b, c, d))
}

fn strip_path(raw: &str) -> Option<String> {
    let raw = raw.split('\t').next().unwrap_or(raw).trim();
    if raw == "/dev/null" {
        return None;
    }
    let path = raw
        .strip_prefix("a/")
        .or_else(|| raw.strip_prefix("b/"))
        .unwrap_or(raw);
    Some(path.to_string())
}

/// True when any path segment is `test` or `tests`, ignoring case.
pub fn is_test_path(path: &str) -> bool {
    path.split(['/', '\\'])
        .any(|seg| seg.eq_ignore_ascii_case("test") || seg.eq_ignore_ascii_case("tests"))
}

/// Parse a unified diff (as produced by `git diff`/`git show`) into one
/// [`CommitChange`] per changed file. A `commit <id>` header line, when
/// present, sets the commit id of the files that follow it.
pub fn parse_unified_diff(diff_text: &str) -> Result<Vec<CommitChange>, CorpusError> {
    let mut changes: Vec<CommitChange> = Vec::new();
    let mut current: Option<CommitChange> = None;
    let mut hunk: Option<Hunk> = None;
    let mut commit_id = String::new();
    let mut pending_old: Option<String> = None;

    let finish = |current: &mut Option<CommitChange>, changes: &mut Vec<CommitChange>| {
        if let Some(c) = current.take() {
            if !c.deleted_lines.is_empty() || !c.added_lines.is_empty() {
                changes.push(c);
            }
        }
    };

    for (idx, line) in diff_text.lines().enumerate() {
        let line_no = idx + 1;
        if let Some(h) = hunk.as_mut() {
            if h.old_left > 0 || h.new_left > 0 {
                let change = current.as_mut().expect("hunk without file");
                let (marker, text) = match line.chars().next() {
                    Some(m @ (' ' | '-' | '+')) => (m, &line[1..]),
                    Some('\\') => continue,
                    // some tools strip the single space of empty context lines
                    None => (' ', ""),
                    Some(_) => {
                        return Err(CorpusError::MalformedHunk {
                            line: line_no,
                            text: format!("hunk body ended early at `{line}`"),
                        })
                    }
                };
                match marker {
                    '-' if h.old_left > 0 => {
                        change.deleted_lines.push(DiffLine::new(h.old_line, text));
                        h.old_line += 1;
                        h.old_left -= 1;
                    }
                    '+' if h.new_left > 0 => {
                        let mut added = DiffLine::new(h.new_line, text);
                        added.old_anchor = Some(h.old_line);
                        change.added_lines.push(added);
                        h.new_line += 1;
                        h.new_left -= 1;
                    }
                    ' ' if h.old_left > 0 && h.new_left > 0 => {
                        change.context_lines.push(DiffLine::new(h.old_line, text));
                        h.old_line += 1;
                        h.new_line += 1;
                        h.old_left -= 1;
                        h.new_left -= 1;
                    }
                    _ => {
                        return Err(CorpusError::MalformedHunk {
                            line: line_no,
                            text: format!("line `{line}` exceeds the hunk's declared length"),
                        })
                    }
                }
                continue;
            }
            hunk = None;
        }

        if let Some(rest) = line.strip_prefix("commit ") {
            finish(&mut current, &mut changes);
            commit_id = rest.split_whitespace().next().unwrap_or("").to_string();
        } else if let Some(rest) = line.strip_prefix("diff --git ") {
            finish(&mut current, &mut changes);
            let path = rest
                .rsplit_once(" b/")
                .map(|(_, p)| p.to_string())
                .unwrap_or_else(|| rest.to_string());
            current = Some(CommitChange {
                commit_id: commit_id.clone(),
                is_test_file: is_test_path(&path),
                file_path: path,
                ..CommitChange::default()
            });
            pending_old = None;
        } else if let Some(rest) = line.strip_prefix("--- ") {
            pending_old = strip_path(rest);
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            let path = strip_path(rest).or_else(|| pending_old.take());
            let needs_new = current
                .as_ref()
                .is_none_or(|c| !c.deleted_lines.is_empty() || !c.added_lines.is_empty());
            if needs_new {
                finish(&mut current, &mut changes);
                current = Some(CommitChange {
                    commit_id: commit_id.clone(),
                    ..CommitChange::default()
                });
            }
            if let (Some(c), Some(p)) = (current.as_mut(), path) {
                c.is_test_file = is_test_path(&p);
                c.file_path = p;
            }
        } else if line.starts_with("@@") {
            let (old_start, old_len, new_start, new_len) =
                parse_hunk_header(line).ok_or_else(|| CorpusError::MalformedHunk {
                    line: line_no,
                    text: line.to_string(),
                })?;
            if current.is_none() {
                return Err(CorpusError::MalformedHunk {
                    line: line_no,
                    text: format!("hunk `{line}` before any file header"),
                });
            }
            // a zero-length range names the line before the change
            let old_line = if old_len == 0 {
                old_start + 1
            } else {
                old_start
            };
            let new_line = if new_len == 0 {
                new_start + 1
            } else {
                new_start
            };
            hunk = Some(Hunk {
                old_line,
                new_line,
                old_left: old_len,
                new_left: new_len,
            });
        }
    }
    if let Some(h) = &hunk {
        if h.old_left > 0 || h.new_left > 0 {
            return Err(CorpusError::MalformedHunk {
                line: diff_text.lines().count(),
                text: "diff ended inside a hunk".into(),
            });
        }
    }
    finish(&mut current, &mut changes);
    Ok(changes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PREAMBLE: &str = "\
commit b38a1b3
diff --git a/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java b/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java
--- a/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java
+++ b/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java
@@ -5,7 +5,7 @@ protected String getExecutionPreamble()
     String dir = getWorkingDirectoryAsString();
     StringBuilder sb = new StringBuilder();
     sb.append(\"cd\");
-    sb.append(unifyQuotes(dir));
+    sb.append(quoteOneItem(dir, false));
     sb.append(\"&&\");
     return sb.toString();
 }
";

    #[test]
    fn preamble_fix() {
        let changes = parse_unified_diff(PREAMBLE).unwrap();
        assert_eq!(changes.len(), 1);
        let c = &changes[0];
        assert_eq!(c.commit_id, "b38a1b3");
        assert!(!c.is_test_file);
        assert_eq!(
            c.deleted_lines,
            vec![DiffLine::new(8, "    sb.append(unifyQuotes(dir));")]
        );
        assert_eq!(c.added_lines.len(), 1);
        assert_eq!(
            c.added_lines[0].text.trim(),
            "sb.append(quoteOneItem(dir, false));"
        );
        assert_eq!(c.added_lines[0].line_number, 8);
        assert_eq!(c.added_lines[0].old_anchor, Some(9));
        assert_eq!(c.context_lines.len(), 6);
    }

    #[test]
    fn empty_diff() {
        assert!(parse_unified_diff("").unwrap().is_empty());
    }

    #[test]
    fn two_hunk_offsets() {
        // Hand trace:
        //   hunk 1 (-3,4 +3,4): a old3/new3, -b old4, +B new4, c old5/new5, -d old6, +D new6
        //   hunk 2 (-20,2 +20,3): x old20/new20, +y new21 (before old21), z old21/new22
        let diff = "\
--- a/Foo.java
+++ b/Foo.java
@@ -3,4 +3,4 @@
 a
-b
+B
 c
-d
+D
@@ -20,2 +20,3 @@ void m()
 x
+y
 z
";
        let c = &parse_unified_diff(diff).unwrap()[0];
        let nums = |v: &[DiffLine]| v.iter().map(|l| l.line_number).collect::<Vec<_>>();
        assert_eq!(nums(&c.deleted_lines), [4, 6]);
        assert_eq!(nums(&c.added_lines), [4, 6, 21]);
        assert_eq!(nums(&c.context_lines), [3, 5, 20, 21]);
        assert_eq!(c.added_lines[2].old_anchor, Some(21));
    }

    #[test]
    fn malformed_header_names_line() {
        let diff = "--- a/F.java\n+++ b/F.java\n@@ -x,2 +1,2 @@\n";
        assert_eq!(
            parse_unified_diff(diff).unwrap_err(),
            CorpusError::MalformedHunk {
                line: 3,
                text: "@@ -x,2 +1,2 @@".into()
            }
        );
    }

    #[test]
    fn truncated_hunk_is_an_error() {
        let diff = "--- a/F.java\n+++ b/F.java\n@@ -1,3 +1,3 @@\n a\n";
        assert!(parse_unified_diff(diff).is_err());
    }

    #[test]
    fn multiple_files_and_test_detection() {
        let diff = "\
diff --git a/src/A.java b/src/A.java
--- a/src/A.java
+++ b/src/A.java
@@ -1 +1 @@
-old
+new
diff --git a/src/Test/ATest.java b/src/Test/ATest.java
--- a/src/Test/ATest.java
+++ b/src/Test/ATest.java
@@ -1,0 +2 @@
+added
";
        let changes = parse_unified_diff(diff).unwrap();
        assert_eq!(changes.len(), 2);
        assert_eq!(changes[0].file_path, "src/A.java");
        assert!(!changes[0].is_test_file);
        assert!(changes[1].is_test_file);
        assert_eq!(changes[1].added_lines[0].line_number, 2);
        assert_eq!(changes[1].added_lines[0].old_anchor, Some(2));
    }

    #[test]
    fn test_paths() {
        assert!(is_test_path("module/tests/Foo.java"));
        assert!(is_test_path("TEST/Foo.java"));
        assert!(!is_test_path("src/main/FooTest.java"));
        assert!(!is_test_path("src/testing/Foo.java"));
    }
}
