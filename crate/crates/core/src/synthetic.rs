//! Synthetic vulnerable functions with planted label signals.
//!
//! Every function carries one vulnerable line. The severity label is encoded
//! by a marker identifier that appears on the vulnerable line and nowhere
//! else; the access vector label by a marker on one other code line. The
//! remaining labels are drawn independently of the code.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{is_cosmetic_line, CvssLabelSet, FunctionRecord, Statement};
use crate::seed;

pub const SEVERITY_MARKERS: [(&str, &str); 3] = [
    ("LOW", "sevLow"),
    ("MEDIUM", "sevMedium"),
    ("HIGH", "sevHigh"),
];
pub const ACCESS_VECTOR_MARKERS: [(&str, &str); 2] =
    [("NETWORK", "avNetwork"), ("LOCAL", "avLocal")];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub functions: usize,
    pub min_lines: usize,
    pub max_lines: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            functions: 400,
            min_lines: 10,
            max_lines: 40,
            seed: 7,
        }
    }
}

const VARS: [&str; 12] = [
    "buf", "len", "idx", "count", "path", "data", "offset", "name", "size", "node", "flag", "value",
];
const CALLS: [&str; 10] = [
    "read", "check", "update", "parse", "flush", "resolve", "encode", "lookup", "append", "close",
];
const RECEIVERS: [&str; 5] = ["reader", "session", "cache", "stream", "ctx"];
const COMMENTS: [&str; 3] = ["// keep going", "/* fast path */", "// TODO tidy"];

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().unwrap()
}

fn plain_line<R: Rng>(rng: &mut R, defined: &mut Vec<&'static str>) -> String {
    let v = pick(rng, &VARS);
    let u = defined.choose(rng).copied().unwrap_or("arg");
    let (line, defines) = match rng.gen_range(0..5) {
        0 => (format!("int {v} = {u} + {};", rng.gen_range(1..9)), true),
        1 => (
            format!("{}.{}({u});", pick(rng, &RECEIVERS), pick(rng, &CALLS)),
            false,
        ),
        2 => (
            format!("{v} = {}({u}, {});", pick(rng, &CALLS), rng.gen_range(0..4)),
            true,
        ),
        3 => (
            format!(
                "String {v} = {}.{}();",
                pick(rng, &RECEIVERS),
                pick(rng, &CALLS)
            ),
            true,
        ),
        _ => (format!("{u}++;"), false),
    };
    if defines {
        defined.push(v);
    }
    line
}

/// Code of one function, with the positions of the vulnerable line and the
/// access-vector line. Brace and signature lines are never chosen.
fn body<R: Rng>(rng: &mut R, total: usize, index: usize) -> (Vec<String>, usize, usize) {
    let mut defined = vec!["arg"];
    let mut lines = vec![format!("public void handle{index}(int arg) {{")];
    let mut candidates = Vec::new();
    let mut open_blocks = 0usize;
    while lines.len() + open_blocks + 1 < total {
        let remaining = total - lines.len() - open_blocks - 1;
        let roll = if remaining <= 2usize.saturating_sub(candidates.len()) {
            9
        } else {
            rng.gen_range(0..10)
        };
        if roll == 0 {
            lines.push(pick(rng, &COMMENTS).to_string());
        } else if roll == 1 && remaining >= 3 {
            let u = defined.choose(rng).copied().unwrap();
            lines.push(format!("if ({u} > {}) {{", rng.gen_range(0..9)));
            open_blocks += 1;
        } else if roll == 2 && open_blocks > 0 {
            lines.push("}".into());
            open_blocks -= 1;
        } else {
            candidates.push(lines.len());
            lines.push(plain_line(rng, &mut defined));
        }
    }
    for _ in 0..open_blocks {
        lines.push("}".into());
    }
    lines.push("}".into());
    let chosen: Vec<usize> = candidates.choose_multiple(rng, 2).copied().collect();
    (lines, chosen[0], chosen[1])
}

fn with_marker(line: &str, marker: &str) -> String {
    let base = line.trim_end_matches(';');
    if let Some(stripped) = base.strip_suffix(')') {
        if stripped.ends_with('(') {
            format!("{stripped}{marker});")
        } else {
            format!("{stripped}, {marker});")
        }
    } else if base.ends_with("++") {
        format!("{line} sink({marker});")
    } else {
        format!("{base} + {marker}.length;")
    }
}

pub fn generate(config: &SyntheticConfig) -> Vec<FunctionRecord> {
    assert!(config.min_lines >= 6 && config.min_lines <= config.max_lines);
    let mut rng = seed::rng(config.seed);
    (0..config.functions)
        .map(|i| {
            let total = rng.gen_range(config.min_lines..=config.max_lines);
            let (mut lines, vuln, av_line) = body(&mut rng, total, i);
            let (severity, sev_marker) = *SEVERITY_MARKERS.choose(&mut rng).unwrap();
            let (access_vector, av_marker) = *ACCESS_VECTOR_MARKERS.choose(&mut rng).unwrap();
            lines[vuln] = with_marker(&lines[vuln], sev_marker);
            lines[av_line] = with_marker(&lines[av_line], av_marker);
            let labels = CvssLabelSet {
                access_vector: access_vector.into(),
                access_complexity: pick(&mut rng, &["LOW", "MEDIUM", "HIGH"]).into(),
                authentication: pick(&mut rng, &["NONE", "SINGLE"]).into(),
                confidentiality: pick(&mut rng, &["NONE", "PARTIAL", "COMPLETE"]).into(),
                integrity: pick(&mut rng, &["NONE", "PARTIAL", "COMPLETE"]).into(),
                availability: pick(&mut rng, &["NONE", "PARTIAL", "COMPLETE"]).into(),
                severity: severity.into(),
            };
            let statements = lines
                .iter()
                .enumerate()
                .map(|(n, text)| Statement {
                    original_line_number: n + 1,
                    text: text.clone(),
                    is_cosmetic: is_cosmetic_line(text),
                })
                .collect();
            FunctionRecord::new(
                format!("synth-{i:04}"),
                format!("project-{}", i % 8),
                format!("commit-{i:04}"),
                statements,
                [vuln].into(),
                labels,
            )
            .expect("generated records are valid")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::tokenize;

    #[test]
    fn markers_are_planted_where_claimed() {
        let records = generate(&SyntheticConfig::default());
        assert_eq!(records.len(), 400);
        for r in &records {
            assert!(
                (10..=40).contains(&r.statements.len()),
                "{}",
                r.statements.len()
            );
            let sev = SEVERITY_MARKERS
                .iter()
                .find(|(l, _)| *l == r.labels.severity)
                .unwrap()
                .1;
            let av = ACCESS_VECTOR_MARKERS
                .iter()
                .find(|(l, _)| *l == r.labels.access_vector)
                .unwrap()
                .1;
            for (i, s) in r.statements.iter().enumerate() {
                let toks = tokenize(&s.text);
                let has = |m: &str| toks.iter().any(|t| t == m);
                assert_eq!(has(sev), r.is_vulnerable(i), "{}", s.text);
                if r.is_vulnerable(i) {
                    assert!(!has(av));
                }
                for (_, other) in SEVERITY_MARKERS {
                    if other != sev {
                        assert!(!has(other));
                    }
                }
            }
            let av_lines = r
                .statements
                .iter()
                .filter(|s| tokenize(&s.text).iter().any(|t| t == av))
                .count();
            assert_eq!(av_lines, 1);
        }
    }

    #[test]
    fn deterministic() {
        let c = SyntheticConfig {
            functions: 20,
            ..SyntheticConfig::default()
        };
        assert_eq!(generate(&c), generate(&c));
    }
}
