//! Intra-procedural dependence graphs over statement lines.
//!
//! Each physical line of a function is one node. Data edges connect a
//! definition to later uses that no intermediate line redefines; control
//! edges connect a control statement (`if`, `for`, `while`, ...) to every
//! line of the block it governs. Only forward, program-order data edges are
//! built; a loop body is governed by its loop header instead of carrying
//! back-edges.

mod defuse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use defuse::LineShape;
pub use defuse::{DefUse, LanguageProfile};

use crate::corpus::{CommentState, FunctionRecord};
use crate::lexer::{self, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    Plain,
    Control,
    Cosmetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementNode {
    pub index: usize,
    pub original_line_number: usize,
    pub text: String,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
    pub kind: StatementKind,
    /// Innermost control statement governing this one.
    pub control_parent: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Data,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependenceGraph {
    pub nodes: Vec<StatementNode>,
    pub edges: BTreeSet<Edge>,
}

struct Line {
    tokens: Vec<Token>,
    shape: LineShape,
    cosmetic: bool,
    depth_start: i32,
    /// Depth after leading closing braces.
    base: i32,
    min_depth: i32,
    depth_end: i32,
}

impl Line {
    fn head_text(&self) -> &str {
        self.tokens
            .iter()
            .find(|t| !t.is("}"))
            .map_or("", |t| t.text.as_str())
    }

    fn opens_block(&self) -> bool {
        self.depth_end > self.base
    }

    fn self_contained(&self) -> bool {
        self.tokens.last().is_some_and(|t| t.is(";") || t.is("}"))
    }

    fn is_continuation(&self) -> bool {
        matches!(self.head_text(), "else" | "catch" | "finally")
    }

    fn is_edge_target(&self) -> bool {
        !self.cosmetic && self.shape != LineShape::BraceOnly
    }
}

fn scan_lines(lines: &[(usize, String)], cosmetic: Option<&[bool]>) -> Vec<Line> {
    let mut comments = CommentState::new();
    let mut depth = 0i32;
    let profile = LanguageProfile::java();
    lines
        .iter()
        .enumerate()
        .map(|(i, (_, text))| {
            let code = comments.strip(text);
            let is_cosmetic = cosmetic.map_or_else(|| code.trim().is_empty(), |c| c[i]);
            let tokens = if is_cosmetic {
                Vec::new()
            } else {
                lexer::scan(&code)
            };
            let depth_start = depth;
            let mut min_depth = depth;
            let mut leading = 0;
            let mut seen_other = false;
            for t in &tokens {
                match t.text.as_str() {
                    "{" => {
                        depth += 1;
                        seen_other = true;
                    }
                    "}" => {
                        depth -= 1;
                        if !seen_other {
                            leading += 1;
                        }
                    }
                    _ => seen_other = true,
                }
                min_depth = min_depth.min(depth);
            }
            Line {
                shape: defuse::shape(&tokens, &profile),
                tokens,
                cosmetic: is_cosmetic,
                depth_start,
                base: depth_start - leading,
                min_depth,
                depth_end: depth,
            }
        })
        .collect()
}

fn next_code_line(lines: &[Line], after: usize) -> Option<usize> {
    (after + 1..lines.len()).find(|&j| !lines[j].cosmetic)
}

/// Lines governed by control line `i`, in ascending order.
fn governed(lines: &[Line], i: usize) -> Vec<usize> {
    let line = &lines[i];
    let mut out = Vec::new();
    if matches!(line.head_text(), "case" | "default") && !line.opens_block() {
        for k in i + 1..lines.len() {
            let l = &lines[k];
            if l.min_depth < line.depth_start
                || (l.depth_start == line.depth_start
                    && matches!(l.head_text(), "case" | "default"))
            {
                break;
            }
            out.push(k);
        }
        return out;
    }

    let end = if line.opens_block() {
        match (i + 1..lines.len()).find(|&k| lines[k].min_depth <= line.base) {
            Some(k) => {
                out.extend(i + 1..k);
                let closing = &lines[k];
                if closing.shape == LineShape::Control {
                    out.push(k);
                    if closing.is_continuation() {
                        out.extend(governed(lines, k));
                    }
                }
                return out;
            }
            None => {
                out.extend(i + 1..lines.len());
                return out;
            }
        }
    } else if line.self_contained() {
        i
    } else {
        match next_code_line(lines, i) {
            None => return out,
            Some(j) => {
                let ext = extent(lines, j);
                out.extend(j..=ext);
                ext
            }
        }
    };
    // a following else/catch/finally hangs off this statement
    if let Some(k) = next_code_line(lines, end) {
        if lines[k].shape == LineShape::Control
            && lines[k].is_continuation()
            && lines[k].base == line.base
        {
            out.push(k);
            out.extend(governed(lines, k));
        }
    }
    out
}

/// Last line of the statement starting at `j`.
fn extent(lines: &[Line], j: usize) -> usize {
    let line = &lines[j];
    if line.shape == LineShape::Control {
        return governed(lines, j).last().copied().unwrap_or(j).max(j);
    }
    if line.opens_block() {
        return (j + 1..lines.len())
            .find(|&k| lines[k].min_depth <= line.base)
            .unwrap_or(lines.len() - 1);
    }
    j
}

/// Split function lines into statement nodes with def/use sets and
/// governing control statements.
pub fn split_statements(function_source: &[(usize, String)]) -> Vec<StatementNode> {
    split_statements_with(function_source, None, &LanguageProfile::java())
}

/// Like [`split_statements`], with explicit cosmetic flags and keyword profile.
pub fn split_statements_with(
    function_source: &[(usize, String)],
    cosmetic: Option<&[bool]>,
    profile: &LanguageProfile,
) -> Vec<StatementNode> {
    let lines = scan_lines(function_source, cosmetic);
    let mut parent: Vec<Option<usize>> = vec![None; lines.len()];
    for i in 0..lines.len() {
        if lines[i].cosmetic || lines[i].shape != LineShape::Control {
            continue;
        }
        for j in governed(&lines, i) {
            if j > i && lines[j].is_edge_target() {
                // later governors are nested inside earlier ones
                parent[j] = Some(parent[j].map_or(i, |p| p.max(i)));
            }
        }
    }
    lines
        .iter()
        .zip(function_source)
        .enumerate()
        .map(|(index, (line, (number, text)))| {
            let (kind, du) = if line.cosmetic {
                (StatementKind::Cosmetic, DefUse::default())
            } else {
                let shape = defuse::shape(&line.tokens, profile);
                let kind = if shape == LineShape::Control {
                    StatementKind::Control
                } else {
                    StatementKind::Plain
                };
                (kind, defuse::analyse(&line.tokens, shape, profile))
            };
            StatementNode {
                index,
                original_line_number: *number,
                text: text.clone(),
                defs: du.defs,
                uses: du.uses,
                kind,
                control_parent: parent[index],
            }
        })
        .collect()
}

/// Build the dependence graph of split statements.
pub fn build_dependence_graph(statements: Vec<StatementNode>) -> DependenceGraph {
    let mut edges = BTreeSet::new();
    let mut last_def: BTreeMap<&str, usize> = BTreeMap::new();
    for (j, node) in statements.iter().enumerate() {
        if node.kind == StatementKind::Cosmetic {
            continue;
        }
        for var in &node.uses {
            if let Some(&i) = last_def.get(var.as_str()) {
                edges.insert(Edge {
                    from: i,
                    to: j,
                    kind: EdgeKind::Data,
                });
            }
        }
        for var in &node.defs {
            last_def.insert(var.as_str(), j);
        }
        let mut ancestor = node.control_parent;
        while let Some(a) = ancestor {
            edges.insert(Edge {
                from: a,
                to: j,
                kind: EdgeKind::Control,
            });
            ancestor = statements[a].control_parent;
        }
    }
    DependenceGraph {
        nodes: statements,
        edges,
    }
}

impl DependenceGraph {
    /// Graph of a dataset record, keeping the record's cosmetic flags.
    pub fn from_record(record: &FunctionRecord) -> Self {
        Self::from_record_with(record, &LanguageProfile::java())
    }

    pub fn from_record_with(record: &FunctionRecord, profile: &LanguageProfile) -> Self {
        let lines: Vec<(usize, String)> = record
            .statements
            .iter()
            .map(|s| (s.original_line_number, s.text.clone()))
            .collect();
        let cosmetic: Vec<bool> = record.statements.iter().map(|s| s.is_cosmetic).collect();
        build_dependence_graph(split_statements_with(&lines, Some(&cosmetic), profile))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Successor lists indexed by node.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.from].push(e.to);
        }
        adj
    }

    /// Predecessor lists indexed by node.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.to].push(e.from);
        }
        adj
    }

    pub fn degree(&self, index: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.from == index || e.to == index)
            .count()
    }

    /// Graphviz rendering, one node and one edge per line.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pdg {\n");
        for n in &self.nodes {
            let label = n.text.trim().replace('\\', "\\\\").replace('"', "\\\"");
            let _ = writeln!(
                out,
                "  n{} [label=\"{}: {}\", kind=\"{:?}\"];",
                n.index, n.original_line_number, label, n.kind
            );
        }
        for e in &self.edges {
            let kind = match e.kind {
                EdgeKind::Data => "data",
                EdgeKind::Control => "control",
            };
            let _ = writeln!(out, "  n{} -> n{} [label=\"{kind}\"];", e.from, e.to);
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(lines: &[&str]) -> DependenceGraph {
        let src: Vec<(usize, String)> = lines
            .iter()
            .enumerate()
            .map(|(i, l)| (i + 1, l.to_string()))
            .collect();
        build_dependence_graph(split_statements(&src))
    }

    fn edges(g: &DependenceGraph) -> Vec<(usize, usize, EdgeKind)> {
        g.edges.iter().map(|e| (e.from, e.to, e.kind)).collect()
    }

    #[test]
    fn def_use_edge() {
        let g = graph(&["int a = 1;", "int b = a + 1;"]);
        assert_eq!(edges(&g), vec![(0, 1, EdgeKind::Data)]);
    }

    #[test]
    fn control_edge_to_braced_body() {
        let g = graph(&["if (b == 2)", "{ func(c); }"]);
        assert_eq!(edges(&g), vec![(0, 1, EdgeKind::Control)]);
        assert_eq!(g.nodes[0].kind, StatementKind::Control);
        assert_eq!(g.nodes[1].control_parent, Some(0));
    }

    #[test]
    fn disjoint_identifiers_have_no_edges() {
        assert!(graph(&["int a = 1;", "int b = 2;"]).edges.is_empty());
    }

    #[test]
    fn redefinition_kills_earlier_definition() {
        let g = graph(&["x = 1;", "x = 2;", "y = x;"]);
        assert_eq!(edges(&g), vec![(1, 2, EdgeKind::Data)]);
    }

    #[test]
    fn same_line_if_body_governs_nothing_else() {
        let g = graph(&["if (b == 2) func(c);", "d = 1;"]);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn nested_blocks_and_else() {
        let g = graph(&[
            "void f() {",        // 0
            "  if (a) {",        // 1
            "    x = 1;",        // 2
            "    while (x < 3)", // 3
            "      x++;",        // 4
            "  } else {",        // 5
            "    y = 2;",        // 6
            "  }",               // 7
            "  z = x;",          // 8
            "}",                 // 9
        ]);
        let parents: Vec<Option<usize>> = g.nodes.iter().map(|n| n.control_parent).collect();
        assert_eq!(
            parents,
            vec![
                None,
                None,
                Some(1),
                Some(1),
                Some(3),
                Some(1),
                Some(5),
                None,
                None,
                None
            ]
        );
        let control: Vec<(usize, usize)> = g
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Control)
            .map(|e| (e.from, e.to))
            .collect();
        assert_eq!(
            control,
            vec![(1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (3, 4), (5, 6)]
        );
    }

    #[test]
    fn single_statement_body_without_braces() {
        let g = graph(&[
            "for (String s : xs)",
            "  if (s.isEmpty())",
            "    count++;",
            "done();",
        ]);
        let parents: Vec<Option<usize>> = g.nodes.iter().map(|n| n.control_parent).collect();
        assert_eq!(parents, vec![None, Some(0), Some(1), None]);
    }

    #[test]
    fn switch_cases() {
        let g = graph(&[
            "switch (k) {", // 0
            "  case 1:",    // 1
            "    a = 1;",   // 2
            "    break;",   // 3
            "  default:",   // 4
            "    a = 2;",   // 5
            "}",            // 6
            "use(a);",      // 7
        ]);
        let parents: Vec<Option<usize>> = g.nodes.iter().map(|n| n.control_parent).collect();
        assert_eq!(
            parents,
            vec![
                None,
                Some(0),
                Some(1),
                Some(1),
                Some(0),
                Some(4),
                None,
                None
            ]
        );
        assert!(g.edges.contains(&Edge {
            from: 5,
            to: 7,
            kind: EdgeKind::Data
        }));
    }

    #[test]
    fn cosmetic_nodes_are_isolated() {
        let g = graph(&[
            "int a = 1;",
            "// a is used below",
            "",
            "/* a */",
            "int b = a;",
        ]);
        for i in 1..4 {
            assert_eq!(g.nodes[i].kind, StatementKind::Cosmetic);
            assert!(g.nodes[i].defs.is_empty() && g.nodes[i].uses.is_empty());
            assert_eq!(g.degree(i), 0);
        }
        assert_eq!(edges(&g), vec![(0, 4, EdgeKind::Data)]);
    }

    #[test]
    fn dot_dump_lists_nodes_and_edges() {
        let dot = graph(&["int a = 1;", "int b = a + 1;"]).to_dot();
        assert!(dot.starts_with("digraph pdg {"));
        assert!(dot.contains("n0 -> n1 [label=\"data\"];"));
        assert!(dot.contains("n1 [label=\"2: int b = a + 1;\""));
    }
}
