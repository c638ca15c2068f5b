mod common;

use std::collections::BTreeSet;

use common::{preamble_record, to_listing, PREAMBLE_DIFF};
use sv_assess::context::{self, assemble_input, backward_slice, forward_slice};
use sv_assess::corpus::{extract_vulnerable_functions, parse_unified_diff, FunctionBoundary};
use sv_assess::depgraph::Edge;
use sv_assess::{AssemblyMode, ContextKind, DependenceGraph, EdgeKind};

fn set(items: &[usize]) -> BTreeSet<usize> {
    items.iter().copied().collect()
}

#[test]
fn extraction_finds_the_deleted_line() {
    let r = preamble_record();
    assert_eq!(r.statements.len(), 11);
    assert_eq!(to_listing(&r, &r.vuln_line_indices), set(&[8]));
    assert_eq!(r.statements[7].text.trim(), "sb.append(unifyQuotes(dir));");
    assert!(r.statements.iter().all(|s| !s.is_cosmetic));
}

#[test]
fn extraction_from_source_matches_context_only() {
    let pre: Vec<String> = PREAMBLE_DIFF
        .lines()
        .skip_while(|l| !l.starts_with("@@"))
        .skip(1)
        .filter(|l| !l.starts_with('+'))
        .map(|l| l[1..].to_string())
        .collect();
    let changes = parse_unified_diff(PREAMBLE_DIFF).unwrap();
    let bounds = [FunctionBoundary {
        name: "getExecutionPreamble".into(),
        start: 1,
        end: 11,
    }];
    let with_source =
        extract_vulnerable_functions(&changes[0], &bounds, "plexus-utils", Some(&pre));
    let from_diff = extract_vulnerable_functions(&changes[0], &bounds, "plexus-utils", None);
    assert_eq!(with_source.functions, from_diff.functions);
}

#[test]
fn dependence_edges() {
    let g = DependenceGraph::from_record(&preamble_record());
    let data = |from, to| Edge {
        from,
        to,
        kind: EdgeKind::Data,
    };
    let expected: BTreeSet<Edge> = [
        Edge {
            from: 2,
            to: 3,
            kind: EdgeKind::Control,
        },
        data(4, 7),
        data(5, 6),
        data(6, 7),
        data(7, 8),
        data(8, 9),
    ]
    .into();
    assert_eq!(g.edges, expected, "{}", g.to_dot());
}

#[test]
fn slices_and_contexts() {
    let r = preamble_record();
    let g = DependenceGraph::from_record(&r);
    let listed = |kind| to_listing(&r, &context::select(&r, &g, kind).context_indices);

    assert_eq!(
        to_listing(&r, &backward_slice(&g, &r.vuln_line_indices)),
        set(&[5, 6, 7])
    );
    assert_eq!(
        to_listing(&r, &forward_slice(&g, &r.vuln_line_indices)),
        set(&[10, 11])
    );
    assert_eq!(listed(ContextKind::Ps), set(&[5, 6, 7, 10, 11]));
    assert_eq!(
        listed(ContextKind::Surrounding(6)),
        set(&[2, 3, 4, 5, 6, 7, 10, 11, 12])
    );
    assert_eq!(
        listed(ContextKind::Function),
        set(&[1, 2, 3, 4, 5, 6, 7, 10, 11, 12])
    );
    assert_eq!(listed(ContextKind::Residual), set(&[1, 2, 3, 4, 12]));
    assert_eq!(listed(ContextKind::None), set(&[]));
    assert_eq!(listed(ContextKind::RandomNonvuln(3)).len(), 1);
}

#[test]
fn double_mode_assembly() {
    let r = preamble_record();
    let g = DependenceGraph::from_record(&r);
    let ps = context::select(&r, &g, ContextKind::Ps);
    let double = assemble_input(&r, &ps, AssemblyMode::Double);
    assert_eq!(double.part_vuln, "sb.append(unifyQuotes(dir));");
    assert_eq!(
        double.part_context,
        "String dir = getWorkingDirectoryAsString();\n\
         StringBuilder sb = new StringBuilder();\n\
         sb.append(\"cd\");\n\
         sb.append(\"&&\");\n\
         return sb.toString();"
    );
    let single = assemble_input(&r, &ps, AssemblyMode::Single);
    assert_eq!(
        single.part_vuln,
        "String dir = getWorkingDirectoryAsString();\n\
         StringBuilder sb = new StringBuilder();\n\
         sb.append(\"cd\");\n\
         sb.append(unifyQuotes(dir));\n\
         sb.append(\"&&\");\n\
         return sb.toString();"
    );
    let function = context::select(&r, &g, ContextKind::Function);
    assert_eq!(
        assemble_input(&r, &function, AssemblyMode::Single).part_vuln,
        context::whole_function_text(&r)
    );
}
