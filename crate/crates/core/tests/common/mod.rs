//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use sv_assess::corpus::{extract_vulnerable_functions, parse_unified_diff, FunctionBoundary};
use sv_assess::{CvssLabelSet, FunctionRecord};

/// A fixing commit whose hunk shows the whole function as context.
pub const PREAMBLE_DIFF: &str = "\
commit b38a1b3
diff --git a/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java b/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java
--- a/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java
+++ b/src/main/java/org/codehaus/plexus/util/cli/shell/Shell.java
@@ -1,11 +1,11 @@
 protected String getExecutionPreamble()
 {
     if (getWorkingDirectoryAsString() == null)
     {return null;}
     String dir = getWorkingDirectoryAsString();
     StringBuilder sb = new StringBuilder();
     sb.append(\"cd\");
-    sb.append(unifyQuotes(dir));
+    sb.append(quoteOneItem(dir, false));
     sb.append(\"&&\");
     return sb.toString();
 }
";

pub fn preamble_labels() -> CvssLabelSet {
    CvssLabelSet {
        access_vector: "NETWORK".into(),
        access_complexity: "LOW".into(),
        authentication: "NONE".into(),
        confidentiality: "PARTIAL".into(),
        integrity: "PARTIAL".into(),
        availability: "PARTIAL".into(),
        severity: "HIGH".into(),
    }
}

pub fn preamble_record() -> FunctionRecord {
    let changes = parse_unified_diff(PREAMBLE_DIFF).expect("fixture diff parses");
    let bounds = [FunctionBoundary {
        name: "getExecutionPreamble".into(),
        start: 1,
        end: 11,
    }];
    let mut ex = extract_vulnerable_functions(&changes[0], &bounds, "plexus-utils", None);
    assert_eq!(ex.functions.len(), 1);
    ex.functions
        .remove(0)
        .with_labels(preamble_labels())
        .unwrap()
}

/// Pre-change line numbers to the numbering of a listing that shows the
/// added line as line 9, between pre-change lines 8 and 9.
pub fn to_listing(record: &FunctionRecord, indices: &BTreeSet<usize>) -> BTreeSet<usize> {
    indices
        .iter()
        .map(|&i| {
            let line = record.statements[i].original_line_number;
            if line <= 8 {
                line
            } else {
                line + 1
            }
        })
        .collect()
}

/// Reachability by repeated relaxation over an adjacency matrix.
pub fn closure(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut reach = vec![vec![false; n]; n];
    for &(a, b) in edges {
        reach[a][b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    reach
}

/// MCC as the correlation of one-hot truth and prediction matrices.
pub fn mcc_oracle(t: &[u8], p: &[u8]) -> f64 {
    let classes: BTreeSet<u8> = t.iter().chain(p).copied().collect();
    let n = t.len() as f64;
    let mut cov_tp = 0.0;
    let mut cov_tt = 0.0;
    let mut cov_pp = 0.0;
    for &k in &classes {
        let xs: Vec<f64> = t.iter().map(|&v| f64::from(u8::from(v == k))).collect();
        let ys: Vec<f64> = p.iter().map(|&v| f64::from(u8::from(v == k))).collect();
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        for (x, y) in xs.iter().zip(&ys) {
            cov_tp += (x - mx) * (y - my);
            cov_tt += (x - mx) * (x - mx);
            cov_pp += (y - my) * (y - my);
        }
    }
    if cov_tt == 0.0 || cov_pp == 0.0 {
        0.0
    } else {
        cov_tp / (cov_tt * cov_pp).sqrt()
    }
}

/// Macro F1 from a confusion matrix.
pub fn f1_oracle(t: &[u8], p: &[u8]) -> f64 {
    let mut confusion: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    for (&a, &b) in t.iter().zip(p) {
        *confusion.entry((a, b)).or_default() += 1.0;
    }
    let classes: BTreeSet<u8> = t.iter().chain(p).copied().collect();
    let get = |a: u8, b: u8| confusion.get(&(a, b)).copied().unwrap_or(0.0);
    let total: f64 = classes
        .iter()
        .map(|&k| {
            let tp = get(k, k);
            let predicted: f64 = classes.iter().map(|&j| get(j, k)).sum();
            let actual: f64 = classes.iter().map(|&j| get(k, j)).sum();
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = if actual > 0.0 { tp / actual } else { 0.0 };
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .sum();
    total / classes.len() as f64
}

/// One-sided signed-rank p by enumerating all sign patterns.
pub fn wilcoxon_exact_oracle(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    // Mid-ranks by counting smaller and equal magnitudes.
    let ranks: Vec<f64> = abs
        .iter()
        .map(|x| {
            let less = abs.iter().filter(|y| *y < x).count() as f64;
            let equal = abs.iter().filter(|y| *y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect();
    let observed: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}
