//! Rotating split protocol, evaluation measures and paired statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;

pub const N_FOLDS: usize = 10;

/// Exact null distribution is used up to this many nonzero pairs.
pub const EXACT_LIMIT: usize = 50;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("need at least {N_FOLDS} samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("score sequences differ in length ({0} vs {1}) or are empty")]
    Unpaired(usize, usize),
}

/// Maps fold numbers above 10 back into 1..=10.
pub fn wrap(fold: usize) -> usize {
    (fold - 1) % N_FOLDS + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub round: usize,
    pub train_folds: Vec<usize>,
    pub val_fold: usize,
    pub test_fold: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n_folds: usize,
    /// Fold number (1-based) of every sample.
    pub assignments: Vec<usize>,
}

impl SplitPlan {
    pub fn round(&self, round: usize) -> Round {
        assert!((1..=self.n_folds).contains(&round), "round out of range");
        let val_fold = wrap(round + 1);
        let test_fold = wrap(round + 2);
        Round {
            round,
            train_folds: (1..=self.n_folds)
                .filter(|f| *f != val_fold && *f != test_fold)
                .collect(),
            val_fold,
            test_fold,
        }
    }

    pub fn rounds(&self) -> Vec<Round> {
        (1..=self.n_folds).map(|r| self.round(r)).collect()
    }

    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_in(&[fold])
    }

    pub fn indices_in(&self, folds: &[usize]) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, f)| folds.contains(f))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.assignments {
            sizes[f - 1] += 1;
        }
        sizes
    }
}

/// Shuffle with `seed`, then cut into 10 contiguous folds. Each fold gets
/// `n / 10` samples; the last fold takes up to two of the remainder and any
/// further extras go one each to folds 9, 8, and so on.
pub fn make_split_plan(n_samples: usize, seed: u64) -> Result<SplitPlan, EvalError> {
    if n_samples < N_FOLDS {
        return Err(EvalError::TooFewSamples(n_samples));
    }
    let mut sizes = [n_samples / N_FOLDS; N_FOLDS];
    let rem = n_samples % N_FOLDS;
    sizes[N_FOLDS - 1] += rem.min(2);
    for k in 0..rem.saturating_sub(2) {
        sizes[N_FOLDS - 2 - k] += 1;
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut assignments = vec![0; n_samples];
    let mut pos = 0;
    for (f, size) in sizes.iter().enumerate() {
        for &i in &order[pos..pos + size] {
            assignments[i] = f + 1;
        }
        pos += size;
    }
    Ok(SplitPlan {
        n_folds: N_FOLDS,
        assignments,
    })
}

fn check_pair<T>(a: &[T], b: &[T]) {
    assert!(
        !a.is_empty() && a.len() == b.len(),
        "label sequences must be non-empty and aligned"
    );
}

/// Generalized multiclass Matthews correlation coefficient.
pub fn mcc<T: Ord>(y_true: &[T], y_pred: &[T]) -> f64 {
    check_pair(y_true, y_pred);
    let mut t: BTreeMap<&T, f64> = BTreeMap::new();
    let mut p: BTreeMap<&T, f64> = BTreeMap::new();
    let mut c = 0.0;
    for (a, b) in y_true.iter().zip(y_pred) {
        *t.entry(a).or_default() += 1.0;
        *p.entry(b).or_default() += 1.0;
        if a == b {
            c += 1.0;
        }
    }
    let s = y_true.len() as f64;
    let tp: f64 = t
        .iter()
        .map(|(k, tk)| tk * p.get(k).copied().unwrap_or(0.0))
        .sum();
    let pp: f64 = p.values().map(|v| v * v).sum();
    let tt: f64 = t.values().map(|v| v * v).sum();
    let denom = ((s * s - pp) * (s * s - tt)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (c * s - tp) / denom
    }
}

/// Unweighted mean of per-class F1 over every label seen in either sequence.
pub fn macro_f1<T: Ord>(y_true: &[T], y_pred: &[T]) -> f64 {
    check_pair(y_true, y_pred);
    let classes: BTreeSet<&T> = y_true.iter().chain(y_pred).collect();
    let sum: f64 = classes
        .iter()
        .map(|&k| {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fneg = 0.0;
            for (a, b) in y_true.iter().zip(y_pred) {
                match (a == k, b == k) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fneg += 1.0,
                    _ => {}
                }
            }
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fneg)
            }
        })
        .sum();
    sum / classes.len() as f64
}

/// Two aligned score sequences over the same experimental cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScores {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl PairedScores {
    pub fn new(first: Vec<f64>, second: Vec<f64>) -> Result<Self, EvalError> {
        if first.is_empty() || first.len() != second.len() {
            return Err(EvalError::Unpaired(first.len(), second.len()));
        }
        Ok(PairedScores { first, second })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// One-sided p for "first greater than second".
    pub p_value: f64,
    pub z: f64,
    pub r: f64,
    pub n_used: usize,
    /// All differences were zero.
    pub degenerate: bool,
}

/// Mid-ranks (1-based) of the values, ties sharing their mean rank.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn normal_upper_tail(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// P(W+ >= w) under the null, counting sign patterns over doubled ranks.
fn exact_upper_tail(doubled: &[usize], w_doubled: usize) -> f64 {
    let total: usize = doubled.iter().sum();
    let mut ways = vec![0.0f64; total + 1];
    ways[0] = 1.0;
    let mut reach = 0;
    for &r in doubled {
        reach += r;
        for s in (r..=reach).rev() {
            ways[s] += ways[s - r];
        }
    }
    let hits: f64 = ways[w_doubled.min(total + 1)..].iter().sum();
    hits / 2f64.powi(doubled.len() as i32)
}

/// One-sided Wilcoxon signed-rank test of "first greater than second".
///
/// Zero differences are dropped and tied magnitudes get mid-ranks. The
/// p-value comes from the exact null distribution of W+ for up to
/// [`EXACT_LIMIT`] nonzero pairs and from the tie-corrected normal
/// approximation above that. `z` is always the normal statistic and
/// `r = |z| / sqrt(n_used)`.
pub fn wilcoxon_one_sided(pairs: &PairedScores) -> WilcoxonResult {
    let diffs: Vec<f64> = pairs
        .first
        .iter()
        .zip(&pairs.second)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult {
            p_value: 1.0,
            z: 0.0,
            r: 0.0,
            n_used: 0,
            degenerate: true,
        };
    }
    let ranks = mid_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut ties: BTreeMap<u64, f64> = BTreeMap::new();
    for r in &ranks {
        *ties.entry(r.to_bits()).or_default() += 1.0;
    }
    let tie_term: f64 = ties.values().map(|t| t * t * t - t).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = if var > 0.0 {
        (w - mean) / var.sqrt()
    } else {
        0.0
    };
    let p_value = if n <= EXACT_LIMIT {
        let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
        exact_upper_tail(&doubled, (w * 2.0).round() as usize)
    } else {
        normal_upper_tail(z)
    };
    WilcoxonResult {
        p_value,
        z,
        r: z.abs() / nf.sqrt(),
        n_used: n,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectSize {
    Negligible,
    Small,
    Medium,
    Large,
}

impl fmt::Display for EffectSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectSize::Negligible => "negligible",
            EffectSize::Small => "small",
            EffectSize::Medium => "medium",
            EffectSize::Large => "large",
        })
    }
}

pub fn effect_size_label(r: f64) -> EffectSize {
    if r <= 0.1 {
        EffectSize::Negligible
    } else if r <= 0.3 {
        EffectSize::Small
    } else if r <= 0.5 {
        EffectSize::Medium
    } else {
        EffectSize::Large
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_rule() {
        let plan = make_split_plan(100, 1).unwrap();
        let last = plan.round(10);
        assert_eq!((last.val_fold, last.test_fold), (1, 2));
        let first = plan.round(1);
        assert_eq!((first.val_fold, first.test_fold), (2, 3));
        assert_eq!(first.train_folds, vec![1, 4, 5, 6, 7, 8, 9, 10]);
    }

    #[test]
    fn fold_sizes_with_remainders() {
        let plan = make_split_plan(1782, 3).unwrap();
        assert_eq!(plan.fold_sizes(), [vec![178; 9], vec![180]].concat());
        let sizes = make_split_plan(19, 3).unwrap().fold_sizes();
        assert_eq!(sizes, vec![1, 1, 2, 2, 2, 2, 2, 2, 2, 3]);
        assert!(make_split_plan(9, 0).is_err());
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mcc(&["A", "B", "C"], &["A", "B", "C"]), 1.0);
        assert!((mcc(&["A", "B", "A"], &["B", "A", "B"]) + 1.0).abs() < 1e-12);
        assert!(mcc(&["A", "A", "B", "B"], &["A", "B", "A", "B"]).abs() < 1e-12);
        assert_eq!(mcc(&["A", "A"], &["A", "A"]), 0.0);
        assert!((macro_f1(&["A", "A", "B"], &["A", "A", "A"]) - 0.4).abs() < 1e-12);
        assert_eq!(macro_f1(&["A", "B"], &["A", "B"]), 1.0);
        assert!((macro_f1(&["A", "A"], &["A", "Z"]) - (2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_degenerate() {
        let pairs = PairedScores::new(vec![0.5, 0.6], vec![0.5, 0.6]).unwrap();
        let r = wilcoxon_one_sided(&pairs);
        assert!(r.degenerate);
        assert_eq!((r.p_value, r.z, r.r, r.n_used), (1.0, 0.0, 0.0, 0));
    }

    #[test]
    fn wilcoxon_all_greater() {
        let a: Vec<f64> = (0..10).map(|i| 0.9 + i as f64 * 0.001).collect();
        let b: Vec<f64> = (0..10).map(|i| 0.1 + i as f64 * 0.002).collect();
        let r = wilcoxon_one_sided(&PairedScores::new(a, b).unwrap());
        assert!((r.p_value - 1.0 / 1024.0).abs() < 1e-15);
        // W = 55, mean 27.5, sd sqrt(96.25).
        assert!((r.z - 27.5 / 96.25f64.sqrt()).abs() < 1e-12);
        assert!((r.r - r.z / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mid_ranks_share_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn effect_labels() {
        assert_eq!(effect_size_label(0.05), EffectSize::Negligible);
        assert_eq!(effect_size_label(0.1), EffectSize::Negligible);
        assert_eq!(effect_size_label(0.2), EffectSize::Small);
        assert_eq!(effect_size_label(0.42), EffectSize::Medium);
        assert_eq!(effect_size_label(0.62), EffectSize::Large);
    }

    #[test]
    fn unpaired_sequences() {
        assert!(PairedScores::new(vec![], vec![]).is_err());
        assert!(PairedScores::new(vec![1.0], vec![]).is_err());
    }
}
