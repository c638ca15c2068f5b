//! Random forest of Gini decision trees on bootstrap samples.
//!
//! Trees grow best-first: the frontier node whose split lowers weighted
//! impurity most is split next, until no frontier node can split or the leaf
//! budget is spent. Each split draws features at random without
//! replacement until `floor(sqrt(d))` features that are not constant on the
//! node have been scored.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::seed;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ForestParams {
    pub estimators: usize,
    pub max_depth: Option<usize>,
    pub max_leaf_nodes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: usize,
    },
    /// Rows with `value <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, row: &FeatureVector) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row.get(feature) <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

/// Hard majority vote; ties go to the lowest class index.
pub(crate) fn predict(trees: &[Tree], n_classes: usize, row: &FeatureVector) -> usize {
    let mut votes = vec![0.0; n_classes];
    for t in trees {
        votes[t.predict(row)] += 1.0;
    }
    super::argmax(&votes)
}

pub(crate) fn fit(
    x: &[FeatureVector],
    labels: &[usize],
    n_classes: usize,
    dimension: usize,
    params: ForestParams,
    seed: u64,
) -> Vec<Tree> {
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dimension];
    for (r, row) in x.iter().enumerate() {
        for &(j, v) in &row.entries {
            columns[j].push((r, v));
        }
    }
    let data = Data {
        x,
        columns,
        labels,
        n_classes,
        max_features: ((dimension as f64).sqrt().floor() as usize).max(1),
    };
    (0..params.estimators)
        .into_par_iter()
        .map(|t| grow(&data, params, seed::derive_index(seed, t as u64)))
        .collect()
}

struct Data<'a> {
    x: &'a [FeatureVector],
    columns: Vec<Vec<(usize, f64)>>,
    labels: &'a [usize],
    n_classes: usize,
    max_features: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    improvement: f64,
}

struct Frontier {
    slot: usize,
    rows: Vec<usize>,
    depth: usize,
    candidate: Candidate,
}

#[derive(PartialEq)]
struct Priority {
    improvement: f64,
    order: usize,
}

impl Eq for Priority {}

impl Ord for Priority {
    fn cmp(&self, other: &Self) -> Ordering {
        self.improvement
            .total_cmp(&other.improvement)
            .then(other.order.cmp(&self.order))
    }
}

impl PartialOrd for Priority {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `W * gini` for a class-weight histogram.
fn weighted_gini(hist: &[f64]) -> f64 {
    let w: f64 = hist.iter().sum();
    if w == 0.0 {
        0.0
    } else {
        w - hist.iter().map(|h| h * h).sum::<f64>() / w
    }
}

struct Grower<'a, R> {
    data: &'a Data<'a>,
    weight: Vec<f64>,
    stamp: Vec<usize>,
    features: Vec<usize>,
    rng: R,
    next_stamp: usize,
}

impl<R: Rng> Grower<'_, R> {
    fn histogram(&self, rows: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.data.n_classes];
        for &r in rows {
            h[self.data.labels[r]] += self.weight[r];
        }
        h
    }

    /// Nonzero values of `feature` on the node's rows.
    fn node_values(&self, feature: usize, rows: &[usize], stamp: usize) -> Vec<(f64, usize)> {
        let col = &self.data.columns[feature];
        if col.len() <= 4 * rows.len() {
            col.iter()
                .filter(|(r, _)| self.stamp[*r] == stamp)
                .map(|&(r, v)| (v, r))
                .collect()
        } else {
            rows.iter()
                .filter_map(|&r| {
                    let v = self.data.x[r].get(feature);
                    (v != 0.0).then_some((v, r))
                })
                .collect()
        }
    }

    fn best_split(&mut self, rows: &[usize], hist: &[f64]) -> Option<Candidate> {
        self.next_stamp += 1;
        let stamp = self.next_stamp;
        for &r in rows {
            self.stamp[r] = stamp;
        }
        let parent = weighted_gini(hist);
        let mut best: Option<Candidate> = None;
        let mut scored = 0;
        let mut remaining = self.features.len();
        while remaining > 0 && scored < self.data.max_features {
            let pick = self.rng.gen_range(0..remaining);
            self.features.swap(pick, remaining - 1);
            remaining -= 1;
            let feature = self.features[remaining];
            let mut values = self.node_values(feature, rows, stamp);
            let zeros = rows.len() - values.len();
            let constant = match values.first() {
                None => true,
                Some(&(v0, _)) => zeros == 0 && values.iter().all(|(v, _)| *v == v0),
            };
            if constant {
                continue;
            }
            scored += 1;
            values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut zero_hist = hist.to_vec();
            for &(_, r) in &values {
                zero_hist[self.data.labels[r]] -= self.weight[r];
            }
            // Ordered groups of (value, class weights); the implicit zeros
            // form one group at their sorted position.
            let neg = values.partition_point(|(v, _)| *v < 0.0);
            let mut left = vec![0.0; hist.len()];
            let mut right = vec![0.0; hist.len()];
            let mut prev: Option<f64> = None;
            let mut consider = |value: f64,
                                left: &mut Vec<f64>,
                                right: &mut Vec<f64>,
                                best: &mut Option<Candidate>| {
                if let Some(p) = prev {
                    if p < value {
                        for (rt, (h, l)) in right.iter_mut().zip(hist.iter().zip(left.iter())) {
                            *rt = h - l;
                        }
                        let improvement = parent - weighted_gini(left) - weighted_gini(right);
                        if best.as_ref().is_none_or(|b| improvement > b.improvement) {
                            let mut threshold = p + (value - p) / 2.0;
                            if threshold >= value {
                                threshold = p;
                            }
                            *best = Some(Candidate {
                                feature,
                                threshold,
                                improvement,
                            });
                        }
                    }
                }
                prev = Some(value);
            };
            let labels = self.data.labels;
            let weight = &self.weight;
            for (k, &(v, r)) in values.iter().enumerate() {
                if k == neg && zeros > 0 {
                    consider(0.0, &mut left, &mut right, &mut best);
                    for (l, z) in left.iter_mut().zip(&zero_hist) {
                        *l += z;
                    }
                }
                consider(v, &mut left, &mut right, &mut best);
                left[labels[r]] += weight[r];
            }
            if neg == values.len() && zeros > 0 {
                consider(0.0, &mut left, &mut right, &mut best);
            }
        }
        best
    }

    fn partition(&self, rows: &[usize], c: &Candidate) -> (Vec<usize>, Vec<usize>) {
        rows.iter()
            .partition(|&&r| self.data.x[r].get(c.feature) <= c.threshold)
    }
}

fn majority(hist: &[f64]) -> usize {
    super::argmax(hist)
}

fn grow(data: &Data<'_>, params: ForestParams, tree_seed: u64) -> Tree {
    let n = data.x.len();
    let mut rng = seed::rng(tree_seed);
    let mut weight = vec![0.0; n];
    for _ in 0..n {
        weight[rng.gen_range(0..n)] += 1.0;
    }
    let mut g = Grower {
        data,
        weight,
        stamp: vec![0; n],
        features: (0..data.columns.len()).collect(),
        rng,
        next_stamp: 0,
    };
    let rows: Vec<usize> = (0..n).filter(|&r| g.weight[r] > 0.0).collect();

    let mut tree = Builder {
        nodes: Vec::new(),
        heap: BinaryHeap::new(),
        frontier: HashMap::new(),
        max_depth: params.max_depth.unwrap_or(usize::MAX),
    };
    tree.add(&mut g, rows, 0);
    let max_leaves = params.max_leaf_nodes.unwrap_or(usize::MAX);
    let mut leaves = 1;
    while leaves < max_leaves {
        let Some(top) = tree.heap.pop() else {
            break;
        };
        let f = tree
            .frontier
            .remove(&top.order)
            .expect("queued node is pending");
        let (l, r) = g.partition(&f.rows, &f.candidate);
        let left = tree.add(&mut g, l, f.depth + 1);
        let right = tree.add(&mut g, r, f.depth + 1);
        tree.nodes[f.slot] = TreeNode::Split {
            feature: f.candidate.feature,
            threshold: f.candidate.threshold,
            left,
            right,
        };
        leaves += 1;
    }
    Tree { nodes: tree.nodes }
}

struct Builder {
    nodes: Vec<TreeNode>,
    heap: BinaryHeap<Priority>,
    frontier: HashMap<usize, Frontier>,
    max_depth: usize,
}

impl Builder {
    /// Append a leaf for `rows` and queue it when it can be split.
    fn add<R: Rng>(&mut self, g: &mut Grower<'_, R>, rows: Vec<usize>, depth: usize) -> usize {
        let hist = g.histogram(&rows);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            class: majority(&hist),
        });
        if depth < self.max_depth && rows.len() >= 2 && weighted_gini(&hist) > 0.0 {
            if let Some(candidate) = g.best_split(&rows, &hist) {
                self.heap.push(Priority {
                    improvement: candidate.improvement,
                    order: slot,
                });
                self.frontier.insert(
                    slot,
                    Frontier {
                        slot,
                        rows,
                        depth,
                        candidate,
                    },
                );
            }
        }
        slot
    }
}
