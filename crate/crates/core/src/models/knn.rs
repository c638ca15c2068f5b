//! K-nearest neighbours over sparse rows, without feature scaling.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnWeight {
    Uniform,
    Distance,
}

impl fmt::Display for KnnWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KnnWeight::Uniform => "uniform",
            KnnWeight::Distance => "distance",
        })
    }
}

/// Minkowski distance for `p` of 1 or 2.
pub fn distance(a: &FeatureVector, b: &FeatureVector, p: u8) -> f64 {
    let term = |d: f64| if p == 1 { d.abs() } else { d * d };
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    let (ea, eb) = (&a.entries, &b.entries);
    while i < ea.len() || j < eb.len() {
        match (ea.get(i), eb.get(j)) {
            (Some(&(ia, va)), Some(&(ib, vb))) if ia == ib => {
                sum += term(va - vb);
                i += 1;
                j += 1;
            }
            (Some(&(ia, va)), Some(&(ib, _))) if ia < ib => {
                sum += term(va);
                i += 1;
            }
            (Some(&(_, va)), None) => {
                sum += term(va);
                i += 1;
            }
            (_, Some(&(_, vb))) => {
                sum += term(vb);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    if p == 1 {
        sum
    } else {
        sum.sqrt()
    }
}

pub(crate) fn predict(
    rows: &[FeatureVector],
    labels: &[usize],
    n_classes: usize,
    query: &FeatureVector,
    k: usize,
    weight: KnnWeight,
    p: u8,
) -> usize {
    let mut near: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (distance(query, r, p), i))
        .collect();
    let k = k.min(near.len());
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(k);
    let mut votes = vec![0.0; n_classes];
    let exact = near.iter().any(|(d, _)| *d == 0.0);
    for &(d, i) in &near {
        votes[labels[i]] += match weight {
            KnnWeight::Uniform => 1.0,
            KnnWeight::Distance if exact => f64::from(u8::from(d == 0.0)),
            KnnWeight::Distance => 1.0 / d,
        };
    }
    super::argmax(&votes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> FeatureVector {
        FeatureVector::from_dense(x)
    }

    #[test]
    fn sparse_distances() {
        let a = v(&[1.0, 0.0, 2.0]);
        let b = v(&[0.0, 3.0, 2.0]);
        assert_eq!(distance(&a, &b, 1), 4.0);
        assert!((distance(&a, &b, 2) - 10f64.sqrt()).abs() < 1e-12);
        assert_eq!(distance(&a, &a, 2), 0.0);
    }

    #[test]
    fn votes_and_ties() {
        let rows = vec![v(&[0.0]), v(&[1.0]), v(&[2.0]), v(&[10.0])];
        let labels = [0, 0, 1, 1];
        assert_eq!(
            predict(&rows, &labels, 2, &v(&[1.2]), 3, KnnWeight::Uniform, 2),
            0
        );
        // 2 neighbours, one per class: class order breaks the tie.
        assert_eq!(
            predict(&rows, &labels, 2, &v(&[1.5]), 2, KnnWeight::Uniform, 2),
            0
        );
        assert_eq!(
            predict(&rows, &labels, 2, &v(&[10.0]), 1, KnnWeight::Uniform, 1),
            1
        );
    }

    #[test]
    fn exact_match_votes_alone() {
        let rows = vec![v(&[0.0]), v(&[0.1]), v(&[0.2]), v(&[5.0])];
        let labels = [0, 0, 0, 1];
        assert_eq!(
            predict(&rows, &labels, 2, &v(&[5.0]), 4, KnnWeight::Distance, 2),
            1
        );
        assert_eq!(
            predict(&rows, &labels, 2, &v(&[5.0]), 4, KnnWeight::Uniform, 2),
            0
        );
    }
}
