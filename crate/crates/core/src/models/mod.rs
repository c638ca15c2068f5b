//! Multi-class classifiers with fixed hyperparameter grids.
//!
//! Labels are opaque strings. Every model keeps its class list in sorted
//! order, and all argmax ties resolve to the earliest class in that order.

mod forest;
mod knn;
mod linear;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::mcc;
use crate::features::FeatureVector;

pub use forest::{Tree, TreeNode};
pub use knn::KnnWeight;
pub use linear::{LinearLoss, LinearModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{0} feature rows but {1} labels")]
    LengthMismatch(usize, usize),
    #[error("expected feature dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidConfig(String),
    #[error("hyperparameter grid is empty")]
    EmptyGrid,
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Lr,
    Svm,
    Knn,
    Rf,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Lr,
        ModelFamily::Svm,
        ModelFamily::Knn,
        ModelFamily::Rf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Lr => "lr",
            ModelFamily::Svm => "svm",
            ModelFamily::Knn => "knn",
            ModelFamily::Rf => "rf",
        }
    }

    /// The full grid in enumeration order.
    pub fn grid(self) -> Vec<HyperConfig> {
        const C: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
        match self {
            ModelFamily::Lr => C.iter().map(|&c| HyperConfig::Lr { c }).collect(),
            ModelFamily::Svm => C.iter().map(|&c| HyperConfig::Svm { c }).collect(),
            ModelFamily::Knn => {
                let mut g = Vec::new();
                for neighbors in [5, 11, 31, 51] {
                    for weight in [KnnWeight::Uniform, KnnWeight::Distance] {
                        for p in [1, 2] {
                            g.push(HyperConfig::Knn {
                                neighbors,
                                weight,
                                p,
                            });
                        }
                    }
                }
                g
            }
            ModelFamily::Rf => {
                let mut g = Vec::new();
                for estimators in [100, 200, 300, 400, 500] {
                    for max_depth in [Some(3), Some(5), Some(7), Some(9), None] {
                        for max_leaf_nodes in [Some(100), Some(200), Some(300), None] {
                            g.push(HyperConfig::Rf {
                                estimators,
                                max_depth,
                                max_leaf_nodes,
                            });
                        }
                    }
                }
                g
            }
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelFamily::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown classifier `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperConfig {
    Lr {
        c: f64,
    },
    Svm {
        c: f64,
    },
    Knn {
        neighbors: usize,
        weight: KnnWeight,
        p: u8,
    },
    Rf {
        estimators: usize,
        max_depth: Option<usize>,
        max_leaf_nodes: Option<usize>,
    },
}

impl HyperConfig {
    pub fn family(&self) -> ModelFamily {
        match self {
            HyperConfig::Lr { .. } => ModelFamily::Lr,
            HyperConfig::Svm { .. } => ModelFamily::Svm,
            HyperConfig::Knn { .. } => ModelFamily::Knn,
            HyperConfig::Rf { .. } => ModelFamily::Rf,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(format!("{self}: {m}")));
        match *self {
            HyperConfig::Lr { c } | HyperConfig::Svm { c } if !(c > 0.0 && c.is_finite()) => {
                bad("c must be positive")
            }
            HyperConfig::Knn { neighbors: 0, .. } => bad("neighbors must be at least 1"),
            HyperConfig::Knn { p, .. } if p != 1 && p != 2 => bad("p must be 1 or 2"),
            HyperConfig::Rf { estimators: 0, .. } => bad("estimators must be at least 1"),
            HyperConfig::Rf {
                max_depth: Some(0), ..
            } => bad("max_depth must be at least 1"),
            HyperConfig::Rf {
                max_leaf_nodes: Some(l),
                ..
            } if l < 2 => bad("max_leaf_nodes must be at least 2"),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for HyperConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |v| v.to_string());
        match self {
            HyperConfig::Lr { c } => write!(f, "lr(c={c})"),
            HyperConfig::Svm { c } => write!(f, "svm(c={c})"),
            HyperConfig::Knn {
                neighbors,
                weight,
                p,
            } => {
                write!(f, "knn(k={neighbors},weight={weight},p={p})")
            }
            HyperConfig::Rf {
                estimators,
                max_depth,
                max_leaf_nodes,
            } => write!(
                f,
                "rf(estimators={estimators},max_depth={},max_leaf_nodes={})",
                opt(*max_depth),
                opt(*max_leaf_nodes)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    /// One weight row and bias per class.
    Linear(LinearModel),
    Knn {
        rows: Vec<FeatureVector>,
        labels: Vec<usize>,
    },
    Forest {
        trees: Vec<Tree>,
    },
    /// Training saw a single class.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub family: ModelFamily,
    pub config: HyperConfig,
    pub classes: Vec<String>,
    pub dimension: usize,
    pub seed: u64,
    pub params: ModelParams,
}

fn check_rows(x: &[FeatureVector], dimension: usize) -> Result<(), ModelError> {
    match x.iter().find(|r| r.dimension != dimension) {
        Some(r) => Err(ModelError::DimensionMismatch {
            expected: dimension,
            found: r.dimension,
        }),
        None => Ok(()),
    }
}

/// Index of the largest score; ties resolve to the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn train<S: AsRef<str>>(
    config: &HyperConfig,
    x: &[FeatureVector],
    y: &[S],
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    if x.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch(x.len(), y.len()));
    }
    let dimension = x[0].dimension;
    check_rows(x, dimension)?;
    let classes: Vec<String> = y
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let labels: Vec<usize> = y
        .iter()
        .map(|s| {
            classes
                .binary_search_by(|c| c.as_str().cmp(s.as_ref()))
                .unwrap()
        })
        .collect();
    let params = if classes.len() == 1 {
        ModelParams::Constant
    } else {
        match *config {
            HyperConfig::Lr { c } => ModelParams::Linear(linear::fit(
                x,
                &labels,
                classes.len(),
                dimension,
                c,
                LinearLoss::Logistic,
            )),
            HyperConfig::Svm { c } => ModelParams::Linear(linear::fit(
                x,
                &labels,
                classes.len(),
                dimension,
                c,
                LinearLoss::SquaredHinge,
            )),
            HyperConfig::Knn { .. } => ModelParams::Knn {
                rows: x.to_vec(),
                labels,
            },
            HyperConfig::Rf {
                estimators,
                max_depth,
                max_leaf_nodes,
            } => ModelParams::Forest {
                trees: forest::fit(
                    x,
                    &labels,
                    classes.len(),
                    dimension,
                    forest::ForestParams {
                        estimators,
                        max_depth,
                        max_leaf_nodes,
                    },
                    seed,
                ),
            },
        }
    };
    Ok(TrainedModel {
        format_version: FORMAT_VERSION,
        family: config.family(),
        config: *config,
        classes,
        dimension,
        seed,
        params,
    })
}

impl TrainedModel {
    /// Class index for each row.
    pub fn predict_indices(&self, x: &[FeatureVector]) -> Result<Vec<usize>, ModelError> {
        check_rows(x, self.dimension)?;
        let k = self.classes.len();
        Ok(match (&self.params, &self.config) {
            (ModelParams::Constant, _) => vec![0; x.len()],
            (ModelParams::Linear(m), _) => x.iter().map(|r| m.predict(r)).collect(),
            (
                ModelParams::Knn { rows, labels },
                HyperConfig::Knn {
                    neighbors,
                    weight,
                    p,
                },
            ) => x
                .par_iter()
                .map(|q| knn::predict(rows, labels, k, q, *neighbors, *weight, *p))
                .collect(),
            (ModelParams::Forest { trees }, _) => {
                x.iter().map(|r| forest::predict(trees, k, r)).collect()
            }
            (ModelParams::Knn { .. }, _) => {
                return Err(ModelError::Format(
                    "knn parameters with a non-knn config".into(),
                ))
            }
        })
    }

    pub fn predict(&self, x: &[FeatureVector]) -> Result<Vec<String>, ModelError> {
        Ok(self
            .predict_indices(x)?
            .into_iter()
            .map(|i| self.classes[i].clone())
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if model.format_version != FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub config: HyperConfig,
    pub model: TrainedModel,
    pub validation_mcc: f64,
}

/// Train every config on the training set and keep the one with the highest
/// validation MCC; ties go to the earliest config in `grid`.
pub fn grid_search<S: AsRef<str> + Sync>(
    grid: &[HyperConfig],
    train_x: &[FeatureVector],
    train_y: &[S],
    val_x: &[FeatureVector],
    val_y: &[S],
    seed: u64,
) -> Result<GridResult, ModelError> {
    if grid.is_empty() {
        return Err(ModelError::EmptyGrid);
    }
    let val_truth: Vec<&str> = val_y.iter().map(|s| s.as_ref()).collect();
    let scored = grid
        .par_iter()
        .map(|config| {
            let model = train(config, train_x, train_y, seed)?;
            let pred = model.predict(val_x)?;
            let pred: Vec<&str> = pred.iter().map(String::as_str).collect();
            Ok((model, mcc(&val_truth, &pred)))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let mut best = 0;
    for (i, (_, score)) in scored.iter().enumerate() {
        if *score > scored[best].1 {
            best = i;
        }
    }
    let (model, validation_mcc) = scored.into_iter().nth(best).unwrap();
    Ok(GridResult {
        config: grid[best],
        model,
        validation_mcc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(points: &[&[f64]]) -> Vec<FeatureVector> {
        points
            .iter()
            .map(|p| FeatureVector::from_dense(p))
            .collect()
    }

    fn toy() -> (Vec<FeatureVector>, Vec<&'static str>) {
        (
            rows(&[&[0.0, 0.0], &[0.2, 0.1], &[3.0, 3.0], &[3.2, 2.9]]),
            vec!["A", "A", "B", "B"],
        )
    }

    #[test]
    fn separable_toy_every_family() {
        let (x, y) = toy();
        for config in [
            HyperConfig::Lr { c: 100.0 },
            HyperConfig::Svm { c: 100.0 },
            HyperConfig::Knn {
                neighbors: 1,
                weight: KnnWeight::Uniform,
                p: 2,
            },
            HyperConfig::Rf {
                estimators: 10,
                max_depth: None,
                max_leaf_nodes: None,
            },
        ] {
            let m = train(&config, &x, &y, 7).unwrap();
            assert_eq!(m.predict(&x).unwrap(), y, "{config}");
        }
    }

    #[test]
    fn single_class_is_constant() {
        let x = rows(&[&[1.0], &[2.0]]);
        let m = train(&HyperConfig::Lr { c: 1.0 }, &x, &["only", "only"], 0).unwrap();
        assert_eq!(m.params, ModelParams::Constant);
        assert_eq!(m.predict(&rows(&[&[-50.0]])).unwrap(), vec!["only"]);
    }

    #[test]
    fn training_errors() {
        let empty: Vec<&str> = Vec::new();
        assert_eq!(
            train(&HyperConfig::Lr { c: 1.0 }, &[], &empty, 0).unwrap_err(),
            ModelError::EmptyTrainingSet
        );
        let (x, y) = toy();
        assert!(train(&HyperConfig::Lr { c: 0.0 }, &x, &y, 0).is_err());
        let m = train(&HyperConfig::Lr { c: 1.0 }, &x, &y, 0).unwrap();
        assert!(matches!(
            m.predict(&rows(&[&[1.0, 2.0, 3.0]])),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forest_has_requested_tree_count() {
        let (x, y) = toy();
        let config = HyperConfig::Rf {
            estimators: 100,
            max_depth: Some(3),
            max_leaf_nodes: None,
        };
        match train(&config, &x, &y, 1).unwrap().params {
            ModelParams::Forest { trees } => assert_eq!(trees.len(), 100),
            other => panic!("unexpected params {other:?}"),
        }
    }

    #[test]
    fn grids_match_declared_sizes() {
        assert_eq!(ModelFamily::Lr.grid().len(), 5);
        assert_eq!(ModelFamily::Knn.grid().len(), 16);
        assert_eq!(ModelFamily::Rf.grid().len(), 100);
        for f in ModelFamily::ALL {
            assert!(f
                .grid()
                .iter()
                .all(|c| c.validate().is_ok() && c.family() == f));
        }
    }

    #[test]
    fn grid_search_picks_best_then_first() {
        // k = 1 scores validation MCC 1; k = 3 outvotes the query near 0
        // and scores 0; k = 2 ties with k = 1.
        let x = rows(&[&[0.0], &[1.0], &[1.1], &[5.0], &[5.2]]);
        let y = ["A", "B", "B", "A", "A"];
        let vx = rows(&[&[0.1], &[1.05]]);
        let vy = ["A", "B"];
        let k = |neighbors| HyperConfig::Knn {
            neighbors,
            weight: KnnWeight::Uniform,
            p: 2,
        };
        let best = grid_search(&[k(3), k(1)], &x, &y, &vx, &vy, 0).unwrap();
        assert_eq!(best.config, k(1));
        let tie = grid_search(&[k(1), k(2)], &x, &y, &vx, &vy, 0).unwrap();
        assert_eq!(tie.config, k(1));
        assert!(grid_search::<&str>(&[], &x, &y, &vx, &vy, 0).is_err());
    }

    #[test]
    fn save_load_is_bit_exact() {
        let x = rows(&[
            &[0.3, 1.7],
            &[0.1, 0.2],
            &[2.9, 3.3],
            &[3.1, 0.7],
            &[1.0 / 3.0, 2.0],
        ]);
        let y = ["A", "B", "C", "A", "B"];
        for config in [
            HyperConfig::Lr { c: 0.1 },
            HyperConfig::Rf {
                estimators: 5,
                max_depth: None,
                max_leaf_nodes: Some(3),
            },
            HyperConfig::Knn {
                neighbors: 3,
                weight: KnnWeight::Distance,
                p: 1,
            },
        ] {
            let m = train(&config, &x, &y, 9).unwrap();
            let back = TrainedModel::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_json(), m.to_json());
        }
        assert!(TrainedModel::from_json("{}").is_err());
    }

    #[test]
    fn config_labels_round_trip_through_json() {
        for f in ModelFamily::ALL {
            for c in f.grid() {
                let json = serde_json::to_string(&c).unwrap();
                assert_eq!(serde_json::from_str::<HyperConfig>(&json).unwrap(), c);
            }
        }
        assert_eq!(HyperConfig::Lr { c: 0.01 }.to_string(), "lr(c=0.01)");
    }
}
