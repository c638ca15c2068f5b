//! Function-level software vulnerability assessment.
//!
//! The crate turns vulnerability-fixing commits into a dataset of vulnerable
//! functions, extracts the context of the vulnerable statements through an
//! intra-procedural dependence graph, and trains classifiers that predict the
//! seven CVSS v2 base metrics of each function.
//!
//! The pipeline stages map onto modules:
//!
//! * [`corpus`]: diff parsing, commit filtering, vulnerable function extraction, label joins.
//! * [`depgraph`]: statement def/use analysis and the dependence graph.
//! * [`context`]: slicing, surrounding, function and residual contexts; model input assembly.
//! * [`features`]: code tokenization, bag-of-tokens/sub-tokens and embedding averages.
//! * [`models`]: logistic regression, linear SVM, KNN and random forest with grid search.
//! * [`eval`]: rotating split protocol, MCC, macro F1 and the Wilcoxon signed-rank test.
//! * [`runner`]: experiment orchestration and report rendering.

pub mod context;
pub mod corpus;
pub mod depgraph;
pub mod eval;
pub mod features;
pub mod io;
pub mod lexer;
pub mod models;
pub mod runner;
pub mod seed;
pub mod synthetic;

pub use context::{AssembledInput, AssemblyMode, ContextKind, ContextSelection};
pub use corpus::{CommitChange, CvssLabelSet, CvssTask, FunctionRecord, Statement};
pub use depgraph::{DependenceGraph, EdgeKind, StatementKind, StatementNode};
pub use eval::{SplitPlan, WilcoxonResult};
pub use features::{EmbeddingTable, FeatureVector, Vocabulary};
pub use models::{HyperConfig, ModelFamily, TrainedModel};
pub use runner::{ExperimentConfig, ExperimentReport};
