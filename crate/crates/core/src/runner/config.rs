//! Experiment configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::context::{AssemblyMode, ContextKind};
use crate::corpus::CvssTask;
use crate::features::FeatureKind;
use crate::io;
use crate::models::{HyperConfig, ModelFamily};

pub const DEFAULT_SEED: u64 = 2023;
pub const DEFAULT_WINDOW: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    VulnOnly,
    NonvulnRandom,
    NonvulnAll,
    PsPlusVuln,
    SurroundingPlusVuln,
    FunctionPlusVuln,
    PsOnly,
    SurroundingOnly,
    FunctionOnly,
    ResidualOnly,
}

impl InputKind {
    pub fn name(self) -> &'static str {
        match self {
            InputKind::VulnOnly => "vuln_only",
            InputKind::NonvulnRandom => "nonvuln_random",
            InputKind::NonvulnAll => "nonvuln_all",
            InputKind::PsPlusVuln => "ps_plus_vuln",
            InputKind::SurroundingPlusVuln => "surrounding_plus_vuln",
            InputKind::FunctionPlusVuln => "function_plus_vuln",
            InputKind::PsOnly => "ps_only",
            InputKind::SurroundingOnly => "surrounding_only",
            InputKind::FunctionOnly => "function_only",
            InputKind::ResidualOnly => "residual_only",
        }
    }

    pub fn includes_vuln(self) -> bool {
        matches!(
            self,
            InputKind::VulnOnly
                | InputKind::PsPlusVuln
                | InputKind::SurroundingPlusVuln
                | InputKind::FunctionPlusVuln
        )
    }

    pub fn uses_ps(self) -> bool {
        matches!(
            self,
            InputKind::PsPlusVuln | InputKind::PsOnly | InputKind::ResidualOnly
        )
    }

    fn windowed(self) -> bool {
        matches!(
            self,
            InputKind::SurroundingPlusVuln | InputKind::SurroundingOnly
        )
    }
}

/// One input condition of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "InputTypeRepr")]
pub struct InputType {
    pub input: InputKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub mode: AssemblyMode,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InputTypeRepr {
    Name(InputKind),
    Full {
        input: InputKind,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        mode: Option<AssemblyMode>,
    },
}

impl TryFrom<InputTypeRepr> for InputType {
    type Error = String;

    fn try_from(r: InputTypeRepr) -> Result<Self, Self::Error> {
        let (input, n, mode) = match r {
            InputTypeRepr::Name(input) => (input, None, None),
            InputTypeRepr::Full { input, n, mode } => (input, n, mode),
        };
        InputType::new(input, n, mode.unwrap_or(AssemblyMode::Single))
    }
}

impl InputType {
    pub fn new(input: InputKind, n: Option<usize>, mode: AssemblyMode) -> Result<Self, String> {
        if mode == AssemblyMode::Double && !(input.includes_vuln() && input != InputKind::VulnOnly)
        {
            return Err(format!(
                "double mode is only valid for *_plus_vuln inputs, not {}",
                input.name()
            ));
        }
        let n = match (input.windowed(), n) {
            (true, n) => Some(n.unwrap_or(DEFAULT_WINDOW)),
            (false, None) => None,
            (false, Some(_)) => return Err(format!("{} takes no window size", input.name())),
        };
        Ok(InputType { input, n, mode })
    }

    pub fn single(input: InputKind) -> Self {
        InputType::new(input, None, AssemblyMode::Single).expect("valid single input")
    }

    pub fn label(&self) -> String {
        let mut s = self.input.name().to_string();
        if let Some(n) = self.n {
            s.push_str(&format!("({n})"));
        }
        if self.mode == AssemblyMode::Double {
            s.push_str(":double");
        }
        s
    }

    /// Context kind for a record; `random_seed` feeds random selections.
    pub fn context_kind(&self, random_seed: u64) -> ContextKind {
        match self.input {
            InputKind::VulnOnly => ContextKind::None,
            InputKind::NonvulnRandom => ContextKind::RandomNonvuln(random_seed),
            InputKind::NonvulnAll | InputKind::FunctionPlusVuln | InputKind::FunctionOnly => {
                ContextKind::Function
            }
            InputKind::PsPlusVuln | InputKind::PsOnly => ContextKind::Ps,
            InputKind::SurroundingPlusVuln | InputKind::SurroundingOnly => {
                ContextKind::Surrounding(self.n.unwrap_or(DEFAULT_WINDOW))
            }
            InputKind::ResidualOnly => ContextKind::Residual,
        }
    }
}

impl fmt::Display for InputType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A classifier family with an optional replacement grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassifierRepr")]
pub struct ClassifierSpec {
    pub family: ModelFamily,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<HyperConfig>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ClassifierRepr {
    Name(ModelFamily),
    Full {
        family: ModelFamily,
        #[serde(default)]
        grid: Option<Vec<serde_json::Map<String, serde_json::Value>>>,
    },
}

impl TryFrom<ClassifierRepr> for ClassifierSpec {
    type Error = String;

    fn try_from(r: ClassifierRepr) -> Result<Self, Self::Error> {
        match r {
            ClassifierRepr::Name(family) => Ok(ClassifierSpec { family, grid: None }),
            ClassifierRepr::Full { family, grid } => {
                let grid = grid
                    .map(|entries| {
                        entries
                            .into_iter()
                            .map(|mut e| {
                                e.insert("family".into(), family.name().into());
                                serde_json::from_value::<HyperConfig>(e.into())
                                    .map_err(|err| format!("{family} grid entry: {err}"))
                            })
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .transpose()?;
                Ok(ClassifierSpec { family, grid })
            }
        }
    }
}

impl ClassifierSpec {
    pub fn new(family: ModelFamily) -> Self {
        ClassifierSpec { family, grid: None }
    }

    pub fn with_grid(family: ModelFamily, grid: Vec<HyperConfig>) -> Self {
        ClassifierSpec {
            family,
            grid: Some(grid),
        }
    }

    pub fn grid(&self) -> Vec<HyperConfig> {
        self.grid.clone().unwrap_or_else(|| self.family.grid())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub tasks: Vec<CvssTask>,
    pub input_types: Vec<InputType>,
    pub features: Vec<FeatureKind>,
    pub classifiers: Vec<ClassifierSpec>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub rq2_filter: bool,
    /// Subset of rounds 1..=10 to run; all rounds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<usize>>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl ExperimentConfig {
    pub fn parse(json: &str) -> Result<Self, RunnerError> {
        let config: ExperimentConfig =
            serde_json::from_str(json).map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let mut config = Self::parse(&io::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(d) = config.dataset.as_mut() {
            resolve(d);
        }
        for f in &mut config.features {
            if let FeatureKind::EmbeddingAverage(p) = f {
                resolve(p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let bad = |m: String| Err(RunnerError::InvalidConfig(m));
        for (name, empty) in [
            ("tasks", self.tasks.is_empty()),
            ("input_types", self.input_types.is_empty()),
            ("features", self.features.is_empty()),
            ("classifiers", self.classifiers.is_empty()),
        ] {
            if empty {
                return bad(format!("`{name}` must not be empty"));
            }
        }
        fn unique<T: Ord>(items: impl Iterator<Item = T>) -> bool {
            let v: Vec<T> = items.collect();
            let n = v.len();
            v.into_iter().collect::<BTreeSet<_>>().len() == n
        }
        if !unique(self.tasks.iter()) {
            return bad("duplicate task".into());
        }
        if !unique(self.input_types.iter().map(InputType::label)) {
            return bad("duplicate input type".into());
        }
        if !unique(self.features.iter().map(FeatureKind::label)) {
            return bad("duplicate feature".into());
        }
        if !unique(self.classifiers.iter().map(|c| c.family)) {
            return bad("duplicate classifier family".into());
        }
        for input in &self.input_types {
            InputType::new(input.input, input.n, input.mode).map_err(RunnerError::InvalidConfig)?;
        }
        for c in &self.classifiers {
            let grid = c.grid();
            if grid.is_empty() {
                return bad(format!("{} grid is empty", c.family));
            }
            for h in &grid {
                if h.family() != c.family {
                    return bad(format!("{h} listed under {}", c.family));
                }
                h.validate()
                    .map_err(|e| RunnerError::InvalidConfig(e.to_string()))?;
            }
        }
        if let Some(rounds) = &self.rounds {
            if rounds.is_empty() || !unique(rounds.iter()) {
                return bad("`rounds` must be a non-empty set".into());
            }
            if let Some(r) = rounds
                .iter()
                .find(|r| !(1..=crate::eval::N_FOLDS).contains(*r))
            {
                return bad(format!("round {r} outside 1..=10"));
            }
        }
        Ok(())
    }

    pub fn rounds(&self) -> Vec<usize> {
        let mut r = self
            .rounds
            .clone()
            .unwrap_or_else(|| (1..=crate::eval::N_FOLDS).collect());
        r.sort_unstable();
        r
    }

    /// Whether records without PS context are dropped before splitting.
    pub fn filters_empty_ps(&self) -> bool {
        self.rq2_filter || self.input_types.iter().any(|i| i.input.uses_ps())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_short_and_long_forms() {
        let c = ExperimentConfig::parse(
            r#"{"tasks":["severity"],
                "input_types":["vuln_only",{"input":"surrounding_plus_vuln","mode":"double"},
                               {"input":"ps_plus_vuln","mode":"double"}],
                "features":["bag_tokens",{"embedding_average":"w.txt"}],
                "classifiers":["lr",{"family":"rf","grid":[{"estimators":10,"max_depth":3,"max_leaf_nodes":null}]}]}"#,
        )
        .unwrap();
        assert_eq!(c.seed, DEFAULT_SEED);
        assert_eq!(c.input_types[1].label(), "surrounding_plus_vuln(6):double");
        assert_eq!(c.classifiers[1].grid().len(), 1);
        assert_eq!(c.classifiers[0].grid().len(), 5);
        assert!(c.filters_empty_ps());
        let back = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::parse(&back).unwrap(), c);
    }

    #[test]
    fn rejects_invalid_matrices() {
        let base = |inputs: &str, extra: &str| {
            format!(
                r#"{{"tasks":["severity"],"input_types":{inputs},"features":["bag_tokens"],"classifiers":["lr"]{extra}}}"#
            )
        };
        assert!(
            ExperimentConfig::parse(&base(r#"[{"input":"vuln_only","mode":"double"}]"#, ""))
                .is_err()
        );
        assert!(
            ExperimentConfig::parse(&base(r#"[{"input":"ps_only","mode":"double"}]"#, "")).is_err()
        );
        assert!(
            ExperimentConfig::parse(&base(r#"[{"input":"function_only","n":3}]"#, "")).is_err()
        );
        assert!(ExperimentConfig::parse(&base(r#"["vuln_only","vuln_only"]"#, "")).is_err());
        assert!(ExperimentConfig::parse(&base(r#"[]"#, "")).is_err());
        assert!(ExperimentConfig::parse(&base(r#"["vuln_only"]"#, r#","rounds":[11]"#)).is_err());
        assert!(ExperimentConfig::parse(&base(r#"["vuln_only"]"#, r#","bogus":1"#)).is_err());
        assert!(ExperimentConfig::parse(&base(r#"["vuln_only"]"#, r#","rounds":[3,1]"#)).is_ok());
    }
}
