//! Scenario configuration: which game to build, which solvers to run on it and
//! which refinement tables to compute.

use std::path::{Path, PathBuf};

use prefgame_core::solvers::{GdaConfig, NashMethod, StochasticGdaConfig};
use prefgame_core::{ActionSpace, AnnotatorPopulation, ComparisonDataset, PreferenceMatrix, ReferencePair, RewardTable};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCENARIO_SCHEMA: &str = "prefgame.scenario.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Master seed; every stochastic component derives its stream from it
    /// unless it carries its own seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub game: GameSource,
    /// Reference policies for the regularised solvers; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferencePair>,
    #[serde(default)]
    pub solvers: Vec<SolverSpec>,
    #[serde(default)]
    pub refinement: Vec<RefinementTask>,
    /// Where report files go, relative to the config file; `--out-dir`
    /// overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GameSource {
    Population {
        space: ActionSpace,
        population: AnnotatorPopulation,
    },
    Matrix {
        matrix: PreferenceMatrix,
    },
    /// A preference matrix JSON file, relative to the config file.
    MatrixFile {
        path: PathBuf,
    },
    BtRewards {
        space: ActionSpace,
        rewards: RewardTable,
    },
    Random {
        contexts: usize,
        actions: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeaderTies {
    /// Lowest action index among tied leader actions.
    LowestIndex,
    /// Uniform over the tied leader actions.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SolverSpec {
    Nash {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        method: NashMethod,
        #[serde(default)]
        tau: f64,
    },
    StackelbergExact {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        tau_leader: f64,
        tau_follower: f64,
    },
    StackelbergEnumerate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        #[serde(default = "default_ties")]
        leader_ties: LeaderTies,
    },
    StackelbergGda {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        #[serde(default)]
        config: GdaConfig,
    },
    /// The sampled solver; its `seed` field is replaced by a stream derived
    /// from the master seed.
    StackelbergGdaStochastic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        #[serde(default)]
        config: StochasticGdaConfig,
    },
    Rlhf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
        dataset: DatasetSpec,
        #[serde(default)]
        lambda: f64,
        tau: f64,
    },
}

fn default_ties() -> LeaderTies {
    LeaderTies::LowestIndex
}

impl SolverSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            SolverSpec::Nash { .. } => "nash",
            SolverSpec::StackelbergExact { .. } => "stackelberg-exact",
            SolverSpec::StackelbergEnumerate { .. } => "stackelberg-enumerate",
            SolverSpec::StackelbergGda { .. } => "stackelberg-gda",
            SolverSpec::StackelbergGdaStochastic { .. } => "stackelberg-gda-stochastic",
            SolverSpec::Rlhf { .. } => "rlhf",
        }
    }

    pub fn explicit_id(&self) -> Option<&str> {
        match self {
            SolverSpec::Nash { id, .. }
            | SolverSpec::StackelbergExact { id, .. }
            | SolverSpec::StackelbergEnumerate { id, .. }
            | SolverSpec::StackelbergGda { id, .. }
            | SolverSpec::StackelbergGdaStochastic { id, .. }
            | SolverSpec::Rlhf { id, .. } => id.as_deref(),
        }
    }

    fn is_stochastic(&self) -> bool {
        matches!(
            self,
            SolverSpec::StackelbergGdaStochastic { .. } | SolverSpec::Rlhf { dataset: DatasetSpec::Sampled { .. }, .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetSpec {
    Inline {
        dataset: ComparisonDataset,
    },
    File {
        path: PathBuf,
    },
    /// `per_pair` comparisons of each listed pair in every context, outcomes
    /// drawn from the game's preference matrix.
    Sampled {
        pairs: Vec<[String; 2]>,
        per_pair: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetRef {
    /// The top-ranked action of a named annotator type.
    Annotator(String),
    /// Explicit action labels, one list per context.
    Actions(Vec<Vec<String>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementTask {
    /// A policy id from the report: `<solver>` samples the solver's full
    /// output (the leader/follower chain for sequential solvers),
    /// `<solver>:leader` resamples the leader alone.
    pub policy: String,
    pub target: TargetRef,
    pub n: Vec<usize>,
    /// Monte Carlo trials per context; 0 reports the analytic value only.
    #[serde(default)]
    pub trials: u64,
    /// Overrides the seed derived from the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(s).map_err(|e| HarnessError::parse("scenario config", e))?;
        if cfg.schema != SCENARIO_SCHEMA {
            return Err(HarnessError::Config(format!("unknown schema tag {:?}", cfg.schema)));
        }
        Ok(cfg)
    }

    /// Reads a config file, resolving relative file references against its
    /// directory and checking that they exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| -> Result<()> {
            if p.is_relative() {
                *p = base.join(&*p);
            }
            if !p.is_file() {
                return Err(HarnessError::Config(format!("referenced file {} does not exist", p.display())));
            }
            Ok(())
        };
        if let GameSource::MatrixFile { path } = &mut cfg.game {
            resolve(path)?;
        }
        for s in &mut cfg.solvers {
            if let SolverSpec::Rlhf { dataset: DatasetSpec::File { path }, .. } = s {
                resolve(path)?;
            }
        }
        if let Some(out) = &mut cfg.output {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn needs_seed(&self) -> bool {
        self.solvers.iter().any(SolverSpec::is_stochastic)
            || self.refinement.iter().any(|t| t.trials > 0 && t.seed.is_none())
    }

    /// Checks the cross-field rules that the JSON schema cannot express.
    pub fn validate(&self) -> Result<()> {
        if self.needs_seed() && self.seed.is_none() {
            return Err(HarnessError::Config(
                "a stochastic component is configured but no master seed is set".into(),
            ));
        }
        let mut ids: Vec<&str> = Vec::new();
        for s in &self.solvers {
            if let Some(id) = s.explicit_id() {
                if id.contains(':') {
                    return Err(HarnessError::Config(format!("solver id {id:?} may not contain ':'")));
                }
                if ids.contains(&id) {
                    return Err(HarnessError::Config(format!("duplicate solver id {id:?}")));
                }
                ids.push(id);
            }
        }
        for t in &self.refinement {
            if t.n.is_empty() || t.n.contains(&0) {
                return Err(HarnessError::Config(format!("refinement of {:?}: N values must be at least 1", t.policy)));
            }
        }
        Ok(())
    }
}

/// The bundled acceptance scenarios, by name.
pub fn bundled(name: &str) -> Option<ScenarioConfig> {
    let text = match name {
        "condorcet-third" => include_str!("../scenarios/condorcet-third.json"),
        "condorcet-dominant" => include_str!("../scenarios/condorcet-dominant.json"),
        "rlhf-sensitivity" => include_str!("../scenarios/rlhf-sensitivity.json"),
        "kappa-ablation" => include_str!("../scenarios/kappa-ablation.json"),
        _ => return None,
    };
    Some(ScenarioConfig::from_json(text).expect("bundled scenarios parse"))
}

pub const BUNDLED: [&str; 4] = ["condorcet-third", "condorcet-dominant", "rlhf-sensitivity", "kappa-ablation"];
