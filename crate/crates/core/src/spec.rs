//! JSON experiment files. Relative paths inside a file resolve against the
//! file's own directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{EstimateError, TaskSpec};
use crate::layout::{build_graph, parse_layout, LayoutError, LayoutGraph};
use crate::learn::{LearnError, QLearningConfig, StageEnv};
use crate::sim::{optimal_specialist_assignment, Assignment, Policy, SimConfig, SimError};
use crate::task::{parallelizability, TaskError, TaskGraph};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Layout { path: PathBuf, source: LayoutError },
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("{0}")]
    Invalid(String),
}

impl SpecError {
    /// Problems with the inputs themselves, as opposed to failures while
    /// running a valid experiment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, SpecError::Sim(SimError::Deadlock { .. }))
    }
}

pub fn read_text(path: &Path) -> Result<String, SpecError> {
    fs::read_to_string(path).map_err(|source| SpecError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SpecError> {
    serde_json::from_str(&read_text(path)?).map_err(|source| SpecError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_layout(path: &Path) -> Result<LayoutGraph, SpecError> {
    let spec = parse_layout(&read_text(path)?).map_err(|source| SpecError::Layout {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(build_graph(&spec))
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn parent(file: &Path) -> PathBuf {
    file.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// A task given inline or as a path to a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TaskRef {
    Path(PathBuf),
    Inline(TaskSpec),
}

/// A task together with the layout it is estimated on, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<PathBuf>,
    pub task: TaskRef,
}

impl EnvSource {
    pub fn task_spec(&self, base: &Path) -> Result<TaskSpec, SpecError> {
        match &self.task {
            TaskRef::Path(p) => read_json(&resolve(base, p)),
            TaskRef::Inline(t) => Ok(t.clone()),
        }
    }

    pub fn layout_graph(&self, base: &Path) -> Result<Option<LayoutGraph>, SpecError> {
        self.layout.as_ref().map(|p| load_layout(&resolve(base, p))).transpose()
    }

    pub fn task_graph(&self, base: &Path) -> Result<TaskGraph, SpecError> {
        let spec = self.task_spec(base)?;
        let layout = self.layout_graph(base)?;
        Ok(spec.to_task_graph(layout.as_ref())?)
    }
}

/// `"generalist"`, `"specialist"` (water-filling roles),
/// `"greedy_specialist"`, or `{"specialist": [[roles of agent 0], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolicySpec {
    Named(String),
    Roles { specialist: Vec<Vec<usize>> },
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec::Named("generalist".into())
    }
}

impl PolicySpec {
    pub fn resolve(&self, task: &TaskGraph, agents: usize) -> Result<Policy, SpecError> {
        match self {
            PolicySpec::Roles { specialist } => Ok(Policy::Specialist(Assignment::new(specialist.clone()))),
            PolicySpec::Named(name) => match name.as_str() {
                "generalist" => Ok(Policy::Generalist),
                "specialist" => Ok(Policy::Specialist(optimal_specialist_assignment(task, agents)?)),
                "greedy_specialist" | "greedy" => Ok(Policy::GreedySpecialist),
                other => Err(SpecError::Invalid(format!("unknown policy {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    #[serde(flatten)]
    pub source: EnvSource,
    pub n_agents: usize,
    pub duration: u32,
    pub jobs: usize,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub switch_cost: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SimSpec {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), SpecError> {
        Ok((read_json(path)?, parent(path)))
    }

    pub fn config(&self, base: &Path, default_seed: u64) -> Result<SimConfig, SpecError> {
        let task = self.source.task_graph(base)?;
        let policy = self.policy.resolve(&task, self.n_agents)?;
        let mut config = SimConfig::new(task, self.n_agents, self.duration, self.jobs, policy);
        config.switch_cost = self.switch_cost;
        config.seed = self.seed.unwrap_or(default_seed);
        Ok(config)
    }
}

/// Seeds as an explicit list or a count starting at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(10)
    }
}

/// One learner environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnEnvSpec {
    pub env_id: String,
    #[serde(flatten)]
    pub source: EnvSource,
    pub agents: usize,
    pub duration: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handoff: Option<u32>,
}

impl LearnEnvSpec {
    /// Bound and unpadded environment for `recipe`. Layout-based tasks take
    /// the recipe's onion count into the estimate; explicit tasks stretch
    /// their first stage instead.
    pub fn build(&self, base: &Path, recipe: u32) -> Result<(f64, StageEnv), SpecError> {
        let mut spec = self.source.task_spec(base)?;
        let layout = self.source.layout_graph(base)?;
        let on_layout = spec.needs_layout();
        if on_layout {
            spec.recipe.onions = recipe;
        }
        let task = spec.to_task_graph(layout.as_ref())?;
        let s = parallelizability(&task, self.agents)?.s;
        let mut env = StageEnv::new(&task, self.agents, self.duration)?;
        if !on_layout {
            env = env.with_recipe(recipe);
        }
        if let Some(h) = self.handoff {
            env = env.with_handoff(h);
        }
        Ok((s, env))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSelection {
    #[default]
    All,
    BestSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnSpec {
    pub envs: Vec<LearnEnvSpec>,
    #[serde(default = "default_levels")]
    pub paddings: Vec<u32>,
    #[serde(default = "default_levels_one")]
    pub recipes: Vec<u32>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default)]
    pub select: SeedSelection,
    #[serde(default)]
    pub learner: QLearningConfig,
}

fn default_levels() -> Vec<u32> {
    vec![0]
}

fn default_levels_one() -> Vec<u32> {
    vec![1]
}

pub fn default_eval_episodes() -> usize {
    5
}

impl LearnSpec {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), SpecError> {
        Ok((read_json(path)?, parent(path)))
    }
}
