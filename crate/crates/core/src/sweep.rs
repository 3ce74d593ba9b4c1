//! Experiment sweeps and their CSV outputs.
//!
//! Every CSV starts with a `# schema=1` comment line, then a header.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::learn::{run_seeds, select_best_seeds, state_size_sweep, LearnRow, QLearningConfig};
use crate::sim::{compare_policies, random_instance, CapacityRegime, Policy, SimConfig, SimResult};
use crate::spec::{default_eval_episodes, EnvSource, LearnEnvSpec, LearnSpec, SeedSelection, Seeds, SpecError};
use crate::table::{Table, TableError};
use crate::task::{parallelizability, Regime, TaskGraph};

pub const SCHEMA_LINE: &str = "# schema=1";
pub const DEFAULT_SI_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub env_id: String,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub si: Option<f64>,
    pub reward: Option<f64>,
    pub seed: u64,
    pub regime_predicted: String,
    pub regime_observed: Option<String>,
}

/// Specialist when the bound leaves agents unable to work in parallel.
pub fn predicted_regime(s: f64, n: usize) -> Regime {
    if s < n as f64 - 1e-9 {
        Regime::Specialist
    } else {
        Regime::Generalist
    }
}

impl SweepRow {
    pub fn new(env_id: String, s: f64, n: usize, si: Option<f64>, reward: Option<f64>, seed: u64, threshold: f64) -> Self {
        Self {
            env_id,
            s,
            n,
            si,
            reward,
            seed,
            regime_predicted: predicted_regime(s, n).as_str().to_string(),
            regime_observed: si.map(|v| Regime::from_si(v, threshold).as_str().to_string()),
        }
    }
}

/// Per-policy simulation row: `S,N,policy,speedup,idle,si,seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub policy: String,
    pub speedup: f64,
    pub idle: f64,
    pub si: f64,
    pub seed: u64,
}

impl SimRow {
    pub fn new(s: f64, result: &SimResult) -> Self {
        Self {
            s,
            n: result.agents,
            policy: result.policy.clone(),
            speedup: result.speedup,
            idle: result.idle_fraction,
            si: result.si,
            seed: result.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepEntry {
    /// Bound only; the expected SI is 0 when agents can all work at once
    /// and 1 otherwise.
    Analytic {
        env_id: String,
        #[serde(flatten)]
        source: EnvSource,
        agents: usize,
    },
    /// Simulated policies; the row reports the highest-throughput one.
    Sim {
        env_id: String,
        #[serde(flatten)]
        source: EnvSource,
        agents: usize,
        duration: u32,
        jobs: usize,
        #[serde(default)]
        switch_cost: u32,
    },
    /// Trained learners; the row reports the best seed.
    Learner {
        #[serde(flatten)]
        env: LearnEnvSpec,
        #[serde(default)]
        seeds: Seeds,
        #[serde(default = "default_eval_episodes")]
        eval_episodes: usize,
        #[serde(default = "one")]
        recipe: u32,
        #[serde(default)]
        padding: u32,
        #[serde(default)]
        learner: QLearningConfig,
    },
    /// `count` random simulator instances with ids `<prefix>_000`, ...
    RandomSuite {
        #[serde(default = "random_prefix")]
        prefix: String,
        count: usize,
        #[serde(default = "any_regime")]
        regime: CapacityRegime,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

fn one() -> u32 {
    1
}

fn random_prefix() -> String {
    "random".into()
}

fn any_regime() -> CapacityRegime {
    CapacityRegime::Any
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default = "default_threshold")]
    pub si_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub entries: Vec<SweepEntry>,
}

fn default_threshold() -> f64 {
    DEFAULT_SI_THRESHOLD
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<(Self, std::path::PathBuf), SpecError> {
        let spec = crate::spec::read_json(path)?;
        Ok((spec, path.parent().map(Path::to_path_buf).unwrap_or_default()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// `(env_id, error)` for rows that failed and were left out.
    pub failures: Vec<(String, String)>,
}

#[allow(clippy::too_many_arguments)]
fn sim_row(env_id: String, task: TaskGraph, agents: usize, duration: u32, jobs: usize, switch_cost: u32, seed: u64, threshold: f64) -> Result<SweepRow, SpecError> {
    let mut config = SimConfig::new(task, agents, duration, jobs, Policy::Generalist);
    config.switch_cost = switch_cost;
    config.seed = seed;
    let comparison = compare_policies(&config)?;
    let best = comparison.best();
    Ok(SweepRow::new(
        env_id,
        comparison.bound,
        agents,
        Some(best.si),
        Some(best.throughput),
        seed,
        threshold,
    ))
}

/// Runs every entry not listed in `skip`. Rows that fail are recorded in
/// [`SweepOutcome::failures`] and the sweep carries on.
pub fn run_sweep(spec: &SweepSpec, base: &Path, default_seed: u64, skip: &BTreeSet<String>) -> SweepOutcome {
    let seed = spec.seed.unwrap_or(default_seed);
    let threshold = spec.si_threshold;
    let mut out = SweepOutcome::default();
    let record = |id: String, row: Result<SweepRow, SpecError>, out: &mut SweepOutcome| match row {
        Ok(r) => out.rows.push(r),
        Err(e) => out.failures.push((id, e.to_string())),
    };

    for entry in &spec.entries {
        match entry {
            SweepEntry::Analytic { env_id, source, agents } => {
                if skip.contains(env_id) {
                    continue;
                }
                let row = source.task_graph(base).and_then(|task| {
                    let s = parallelizability(&task, *agents)?.s;
                    let expected = match predicted_regime(s, *agents) {
                        Regime::Generalist => 0.0,
                        Regime::Specialist => 1.0,
                    };
                    Ok(SweepRow::new(env_id.clone(), s, *agents, Some(expected), None, seed, threshold))
                });
                record(env_id.clone(), row, &mut out);
            }
            SweepEntry::Sim {
                env_id,
                source,
                agents,
                duration,
                jobs,
                switch_cost,
            } => {
                if skip.contains(env_id) {
                    continue;
                }
                let row = source
                    .task_graph(base)
                    .and_then(|task| sim_row(env_id.clone(), task, *agents, *duration, *jobs, *switch_cost, seed, threshold));
                record(env_id.clone(), row, &mut out);
            }
            SweepEntry::Learner {
                env,
                seeds,
                eval_episodes,
                recipe,
                padding,
                learner,
            } => {
                if skip.contains(&env.env_id) {
                    continue;
                }
                let row = env.build(base, *recipe).and_then(|(s, base_env)| {
                    let e = base_env.with_padding(*padding);
                    let rows = run_seeds(&env.env_id, s, &e, *recipe, learner, &seeds.list(), *eval_episodes)?;
                    let best = select_best_seeds(&rows)
                        .pop()
                        .ok_or_else(|| SpecError::Invalid("every seed was excluded".into()))?;
                    Ok(SweepRow::new(env.env_id.clone(), s, env.agents, best.si, Some(best.reward), best.seed, threshold))
                });
                record(env.env_id.clone(), row, &mut out);
            }
            SweepEntry::RandomSuite {
                prefix,
                count,
                regime,
                seed: suite_seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(suite_seed.unwrap_or(seed));
                for k in 0..*count {
                    let inst = random_instance(&mut rng, *regime);
                    let id = format!("{prefix}_{k:03}");
                    if skip.contains(&id) {
                        continue;
                    }
                    let row = sim_row(id.clone(), inst.task, inst.agents, inst.duration, inst.jobs, 0, seed, threshold);
                    record(id, row, &mut out);
                }
            }
        }
    }
    out
}

/// Writes `# schema=1`, then a header unless `header` is false, then rows.
pub fn write_csv<W: Write, T: Serialize>(mut writer: W, rows: &[T], header: bool) -> Result<(), csv::Error> {
    if header {
        writeln!(writer, "{SCHEMA_LINE}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Header-only CSV for a row type with no rows to infer it from.
pub fn write_empty_csv<W: Write>(mut writer: W, columns: &[&str]) -> std::io::Result<()> {
    writeln!(writer, "{SCHEMA_LINE}")?;
    writeln!(writer, "{}", columns.join(","))
}

pub const SWEEP_COLUMNS: [&str; 8] = ["env_id", "S", "N", "si", "reward", "seed", "regime_predicted", "regime_observed"];
pub const LEARN_COLUMNS: [&str; 8] = ["env_id", "S", "N", "padding", "recipe", "seed", "si", "reward"];

/// Environment ids already present in an earlier sweep output.
pub fn completed_env_ids<R: std::io::Read>(reader: R) -> Result<BTreeSet<String>, TableError> {
    let table = Table::from_reader(reader)?;
    let idx = table.column_index("env_id")?;
    Ok(table.rows.iter().filter_map(|r| r.get(idx).cloned()).collect())
}

/// Runs a learner spec: every environment, recipe and padding level over
/// every seed, optionally reduced to the best seed of each group.
pub fn run_learn(spec: &LearnSpec, base: &Path) -> Result<Vec<LearnRow>, SpecError> {
    let seeds = spec.seeds.list();
    let mut rows = Vec::new();
    for env in &spec.envs {
        rows.extend(state_size_sweep(
            &env.env_id,
            |recipe| env.build(base, recipe),
            &spec.paddings,
            &spec.recipes,
            &spec.learner,
            &seeds,
            spec.eval_episodes,
        )?);
    }
    Ok(match spec.select {
        SeedSelection::All => rows,
        SeedSelection::BestSeed => select_best_seeds(&rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::TaskSpec;
    use crate::spec::TaskRef;
    use crate::task::Capacity;

    fn analytic(id: &str, fractions: &[f64], caps: &[Capacity], agents: usize) -> SweepEntry {
        SweepEntry::Analytic {
            env_id: id.into(),
            source: EnvSource {
                layout: None,
                task: TaskRef::Inline(TaskSpec::explicit(fractions, caps)),
            },
            agents,
        }
    }

    #[test]
    fn analytic_endpoints() {
        let spec = SweepSpec {
            si_threshold: 0.5,
            seed: None,
            entries: vec![
                analytic("smac", &[0.5, 0.5], &[Capacity::Unbounded; 2], 3),
                analytic("mpe", &[0.5, 0.5], &[Capacity::Finite(1); 2], 2),
            ],
        };
        let out = run_sweep(&spec, Path::new("."), 0, &BTreeSet::new());
        assert!(out.failures.is_empty());
        assert_eq!(out.rows.len(), 2);
        assert_eq!((out.rows[0].s, out.rows[0].si), (3.0, Some(0.0)));
        assert_eq!((out.rows[1].s, out.rows[1].si), (1.0, Some(1.0)));
        assert_eq!(out.rows[1].regime_predicted, "specialist");
        assert_eq!(out.rows[1].regime_observed.as_deref(), Some("specialist"));
    }

    #[test]
    fn empty_spec_gives_header_only() {
        let out = run_sweep(&serde_json::from_str("{}").unwrap(), Path::new("."), 0, &BTreeSet::new());
        assert!(out.rows.is_empty());
        let mut buf = Vec::new();
        write_empty_csv(&mut buf, &SWEEP_COLUMNS).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# schema=1\nenv_id,S,N,si,reward,seed,regime_predicted,regime_observed\n"
        );
    }

    #[test]
    fn failures_do_not_abort() {
        let spec = SweepSpec {
            si_threshold: 0.5,
            seed: None,
            entries: vec![
                analytic("bad", &[0.7, 0.7], &[Capacity::Unbounded; 2], 2),
                analytic("good", &[1.0], &[Capacity::Unbounded], 2),
            ],
        };
        let out = run_sweep(&spec, Path::new("."), 0, &BTreeSet::new());
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].0, "bad");
    }

    #[test]
    fn entries_parse_from_json() {
        let json = r#"{"entries": [
            {"kind": "analytic", "env_id": "a", "task": {"subtasks": [{"id": "x", "fraction": 1.0}]}, "agents": 2},
            {"kind": "sim", "env_id": "b", "task": "tasks/t.json", "layout": "l.txt", "agents": 2, "duration": 10, "jobs": 4},
            {"kind": "random_suite", "count": 3, "regime": "bottlenecked"}
        ]}"#;
        let spec: SweepSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.entries.len(), 3);
        assert_eq!(spec.si_threshold, 0.5);
    }

    #[test]
    fn random_suite_resume_matches_full_run() {
        let spec: SweepSpec = serde_json::from_str(r#"{"entries": [{"kind": "random_suite", "count": 6}]}"#).unwrap();
        let full = run_sweep(&spec, Path::new("."), 4, &BTreeSet::new());
        assert_eq!(full.rows.len(), 6);
        let done: BTreeSet<String> = full.rows[..3].iter().map(|r| r.env_id.clone()).collect();
        let rest = run_sweep(&spec, Path::new("."), 4, &done);
        assert_eq!(rest.rows, full.rows[3..].to_vec());

        let mut first = Vec::new();
        write_csv(&mut first, &full.rows[..3], true).unwrap();
        write_csv(&mut first, &rest.rows, false).unwrap();
        let mut whole = Vec::new();
        write_csv(&mut whole, &full.rows, true).unwrap();
        assert_eq!(first, whole);
        assert_eq!(completed_env_ids(&whole[..]).unwrap().len(), 6);
    }

    #[test]
    fn csv_layout() {
        let row = SweepRow::new("e".into(), 1.5, 2, None, Some(2.0), 3, 0.5);
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row], true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# schema=1\nenv_id,S,N,si,reward,seed,regime_predicted,regime_observed\ne,1.5,2,,2.0,3,specialist,\n"
        );
    }
}
