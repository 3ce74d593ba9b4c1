//! Discrete-time contention simulator.
//!
//! `N` agents complete `jobs` copies of a task. Subtask `i` occupies an agent
//! for `d_i = max(1, round(f_i * D))` steps and at most `C_i` agents may be
//! inside it at once. Each step has three phases: idle agents try to enter a
//! subtask (lowest agent index first), busy agents advance, and finished
//! subtasks release their slot.
//!
//! Generalists run identical policies: every agent carries its own job, and
//! the team moves through the subtasks together, so all of them attempt the
//! same subtask at the same time and the ones that find it full wait.
//! Specialists repeat the subtasks in their role and hand jobs through
//! unbounded buffers; an agent with several roles prefers the latest stage.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specialization::si_from_counts;
use crate::task::{parallelizability, Capacity, TaskError, TaskGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("deadlock at step {step}: {snapshot}")]
    Deadlock { step: u64, snapshot: String },
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// Subtasks each agent is allowed to work on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    roles: Vec<Vec<usize>>,
}

impl Assignment {
    pub fn new(roles: Vec<Vec<usize>>) -> Self {
        let roles = roles
            .into_iter()
            .map(|mut r| {
                r.sort_unstable();
                r.dedup();
                r
            })
            .collect();
        Self { roles }
    }

    /// One single-subtask role per agent from per-subtask agent counts.
    pub fn from_counts(counts: &[usize]) -> Self {
        let roles = counts
            .iter()
            .enumerate()
            .flat_map(|(stage, &k)| std::iter::repeat_n(vec![stage], k))
            .collect();
        Self { roles }
    }

    pub fn roles(&self) -> &[Vec<usize>] {
        &self.roles
    }

    /// Agents that may work on each subtask.
    pub fn counts(&self, stages: usize) -> Vec<usize> {
        let mut counts = vec![0; stages];
        for stage in self.roles.iter().flatten() {
            if let Some(c) = counts.get_mut(*stage) {
                *c += 1;
            }
        }
        counts
    }

    fn validate(&self, agents: usize, stages: usize) -> Result<(), SimError> {
        if self.roles.len() != agents {
            return Err(SimError::InvalidAssignment(format!(
                "{} roles for {agents} agents",
                self.roles.len()
            )));
        }
        if let Some(bad) = self.roles.iter().flatten().find(|&&s| s >= stages) {
            return Err(SimError::InvalidAssignment(format!("subtask {bad} does not exist")));
        }
        if let Some(uncovered) = self.counts(stages).iter().position(|&c| c == 0) {
            return Err(SimError::InvalidAssignment(format!("subtask {uncovered} has no agent")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Generalist,
    Specialist(Assignment),
    GreedySpecialist,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Generalist => "generalist",
            Policy::Specialist(_) => "specialist",
            Policy::GreedySpecialist => "greedy_specialist",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub task: TaskGraph,
    pub agents: usize,
    /// Steps for one agent to complete a whole job.
    pub duration: u32,
    pub jobs: usize,
    pub policy: Policy,
    /// Extra steps whenever an agent enters a different subtask than its last.
    pub switch_cost: u32,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(task: TaskGraph, agents: usize, duration: u32, jobs: usize, policy: Policy) -> Self {
        Self {
            task,
            agents,
            duration,
            jobs,
            policy,
            switch_cost: 0,
            seed: 0,
        }
    }

    /// Per-subtask step counts `max(1, round(f_i * D))`.
    pub fn stage_durations(&self) -> Vec<u32> {
        self.task
            .fractions()
            .iter()
            .map(|f| ((f * self.duration as f64).round() as u32).max(1))
            .collect()
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.agents == 0 {
            return Err(SimError::InvalidConfig("at least one agent is required".into()));
        }
        if self.jobs == 0 {
            return Err(SimError::InvalidConfig("at least one job is required".into()));
        }
        if (self.duration as usize) < self.task.len() {
            return Err(SimError::InvalidConfig(format!(
                "duration {} is shorter than the {} subtasks",
                self.duration,
                self.task.len()
            )));
        }
        if self.task.len() > 64 {
            return Err(SimError::InvalidConfig("at most 64 subtasks are supported".into()));
        }
        if let Policy::Specialist(a) = &self.policy {
            a.validate(self.agents, self.task.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub policy: String,
    pub agents: usize,
    pub jobs: usize,
    pub makespan: u64,
    pub throughput: f64,
    pub speedup: f64,
    pub idle_fraction: f64,
    pub per_agent_subtask_counts: Vec<Vec<u64>>,
    pub si: f64,
    pub seed: u64,
}

impl SimResult {
    /// Agents that completed at least one subtask.
    pub fn participants(&self) -> usize {
        self.per_agent_subtask_counts
            .iter()
            .filter(|r| r.iter().sum::<u64>() > 0)
            .count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Work {
    stage: usize,
    job: usize,
    remaining: u32,
}

struct Outcome {
    makespan: u64,
    idle_steps: u64,
    counts: Vec<Vec<u64>>,
}

struct Engine {
    durations: Vec<u32>,
    caps: Vec<usize>,
    order: Vec<usize>,
    rank: Vec<usize>,
    pred_mask: Vec<u64>,
    switch_cost: u32,
    jobs: usize,
    occupancy: Vec<usize>,
    busy: Vec<Option<Work>>,
    last_stage: Vec<Option<usize>>,
    counts: Vec<Vec<u64>>,
    started: Vec<u64>,
    done: Vec<u64>,
    first_unstarted: Vec<usize>,
    completed_jobs: usize,
    idle_steps: u64,
    step: u64,
    since_progress: u64,
    watchdog: u64,
}

impl Engine {
    fn new(config: &SimConfig, agents: usize) -> Result<Self, SimError> {
        let m = config.task.len();
        let durations = config.stage_durations();
        let order = config.task.topological_order()?;
        let mut rank = vec![0; m];
        for (pos, &s) in order.iter().enumerate() {
            rank[s] = pos;
        }
        let pred_mask = (0..m)
            .map(|s| config.task.predecessors(s).fold(0u64, |acc, p| acc | (1 << p)))
            .collect();
        let caps = config
            .task
            .capacities()
            .iter()
            .map(|c| match c {
                Capacity::Finite(c) => *c as usize,
                Capacity::Unbounded => usize::MAX,
            })
            .collect();
        let max_d = *durations.iter().max().unwrap() as u64;
        Ok(Self {
            watchdog: (max_d.max(config.duration as u64) + config.switch_cost as u64) * m as u64 + 1,
            durations,
            caps,
            order,
            rank,
            pred_mask,
            switch_cost: config.switch_cost,
            jobs: config.jobs,
            occupancy: vec![0; m],
            busy: vec![None; agents],
            last_stage: vec![None; agents],
            counts: vec![vec![0; m]; agents],
            started: vec![0; config.jobs],
            done: vec![0; config.jobs],
            first_unstarted: vec![0; m],
            completed_jobs: 0,
            idle_steps: 0,
            step: 0,
            since_progress: 0,
        })
    }

    fn all_stages(&self) -> u64 {
        if self.durations.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.durations.len()) - 1
        }
    }

    fn has_room(&self, stage: usize) -> bool {
        self.occupancy[stage] < self.caps[stage]
    }

    fn enter(&mut self, agent: usize, stage: usize, job: usize) {
        let mut remaining = self.durations[stage];
        if self.last_stage[agent].is_some_and(|s| s != stage) {
            remaining += self.switch_cost;
        }
        self.occupancy[stage] += 1;
        self.started[job] |= 1 << stage;
        self.last_stage[agent] = Some(stage);
        self.busy[agent] = Some(Work { stage, job, remaining });
    }

    /// First job whose predecessors of `stage` are done and which nobody has
    /// started at `stage` yet.
    fn ready_job(&mut self, stage: usize) -> Option<usize> {
        let bit = 1u64 << stage;
        let mut j = self.first_unstarted[stage];
        while j < self.jobs && self.started[j] & bit != 0 {
            j += 1;
        }
        self.first_unstarted[stage] = j;
        let need = self.pred_mask[stage];
        (j..self.jobs).find(|&k| self.started[k] & bit == 0 && self.done[k] & need == need)
    }

    /// Advances busy agents by one step; returns agents that finished.
    fn advance(&mut self) -> Vec<usize> {
        let mut finished = Vec::new();
        let full = self.all_stages();
        for agent in 0..self.busy.len() {
            let Some(work) = self.busy[agent].as_mut() else { continue };
            work.remaining -= 1;
            if work.remaining == 0 {
                let Work { stage, job, .. } = *work;
                self.busy[agent] = None;
                self.occupancy[stage] -= 1;
                self.done[job] |= 1 << stage;
                self.counts[agent][stage] += 1;
                if self.done[job] == full {
                    self.completed_jobs += 1;
                }
                finished.push(agent);
            }
        }
        self.step += 1;
        if finished.is_empty() {
            self.since_progress += 1;
        } else {
            self.since_progress = 0;
        }
        finished
    }

    fn check_progress(&self) -> Result<(), SimError> {
        if self.since_progress > self.watchdog {
            return Err(SimError::Deadlock {
                step: self.step,
                snapshot: format!(
                    "occupancy {:?}, busy agents {}, completed jobs {}/{}",
                    self.occupancy,
                    self.busy.iter().filter(|b| b.is_some()).count(),
                    self.completed_jobs,
                    self.jobs
                ),
            });
        }
        Ok(())
    }

    fn outcome(self) -> Outcome {
        Outcome {
            makespan: self.step,
            idle_steps: self.idle_steps,
            counts: self.counts,
        }
    }

    fn run_generalist(mut self) -> Result<Outcome, SimError> {
        let agents = self.busy.len();
        let m = self.order.len();
        let mut next_job = 0;
        // (agent, job) pairs of the current round and the phase they are in
        let mut round: Vec<(usize, usize)> = Vec::new();
        let mut phase = 0;
        let mut phase_done = vec![false; agents];

        while self.completed_jobs < self.jobs {
            if round.is_empty() {
                let size = agents.min(self.jobs - next_job);
                round = (0..size).map(|a| (a, next_job + a)).collect();
                next_job += size;
                phase = 0;
                phase_done.iter_mut().for_each(|d| *d = false);
            }
            let stage = self.order[phase];
            for &(agent, job) in &round {
                if phase_done[agent] || self.busy[agent].is_some() {
                    continue;
                }
                if self.has_room(stage) {
                    self.enter(agent, stage, job);
                } else {
                    self.idle_steps += 1;
                }
            }
            for agent in self.advance() {
                phase_done[agent] = true;
            }
            self.check_progress()?;
            if round.iter().all(|&(a, _)| phase_done[a]) {
                phase_done.iter_mut().for_each(|d| *d = false);
                phase += 1;
                if phase == m {
                    round.clear();
                }
            }
        }
        Ok(self.outcome())
    }

    fn run_specialist(mut self, roles: &[Vec<usize>]) -> Result<Outcome, SimError> {
        // latest stage first within each role
        let prefs: Vec<Vec<usize>> = roles
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.sort_by_key(|&s| std::cmp::Reverse(self.rank[s]));
                r
            })
            .collect();

        while self.completed_jobs < self.jobs {
            for (agent, pref) in prefs.iter().enumerate() {
                if self.busy[agent].is_some() {
                    continue;
                }
                let mut waiting = false;
                let mut entered = false;
                for &stage in pref {
                    let Some(job) = self.ready_job(stage) else { continue };
                    if self.has_room(stage) {
                        self.enter(agent, stage, job);
                        entered = true;
                        break;
                    }
                    waiting = true;
                }
                if waiting && !entered {
                    self.idle_steps += 1;
                }
            }
            self.advance();
            self.check_progress()?;
        }
        Ok(self.outcome())
    }
}

fn run(config: &SimConfig, agents: usize, policy: &Policy) -> Result<Outcome, SimError> {
    let engine = Engine::new(config, agents)?;
    match policy {
        Policy::Generalist => engine.run_generalist(),
        Policy::Specialist(a) => engine.run_specialist(a.roles()),
        Policy::GreedySpecialist => {
            let all: Vec<usize> = (0..config.task.len()).collect();
            engine.run_specialist(&vec![all; agents])
        }
    }
}

/// Runs the configured policy and a one-agent reference on the same task.
pub fn simulate(config: &SimConfig) -> Result<SimResult, SimError> {
    config.validate()?;
    let outcome = run(config, config.agents, &config.policy)?;
    let single = run(config, 1, &Policy::Generalist)?;

    let participating: Vec<&Vec<u64>> = outcome
        .counts
        .iter()
        .filter(|r| r.iter().sum::<u64>() > 0)
        .collect();
    let si = if participating.len() < 2 {
        0.0
    } else {
        si_from_counts(&participating).expect("participating rows have counts")
    };
    let throughput = config.jobs as f64 / outcome.makespan as f64;
    let single_throughput = config.jobs as f64 / single.makespan as f64;
    Ok(SimResult {
        policy: config.policy.name().to_string(),
        agents: config.agents,
        jobs: config.jobs,
        makespan: outcome.makespan,
        throughput,
        speedup: throughput / single_throughput,
        idle_fraction: outcome.idle_steps as f64 / (config.agents as u64 * outcome.makespan) as f64,
        per_agent_subtask_counts: outcome.counts,
        si,
        seed: config.seed,
    })
}

/// Water-filling role allocation.
///
/// With at least as many agents as subtasks, every subtask gets one agent and
/// each further agent goes to the subtask with the largest `f_i / k_i` among
/// those still below their capacity; agents left over once every subtask is
/// capped get no role. With fewer agents than subtasks, the subtasks are cut
/// (in topological order) into contiguous groups minimizing the largest
/// group fraction, one group per agent.
pub fn optimal_specialist_assignment(task: &TaskGraph, agents: usize) -> Result<Assignment, SimError> {
    if agents == 0 {
        return Err(SimError::InvalidConfig("at least one agent is required".into()));
    }
    let m = task.len();
    let fractions = task.fractions();
    let caps = task.capacities();
    if agents < m {
        let order = task.topological_order()?;
        let weights: Vec<f64> = order.iter().map(|&s| fractions[s]).collect();
        let groups = balanced_partition(&weights, agents);
        let roles = groups
            .into_iter()
            .map(|range| range.map(|pos| order[pos]).collect())
            .collect();
        return Ok(Assignment::new(roles));
    }

    let mut counts = vec![1usize; m];
    let below_cap = |s: usize, k: usize| match caps[s] {
        Capacity::Finite(c) => k < c as usize,
        Capacity::Unbounded => true,
    };
    let mut spare = Vec::new();
    for agent in m..agents {
        let best = (0..m)
            .filter(|&s| below_cap(s, counts[s]))
            .max_by(|&a, &b| {
                let (la, lb) = (fractions[a] / counts[a] as f64, fractions[b] / counts[b] as f64);
                // earlier subtask wins ties
                la.partial_cmp(&lb).unwrap().then(b.cmp(&a))
            });
        match best {
            Some(s) => counts[s] += 1,
            None => spare.push(agent),
        }
    }
    let mut roles: Vec<Vec<usize>> = Assignment::from_counts(&counts).roles;
    roles.extend(spare.iter().map(|_| Vec::new()));
    Ok(Assignment { roles })
}

/// Splits `weights` into `parts` non-empty contiguous ranges minimizing the
/// largest range sum.
fn balanced_partition(weights: &[f64], parts: usize) -> Vec<std::ops::Range<usize>> {
    let m = weights.len();
    let prefix: Vec<f64> = std::iter::once(0.0)
        .chain(weights.iter().scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        }))
        .collect();
    // best[k][i]: minimal max-sum splitting weights[..i] into k ranges
    let mut best = vec![vec![f64::INFINITY; m + 1]; parts + 1];
    let mut cut = vec![vec![0usize; m + 1]; parts + 1];
    best[0][0] = 0.0;
    for k in 1..=parts {
        for i in k..=m {
            for j in (k - 1)..i {
                let cost = best[k - 1][j].max(prefix[i] - prefix[j]);
                if cost < best[k][i] {
                    best[k][i] = cost;
                    cut[k][i] = j;
                }
            }
        }
    }
    let mut ranges = Vec::with_capacity(parts);
    let mut end = m;
    for k in (1..=parts).rev() {
        let start = cut[k][end];
        ranges.push(start..end);
        end = start;
    }
    ranges.reverse();
    ranges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub bound: f64,
    pub generalist: SimResult,
    pub specialist: SimResult,
    pub greedy_specialist: SimResult,
}

impl PolicyComparison {
    /// The higher-throughput of the two specialist variants.
    pub fn best_specialist(&self) -> &SimResult {
        if self.greedy_specialist.throughput > self.specialist.throughput {
            &self.greedy_specialist
        } else {
            &self.specialist
        }
    }

    /// Highest-throughput policy, preferring the generalist, then the
    /// water-filling specialist, on ties.
    pub fn best(&self) -> &SimResult {
        [&self.specialist, &self.greedy_specialist]
            .into_iter()
            .fold(&self.generalist, |best, r| if r.throughput > best.throughput { r } else { best })
    }
}

/// Runs the generalist, water-filling specialist and greedy specialist
/// policies on the same instance, alongside the analytic bound.
pub fn compare_policies(base: &SimConfig) -> Result<PolicyComparison, SimError> {
    let bound = parallelizability(&base.task, base.agents)?.s;
    let with = |policy: Policy| SimConfig {
        policy,
        ..base.clone()
    };
    let assignment = optimal_specialist_assignment(&base.task, base.agents)?;
    Ok(PolicyComparison {
        bound,
        generalist: simulate(&with(Policy::Generalist))?,
        specialist: simulate(&with(Policy::Specialist(assignment)))?,
        greedy_specialist: simulate(&with(Policy::GreedySpecialist))?,
    })
}

/// Random integer-duration instance: durations `d_i` in `1..=max_steps`,
/// fractions `d_i / D` with `D = sum d_i`, so discretization is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstance {
    pub task: TaskGraph,
    pub agents: usize,
    pub duration: u32,
    pub jobs: usize,
}

impl RandomInstance {
    pub fn config(&self, policy: Policy) -> SimConfig {
        SimConfig::new(self.task.clone(), self.agents, self.duration, self.jobs, policy)
    }
}

/// Capacity regimes for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityRegime {
    /// Every capacity at least the team size.
    Full,
    /// At least one capacity below the team size.
    Bottlenecked,
    Any,
}

pub fn random_instance<R: rand::Rng>(rng: &mut R, regime: CapacityRegime) -> RandomInstance {
    let m = rng.gen_range(1..=4usize);
    let agents = match regime {
        CapacityRegime::Bottlenecked => rng.gen_range(2..=5usize),
        _ => rng.gen_range(1..=5usize),
    };
    let durations: Vec<u32> = (0..m).map(|_| rng.gen_range(1..=6u32)).collect();
    let total: u32 = durations.iter().sum();
    let fractions: Vec<f64> = durations.iter().map(|&d| d as f64 / total as f64).collect();
    let draw = |rng: &mut R| -> Capacity {
        if rng.gen_bool(0.25) {
            Capacity::Unbounded
        } else {
            Capacity::Finite(rng.gen_range(1..=agents as u32 + 1))
        }
    };
    let mut caps: Vec<Capacity> = (0..m).map(|_| draw(rng)).collect();
    match regime {
        CapacityRegime::Full => {
            for c in &mut caps {
                if c.limit(agents) < agents {
                    *c = Capacity::Finite(agents as u32 + rng.gen_range(0..=2u32));
                }
            }
        }
        CapacityRegime::Bottlenecked => {
            if caps.iter().all(|c| c.limit(agents) == agents) {
                let i = rng.gen_range(0..m);
                caps[i] = Capacity::Finite(rng.gen_range(1..agents as u32));
            }
        }
        CapacityRegime::Any => {}
    }
    let task = TaskGraph::from_fractions(&fractions, &caps).expect("integer durations give valid fractions");
    RandomInstance {
        task,
        agents,
        duration: total,
        jobs: agents * rng.gen_range(4..=10usize),
    }
}
