//! Independent tabular Q-learning on a staged production environment.
//!
//! Each job passes through the subtasks in topological order. An agent that
//! finishes a subtask keeps the item and may carry on with the next subtask,
//! or switch to other work, leaving the item in a shared buffer. Picking an
//! item up from a buffer costs `handoff` extra steps. Agents observe only
//! their own status, which subtasks are full, which buffers hold items, and
//! a padding value that carries no information about the task.
//!
//! Agents stay in the zone of the last subtask they worked on, and a zone
//! holds at most `C_i` agents. Moving into a full zone fails, so agents that
//! need to trade places through a bottleneck can only do so by handing work
//! off.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::specialization::si_from_counts;
use crate::task::{Capacity, TaskError, TaskGraph};

pub const MAX_STATES: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("state space has {0} states, more than the tabular limit of 100000")]
    StateSpaceTooLarge(usize),
    #[error("invalid learner config: {0}")]
    InvalidConfig(String),
    #[error("invalid environment: {0}")]
    InvalidEnv(String),
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEnv {
    durations: Vec<u32>,
    capacities: Vec<usize>,
    agents: usize,
    handoff: u32,
    padding: u32,
}

impl StageEnv {
    /// Stage durations are `max(1, round(f_i * duration))` along the
    /// topological order of `task`.
    pub fn new(task: &TaskGraph, agents: usize, duration: u32) -> Result<Self, LearnError> {
        if agents == 0 {
            return Err(LearnError::InvalidEnv("at least one agent is required".into()));
        }
        if task.len() > 8 {
            return Err(LearnError::InvalidEnv("at most 8 subtasks are supported".into()));
        }
        let order = task.topological_order()?;
        let fractions = task.fractions();
        let caps = task.capacities();
        Ok(Self {
            durations: order
                .iter()
                .map(|&i| ((fractions[i] * duration as f64).round() as u32).max(1))
                .collect(),
            capacities: order
                .iter()
                .map(|&i| match caps[i] {
                    Capacity::Finite(c) => c as usize,
                    Capacity::Unbounded => agents,
                })
                .collect(),
            agents,
            handoff: 2,
            padding: 0,
        })
    }

    /// Multiplies the first stage's duration by the number of ingredients.
    pub fn with_recipe(mut self, ingredients: u32) -> Self {
        self.durations[0] *= ingredients.max(1);
        self
    }

    /// Adds a padding observation taking `level + 1` values.
    pub fn with_padding(mut self, level: u32) -> Self {
        self.padding = level;
        self
    }

    pub fn with_handoff(mut self, steps: u32) -> Self {
        self.handoff = steps;
        self
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn stages(&self) -> usize {
        self.durations.len()
    }

    pub fn durations(&self) -> &[u32] {
        &self.durations
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    pub fn padding(&self) -> u32 {
        self.padding
    }

    /// Actions: `Work(i)` for each stage, then `Wait`.
    pub fn action_count(&self) -> usize {
        self.stages() + 1
    }

    pub fn wait_action(&self) -> usize {
        self.stages()
    }

    fn status_count(&self) -> usize {
        let m = self.stages();
        let busy: u32 = self.durations.iter().map(|d| d + self.handoff).sum();
        m * (m + 1) + busy as usize
    }

    pub fn state_count(&self) -> usize {
        let m = self.stages() as u32;
        self.status_count()
            .saturating_mul(1usize << m)
            .saturating_mul(1usize << (m - 1))
            .saturating_mul(self.padding as usize + 1)
    }

    fn check_size(&self) -> Result<(), LearnError> {
        let n = self.state_count();
        if n > MAX_STATES {
            return Err(LearnError::StateSpaceTooLarge(n));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    /// Holding an item that next needs stage `k`; `k = 0` means empty-handed.
    Holding(usize),
    Busy { stage: usize, remaining: u32, max: u32 },
}

/// Mutable rollout state of a [`StageEnv`].
#[derive(Debug, Clone)]
pub struct EnvState {
    status: Vec<Status>,
    location: Vec<Option<usize>>,
    occupancy: Vec<usize>,
    buffers: Vec<usize>,
    pads: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Jobs finished this step; every agent receives this as reward.
    pub jobs: u32,
    /// `(agent, stage)` for every stage completion this step.
    pub completions: Vec<(usize, usize)>,
}

impl StageEnv {
    pub fn reset<R: Rng>(&self, rng: &mut R) -> EnvState {
        let mut state = EnvState {
            status: vec![Status::Holding(0); self.agents],
            location: vec![None; self.agents],
            occupancy: vec![0; self.stages()],
            buffers: vec![0; self.stages()],
            pads: vec![0; self.agents],
        };
        self.draw_padding(&mut state, rng);
        state
    }

    fn draw_padding<R: Rng>(&self, state: &mut EnvState, rng: &mut R) {
        if self.padding > 0 {
            for p in &mut state.pads {
                *p = rng.gen_range(0..=self.padding);
            }
        }
    }

    fn status_index(&self, status: Status, location: Option<usize>) -> usize {
        let m = self.stages();
        match status {
            Status::Holding(k) => k * (m + 1) + location.map_or(0, |z| z + 1),
            Status::Busy { stage, remaining, .. } => {
                let before: u32 = self.durations[..stage].iter().map(|d| d + self.handoff).sum();
                m * (m + 1) + (before + remaining - 1) as usize
            }
        }
    }

    pub fn observe(&self, state: &EnvState, agent: usize) -> usize {
        let m = self.stages();
        let full = (0..m).fold(0usize, |acc, i| {
            acc | (usize::from(state.occupancy[i] >= self.capacities[i]) << i)
        });
        let stocked = (1..m).fold(0usize, |acc, i| acc | (usize::from(state.buffers[i] > 0) << (i - 1)));
        let mut idx = self.status_index(state.status[agent], state.location[agent]);
        idx = idx * (1 << m) + full;
        idx = idx * (1 << (m - 1)) + stocked;
        idx * (self.padding as usize + 1) + state.pads[agent] as usize
    }

    pub fn is_busy(&self, state: &EnvState, agent: usize) -> bool {
        matches!(state.status[agent], Status::Busy { .. })
    }

    /// Agents located in each subtask's zone.
    pub fn occupancy<'a>(&self, state: &'a EnvState) -> &'a [usize] {
        &state.occupancy
    }

    /// Applies one joint action. Agents act in a random order, so capacity
    /// conflicts are not always won by the same agent.
    pub fn step<R: Rng>(&self, state: &mut EnvState, actions: &[usize], rng: &mut R) -> StepOutcome {
        let m = self.stages();
        let mut order: Vec<usize> = (0..self.agents).collect();
        order.shuffle(rng);
        for &a in &order {
            let Status::Holding(held) = state.status[a] else { continue };
            let action = actions[a];
            if action >= m {
                continue;
            }
            let own = held == action && (held > 0 || action == 0);
            let available = own || action == 0 || state.buffers[action] > 0;
            let here = state.location[a] == Some(action);
            if !available || (!here && state.occupancy[action] >= self.capacities[action]) {
                continue;
            }
            let mut steps = self.durations[action];
            if !own {
                if held > 0 {
                    state.buffers[held] += 1;
                }
                if action > 0 {
                    state.buffers[action] -= 1;
                    steps += self.handoff;
                }
            }
            if !here {
                if let Some(old) = state.location[a] {
                    state.occupancy[old] -= 1;
                }
                state.occupancy[action] += 1;
                state.location[a] = Some(action);
            }
            state.status[a] = Status::Busy {
                stage: action,
                remaining: steps,
                max: steps,
            };
        }

        let mut outcome = StepOutcome {
            jobs: 0,
            completions: Vec::new(),
        };
        for a in 0..self.agents {
            if let Status::Busy { stage, remaining, max } = state.status[a] {
                if remaining > 1 {
                    state.status[a] = Status::Busy {
                        stage,
                        remaining: remaining - 1,
                        max,
                    };
                    continue;
                }
                outcome.completions.push((a, stage));
                state.status[a] = if stage + 1 == m {
                    outcome.jobs += 1;
                    Status::Holding(0)
                } else {
                    Status::Holding(stage + 1)
                };
            }
        }
        self.draw_padding(state, rng);
        outcome
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which ε decays linearly; `None` means 80% of episodes.
    pub epsilon_decay_episodes: Option<usize>,
    /// Bonus to the agent completing any stage, before annealing.
    pub shaping: f64,
    /// Episodes over which the shaping bonus anneals linearly to zero.
    pub shaping_horizon: usize,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            episodes: 2000,
            steps_per_episode: 80,
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: None,
            shaping: 0.1,
            shaping_horizon: 1000,
            seed: 0,
        }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: &str| Err(LearnError::InvalidConfig(msg.into()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon must be in [0, 1]");
        }
        if self.episodes == 0 || self.steps_per_episode == 0 {
            return bad("episodes and steps per episode must be positive");
        }
        if !self.shaping.is_finite() || self.shaping < 0.0 {
            return bad("shaping must be a non-negative number");
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let decay = self
            .epsilon_decay_episodes
            .unwrap_or((self.episodes * 4) / 5)
            .max(1);
        let t = (episode as f64 / decay as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * t
    }

    /// Shaping bonus in `episode`: `max(0, 1 - episode / horizon) * shaping`.
    pub fn shaping_coefficient(&self, episode: usize) -> f64 {
        if self.shaping_horizon == 0 {
            return 0.0;
        }
        (1.0 - episode as f64 / self.shaping_horizon as f64).max(0.0) * self.shaping
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(states: usize, actions: usize) -> Self {
        Self {
            actions,
            values: vec![0.0; states * actions],
        }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    /// Largest value over `actions`, or over all actions when empty.
    pub fn max_over(&self, state: usize, actions: &[usize]) -> f64 {
        if actions.is_empty() {
            self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            actions.iter().map(|&a| self.get(state, a)).fold(f64::NEG_INFINITY, f64::max)
        }
    }

    /// First action with the largest value.
    pub fn greedy(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// One-step Q-learning update toward `reward + gamma * max_a' Q(next, a')`.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next: usize,
        next_actions: &[usize],
        alpha: f64,
        gamma: f64,
    ) {
        let target = reward + gamma * self.max_over(next, next_actions);
        let old = self.get(state, action);
        self.set(state, action, old + alpha * (target - old));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicies {
    pub tables: Vec<QTable>,
    /// Jobs completed in each training episode.
    pub learning_curve: Vec<u32>,
}

pub fn train(env: &StageEnv, config: &QLearningConfig) -> Result<TrainedPolicies, LearnError> {
    config.validate()?;
    env.check_size()?;
    let states = env.state_count();
    let actions = env.action_count();
    let wait = [env.wait_action()];
    let mut tables = vec![QTable::new(states, actions); env.agents()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut curve = Vec::with_capacity(config.episodes);
    let mut obs = vec![0; env.agents()];
    let mut chosen = vec![0; env.agents()];

    for episode in 0..config.episodes {
        let eps = config.epsilon(episode);
        let bonus = config.shaping_coefficient(episode);
        let mut state = env.reset(&mut rng);
        let mut jobs = 0;
        for _ in 0..config.steps_per_episode {
            for a in 0..env.agents() {
                obs[a] = env.observe(&state, a);
                chosen[a] = if env.is_busy(&state, a) {
                    env.wait_action()
                } else if rng.gen::<f64>() < eps {
                    rng.gen_range(0..actions)
                } else {
                    tables[a].greedy(obs[a])
                };
            }
            let outcome = env.step(&mut state, &chosen, &mut rng);
            jobs += outcome.jobs;
            for (a, table) in tables.iter_mut().enumerate() {
                let mut reward = outcome.jobs as f64;
                if bonus > 0.0 {
                    reward += bonus * outcome.completions.iter().filter(|(who, _)| *who == a).count() as f64;
                }
                let next = env.observe(&state, a);
                let next_actions: &[usize] = if env.is_busy(&state, a) { &wait } else { &[] };
                table.update(obs[a], chosen[a], reward, next, next_actions, config.alpha, config.gamma);
            }
        }
        curve.push(jobs);
    }
    Ok(TrainedPolicies {
        tables,
        learning_curve: curve,
    })
}

/// Anything that picks an action for an agent from its observation.
pub trait AgentPolicy {
    fn act(&self, agent: usize, observation: usize) -> usize;
}

impl AgentPolicy for TrainedPolicies {
    fn act(&self, agent: usize, observation: usize) -> usize {
        self.tables[agent].greedy(observation)
    }
}

impl<F: Fn(usize, usize) -> usize> AgentPolicy for F {
    fn act(&self, agent: usize, observation: usize) -> usize {
        self(agent, observation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `None` when the run is excluded for earning no reward.
    pub si: Option<f64>,
    pub mean_reward: f64,
    pub subtask_counts: Vec<Vec<u64>>,
}

/// SI over the agents that completed at least one stage; zero when only one
/// agent did, `None` when nobody did.
pub fn participant_si(counts: &[Vec<u64>]) -> Option<f64> {
    let active: Vec<&Vec<u64>> = counts.iter().filter(|r| r.iter().any(|&c| c > 0)).collect();
    match active.len() {
        0 => None,
        1 => Some(0.0),
        _ => si_from_counts(&active).ok(),
    }
}

/// Greedy rollouts. SI is computed from each episode's per-agent
/// stage-completion counts and averaged over episodes, since agents may
/// settle into different roles in different episodes.
pub fn evaluate<P: AgentPolicy + ?Sized>(
    policies: &P,
    env: &StageEnv,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Evaluation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![vec![0u64; env.stages()]; env.agents()];
    let mut total = 0u64;
    let mut episode_si = Vec::with_capacity(episodes);
    let mut actions = vec![0; env.agents()];
    for _ in 0..episodes {
        let mut state = env.reset(&mut rng);
        let mut episode_counts = vec![vec![0u64; env.stages()]; env.agents()];
        for _ in 0..steps {
            for (a, act) in actions.iter_mut().enumerate() {
                *act = if env.is_busy(&state, a) {
                    env.wait_action()
                } else {
                    policies.act(a, env.observe(&state, a))
                };
            }
            let outcome = env.step(&mut state, &actions, &mut rng);
            total += outcome.jobs as u64;
            for (a, stage) in outcome.completions {
                episode_counts[a][stage] += 1;
            }
        }
        if let Some(si) = participant_si(&episode_counts) {
            episode_si.push(si);
        }
        for (row, ep) in counts.iter_mut().zip(&episode_counts) {
            row.iter_mut().zip(ep).for_each(|(c, e)| *c += e);
        }
    }
    let mean_reward = total as f64 / episodes.max(1) as f64;
    let si = if total == 0 || episode_si.is_empty() {
        None
    } else {
        Some(episode_si.iter().sum::<f64>() / episode_si.len() as f64)
    };
    Evaluation {
        si,
        mean_reward,
        subtask_counts: counts,
    }
}

/// One learner configuration to train over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnRow {
    pub env_id: String,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub padding: u32,
    pub recipe: u32,
    pub seed: u64,
    pub si: Option<f64>,
    pub reward: f64,
}

/// Trains and evaluates `env` once per seed.
pub fn run_seeds(
    env_id: &str,
    s: f64,
    env: &StageEnv,
    recipe: u32,
    config: &QLearningConfig,
    seeds: &[u64],
    eval_episodes: usize,
) -> Result<Vec<LearnRow>, LearnError> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = QLearningConfig {
                seed,
                ..config.clone()
            };
            let trained = train(env, &cfg)?;
            let eval = evaluate(
                &trained,
                env,
                eval_episodes,
                cfg.steps_per_episode,
                seed ^ 0x5eed_e7a1,
            );
            Ok(LearnRow {
                env_id: env_id.to_string(),
                s,
                n: env.agents(),
                padding: env.padding(),
                recipe,
                seed,
                si: eval.si,
                reward: eval.mean_reward,
            })
        })
        .collect()
}

/// Keeps the highest-reward non-excluded seed of each
/// `(env_id, padding, recipe)` group; SI is averaged over reward ties.
pub fn select_best_seeds(rows: &[LearnRow]) -> Vec<LearnRow> {
    let mut groups: Vec<(String, u32, u32)> = Vec::new();
    for r in rows {
        let key = (r.env_id.clone(), r.padding, r.recipe);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    groups
        .into_iter()
        .filter_map(|(id, padding, recipe)| {
            let members: Vec<&LearnRow> = rows
                .iter()
                .filter(|r| r.env_id == id && r.padding == padding && r.recipe == recipe && r.si.is_some())
                .collect();
            let best = members.iter().map(|r| r.reward).fold(f64::NEG_INFINITY, f64::max);
            let ties: Vec<&&LearnRow> = members.iter().filter(|r| r.reward == best).collect();
            let first = ties.first()?;
            let si = ties.iter().map(|r| r.si.unwrap()).sum::<f64>() / ties.len() as f64;
            Some(LearnRow {
                si: Some(si),
                ..(**first).clone()
            })
        })
        .collect()
}

/// Trains every recipe and padding level over `seeds`. `build` returns the
/// bound `S` and the unpadded environment for a recipe.
#[allow(clippy::too_many_arguments)]
pub fn state_size_sweep<F, E>(
    env_id: &str,
    build: F,
    paddings: &[u32],
    recipes: &[u32],
    config: &QLearningConfig,
    seeds: &[u64],
    eval_episodes: usize,
) -> Result<Vec<LearnRow>, E>
where
    F: Fn(u32) -> Result<(f64, StageEnv), E>,
    E: From<LearnError>,
{
    let mut rows = Vec::new();
    for &recipe in recipes {
        let (s, base) = build(recipe)?;
        for &padding in paddings {
            let env = base.clone().with_padding(padding);
            rows.extend(run_seeds(env_id, s, &env, recipe, config, seeds, eval_episodes)?);
        }
    }
    Ok(rows)
}
