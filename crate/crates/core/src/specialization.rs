//! Behavioral specialization of a team.
//!
//! Each agent's trajectory is reduced to an effective action distribution by
//! discounted visitation weighting. The Specialization Index is the
//! Jensen-Shannon divergence of those distributions (in bits) divided by its
//! maximum `log2 N`: 0 for identical behavior, 1 for disjoint behavior.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GAMMA: f64 = 0.99;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecializationError {
    #[error("agent {0:?} has no steps")]
    EmptyTrajectory(String),
    #[error("agent {0:?} is not in the log")]
    UnknownAgent(String),
    #[error("discount {0} outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("distributions use different action alphabets")]
    AlphabetMismatch,
    #[error("need at least two distributions, got {0}")]
    TooFewDistributions(usize),
    #[error("agent {0} has no counts")]
    ZeroCounts(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("agent {agent:?}: step index {t} does not increase")]
    NonIncreasingStep { agent: String, t: u64 },
    #[error("trajectory csv: {0}")]
    Csv(String),
}

/// Probability vector over an ordered action alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    support: Vec<String>,
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(support: Vec<String>, probs: Vec<f64>) -> Result<Self, SpecializationError> {
        if support.len() != probs.len() {
            return Err(SpecializationError::InvalidDistribution(format!(
                "{} labels for {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(SpecializationError::InvalidDistribution("negative or non-finite mass".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(SpecializationError::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { support, probs })
    }

    /// Distribution over `0..k` labelled by index, for callers without names.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, SpecializationError> {
        let support = (0..probs.len()).map(|i| i.to_string()).collect();
        Self::new(support, probs)
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(support: Vec<String>, weights: &[f64]) -> Result<Self, SpecializationError> {
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(SpecializationError::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(support, weights.iter().map(|w| w / total).collect())
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, action: &str) -> Option<f64> {
        self.support.iter().position(|a| a == action).map(|i| self.probs[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub t: u64,
    pub state: String,
    pub action: String,
}

/// Per-agent step sequences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryLog {
    agents: BTreeMap<String, Vec<Step>>,
}

#[derive(Debug, Deserialize)]
struct CsvStep {
    agent: String,
    t: u64,
    state: String,
    action: String,
}

impl TrajectoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, agent: &str, step: Step) -> Result<(), SpecializationError> {
        let steps = self.agents.entry(agent.to_string()).or_default();
        if steps.last().is_some_and(|last| last.t >= step.t) {
            return Err(SpecializationError::NonIncreasingStep {
                agent: agent.to_string(),
                t: step.t,
            });
        }
        steps.push(step);
        Ok(())
    }

    /// Reads `agent,t,state,action` CSV (header required). Rows of different
    /// agents may interleave; each agent's rows must have increasing `t`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, SpecializationError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut log = Self::new();
        for row in rdr.deserialize::<CsvStep>() {
            let row = row.map_err(|e| SpecializationError::Csv(e.to_string()))?;
            log.push(
                &row.agent,
                Step {
                    t: row.t,
                    state: row.state,
                    action: row.action,
                },
            )?;
        }
        Ok(log)
    }

    pub fn agents(&self) -> impl Iterator<Item = &str> {
        self.agents.keys().map(String::as_str)
    }

    pub fn steps(&self, agent: &str) -> Option<&[Step]> {
        self.agents.get(agent).map(Vec::as_slice)
    }

    /// Sorted set of every action any agent took.
    pub fn action_alphabet(&self) -> Vec<String> {
        self.agents
            .values()
            .flatten()
            .map(|s| s.action.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Effective action distribution of one agent over the log's shared alphabet.
///
/// Step `t` gets weight `(1 - gamma) * gamma^(t - t0)`, marginalized over
/// states; the weights are renormalized over the finite horizon so the
/// result sums to one.
pub fn visitation_distribution(
    log: &TrajectoryLog,
    agent: &str,
    gamma: f64,
) -> Result<ActionDistribution, SpecializationError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(SpecializationError::InvalidDiscount(gamma));
    }
    let steps = log
        .steps(agent)
        .ok_or_else(|| SpecializationError::UnknownAgent(agent.to_string()))?;
    let Some(first) = steps.first() else {
        return Err(SpecializationError::EmptyTrajectory(agent.to_string()));
    };
    let alphabet = log.action_alphabet();
    let mut weights = vec![0.0; alphabet.len()];
    for step in steps {
        let k = step.t - first.t;
        let w = (1.0 - gamma) * discount_power(gamma, k);
        let slot = alphabet.binary_search(&step.action).unwrap();
        weights[slot] += w;
    }
    ActionDistribution::from_weights(alphabet, &weights)
}

fn discount_power(gamma: f64, k: u64) -> f64 {
    if k > i32::MAX as u64 {
        0.0
    } else {
        gamma.powi(k as i32)
    }
}

/// Same as [`visitation_distribution`] for every agent in the log.
pub fn visitation_distributions(
    log: &TrajectoryLog,
    gamma: f64,
) -> Result<BTreeMap<String, ActionDistribution>, SpecializationError> {
    log.agents()
        .map(|a| Ok((a.to_string(), visitation_distribution(log, a, gamma)?)))
        .collect()
}

fn check_shared_alphabet(dists: &[ActionDistribution]) -> Result<(), SpecializationError> {
    if dists.len() < 2 {
        return Err(SpecializationError::TooFewDistributions(dists.len()));
    }
    let first = &dists[0].support;
    if dists.iter().any(|d| &d.support != first) {
        return Err(SpecializationError::AlphabetMismatch);
    }
    Ok(())
}

fn all_identical(dists: &[ActionDistribution]) -> bool {
    dists.iter().all(|d| d.probs == dists[0].probs)
}

fn pairwise_disjoint(dists: &[ActionDistribution]) -> bool {
    (0..dists[0].probs.len()).all(|a| dists.iter().filter(|d| d.probs[a] > 0.0).count() <= 1)
}

/// Jensen-Shannon divergence in bits: mean KL divergence from each
/// distribution to their uniform mixture. Ranges over `[0, log2 N]`.
pub fn jsd(dists: &[ActionDistribution]) -> Result<f64, SpecializationError> {
    check_shared_alphabet(dists)?;
    let n = dists.len() as f64;
    if all_identical(dists) {
        return Ok(0.0);
    }
    if pairwise_disjoint(dists) {
        return Ok(n.log2());
    }
    let k = dists[0].probs.len();
    let mixture: Vec<f64> = (0..k)
        .map(|a| dists.iter().map(|d| d.probs[a]).sum::<f64>() / n)
        .collect();
    let total: f64 = dists
        .iter()
        .map(|d| {
            d.probs
                .iter()
                .zip(&mixture)
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, &m)| p * (p / m).log2())
                .sum::<f64>()
        })
        .sum();
    Ok((total / n).clamp(0.0, n.log2()))
}

/// Specialization Index `JSD / log2 N`.
pub fn si(dists: &[ActionDistribution]) -> Result<f64, SpecializationError> {
    let divergence = jsd(dists)?;
    let index = divergence / (dists.len() as f64).log2();
    if pairwise_disjoint(dists) {
        Ok(1.0)
    } else {
        // shared support keeps the index strictly below one
        Ok(index.clamp(0.0, 1.0 - f64::EPSILON))
    }
}

/// SI of per-agent count vectors, each normalized to frequencies.
pub fn si_from_counts<C: AsRef<[u64]>>(counts: &[C]) -> Result<f64, SpecializationError> {
    si(&distributions_from_counts(counts)?)
}

pub fn distributions_from_counts<C: AsRef<[u64]>>(
    counts: &[C],
) -> Result<Vec<ActionDistribution>, SpecializationError> {
    counts
        .iter()
        .enumerate()
        .map(|(agent, row)| {
            let row = row.as_ref();
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(SpecializationError::ZeroCounts(agent));
            }
            ActionDistribution::from_probs(row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiReport {
    pub si: f64,
    pub jsd_bits: f64,
    pub per_agent_distributions: BTreeMap<String, BTreeMap<String, f64>>,
}

/// SI report for every agent in a trajectory log.
pub fn si_report(log: &TrajectoryLog, gamma: f64) -> Result<SiReport, SpecializationError> {
    let per_agent = visitation_distributions(log, gamma)?;
    let dists: Vec<ActionDistribution> = per_agent.values().cloned().collect();
    Ok(SiReport {
        si: si(&dists)?,
        jsd_bits: jsd(&dists)?,
        per_agent_distributions: per_agent
            .into_iter()
            .map(|(agent, d)| (agent, d.support.into_iter().zip(d.probs).collect()))
            .collect(),
    })
}
