//! Task graphs and the parallelizability bound.
//!
//! A task is a DAG of subtasks. Subtask `i` takes a fraction `f_i` of a
//! single agent's execution time and admits at most `C_i = min(C^s_i, C^r_i)`
//! concurrent agents. With `N` agents the achievable speed-up is the weighted
//! harmonic mean
//!
//! ```text
//! S(N, C) = 1 / sum_i f_i / min(N, C_i)
//! ```
//!
//! Precedence edges are kept for the simulator; they do not enter the bound.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const FRACTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("task has no subtasks")]
    EmptyTask,
    #[error("subtask {id:?} has fraction {fraction} outside (0, 1]")]
    BadFraction { id: String, fraction: f64 },
    #[error("fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("precedence edge {0} -> {1} references a missing subtask")]
    BadPrecedence(usize, usize),
    #[error("precedence relation has a cycle")]
    Cyclic,
    #[error("subtask {0:?} has zero capacity and can never execute")]
    ZeroCapacity(String),
    #[error("team size must be at least 1")]
    InvalidTeamSize,
    #[error("amdahl inputs out of domain: f = {f}, s = {s}")]
    DomainError { f: f64, s: f64 },
}

/// Concurrency capacity: a finite agent count or no limit at all.
///
/// `Unbounded` orders above every finite count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Capacity {
    Finite(u32),
    Unbounded,
}

impl Capacity {
    /// `min(N, C)` as an agent count.
    pub fn limit(self, team: usize) -> usize {
        match self {
            Capacity::Finite(c) => (c as usize).min(team),
            Capacity::Unbounded => team,
        }
    }

    pub fn saturating_add(self, extra: u32) -> Capacity {
        match self {
            Capacity::Finite(c) => Capacity::Finite(c.saturating_add(extra)),
            Capacity::Unbounded => Capacity::Unbounded,
        }
    }

    pub fn finite(self) -> Option<u32> {
        match self {
            Capacity::Finite(c) => Some(c),
            Capacity::Unbounded => None,
        }
    }
}

impl From<u32> for Capacity {
    fn from(c: u32) -> Self {
        Capacity::Finite(c)
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Finite(c) => write!(f, "{c}"),
            Capacity::Unbounded => f.write_str("unbounded"),
        }
    }
}

impl Serialize for Capacity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Capacity::Finite(c) => serializer.serialize_u32(*c),
            Capacity::Unbounded => serializer.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Capacity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u32),
            Word(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(c) => Ok(Capacity::Finite(c)),
            Raw::Word(w) => match w.to_ascii_lowercase().as_str() {
                "unbounded" | "inf" | "infinity" => Ok(Capacity::Unbounded),
                other => Err(serde::de::Error::custom(format!(
                    "expected a count or \"unbounded\", got {other:?}"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskProfile {
    pub id: String,
    pub fraction: f64,
    pub spatial_capacity: Capacity,
    pub resource_capacity: Capacity,
    /// Sum of edge betweenness along the subtask's route. Diagnostic only.
    #[serde(default)]
    pub congestion_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_duration: Option<u32>,
}

impl SubtaskProfile {
    pub fn new(id: impl Into<String>, fraction: f64, capacity: Capacity) -> Self {
        Self {
            id: id.into(),
            fraction,
            spatial_capacity: capacity,
            resource_capacity: capacity,
            congestion_score: 0.0,
            fixed_duration: None,
        }
    }

    pub fn capacity(&self) -> Capacity {
        self.spatial_capacity.min(self.resource_capacity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskGraph {
    subtasks: Vec<SubtaskProfile>,
    precedence: Vec<(usize, usize)>,
}

impl TaskGraph {
    pub fn new(subtasks: Vec<SubtaskProfile>, precedence: Vec<(usize, usize)>) -> Result<Self, TaskError> {
        let task = Self { subtasks, precedence };
        task.validate()?;
        Ok(task)
    }

    /// `m` subtasks of equal fraction sharing one capacity, chained in order.
    pub fn uniform(m: usize, capacity: Capacity) -> Result<Self, TaskError> {
        let subtasks = (0..m)
            .map(|i| SubtaskProfile::new(format!("t{i}"), 1.0 / m as f64, capacity))
            .collect();
        Self::new(subtasks, chain(m))
    }

    /// Chained subtasks with the given fractions and capacities.
    pub fn from_fractions(fractions: &[f64], capacities: &[Capacity]) -> Result<Self, TaskError> {
        assert_eq!(fractions.len(), capacities.len(), "one capacity per fraction");
        let subtasks = fractions
            .iter()
            .zip(capacities)
            .enumerate()
            .map(|(i, (&f, &c))| SubtaskProfile::new(format!("t{i}"), f, c))
            .collect();
        Self::new(subtasks, chain(fractions.len()))
    }

    pub fn subtasks(&self) -> &[SubtaskProfile] {
        &self.subtasks
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    pub fn precedence(&self) -> &[(usize, usize)] {
        &self.precedence
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.subtasks.iter().map(|s| s.fraction).collect()
    }

    pub fn capacities(&self) -> Vec<Capacity> {
        self.subtasks.iter().map(SubtaskProfile::capacity).collect()
    }

    /// Returns a copy with subtask `i`'s capacity replaced (both dimensions).
    pub fn with_capacity(&self, i: usize, capacity: Capacity) -> Self {
        let mut next = self.clone();
        next.subtasks[i].spatial_capacity = capacity;
        next.subtasks[i].resource_capacity = capacity;
        next
    }

    pub fn with_subtasks(&self, subtasks: Vec<SubtaskProfile>) -> Result<Self, TaskError> {
        Self::new(subtasks, self.precedence.clone())
    }

    /// Indices of the subtasks that must finish before `i` can start.
    pub fn predecessors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.precedence.iter().filter(move |e| e.1 == i).map(|e| e.0)
    }

    /// Kahn's algorithm, smallest ready index first.
    pub fn topological_order(&self) -> Result<Vec<usize>, TaskError> {
        let m = self.subtasks.len();
        let mut indegree = vec![0usize; m];
        for &(a, b) in &self.precedence {
            if a >= m || b >= m {
                return Err(TaskError::BadPrecedence(a, b));
            }
            indegree[b] += 1;
        }
        let mut ready: std::collections::BTreeSet<usize> = (0..m).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(m);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &(a, b) in &self.precedence {
                if a == i {
                    indegree[b] -= 1;
                    if indegree[b] == 0 {
                        ready.insert(b);
                    }
                }
            }
        }
        if order.len() == m {
            Ok(order)
        } else {
            Err(TaskError::Cyclic)
        }
    }

    fn validate(&self) -> Result<(), TaskError> {
        if self.subtasks.is_empty() {
            return Err(TaskError::EmptyTask);
        }
        for s in &self.subtasks {
            if !(s.fraction > 0.0 && s.fraction <= 1.0) {
                return Err(TaskError::BadFraction {
                    id: s.id.clone(),
                    fraction: s.fraction,
                });
            }
            if s.capacity() == Capacity::Finite(0) {
                return Err(TaskError::ZeroCapacity(s.id.clone()));
            }
        }
        let total: f64 = self.subtasks.iter().map(|s| s.fraction).sum();
        if (total - 1.0).abs() > FRACTION_TOLERANCE {
            return Err(TaskError::FractionSum(total));
        }
        self.topological_order().map(|_| ())
    }
}

pub(crate) fn chain(m: usize) -> Vec<(usize, usize)> {
    (1..m).map(|i| (i - 1, i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitingDimension {
    None,
    Spatial,
    Resource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Generalist,
    Specialist,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Generalist => "generalist",
            Regime::Specialist => "specialist",
        }
    }

    /// Observed regime from a specialization index.
    pub fn from_si(si: f64, threshold: f64) -> Self {
        if si >= threshold {
            Regime::Specialist
        } else {
            Regime::Generalist
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskBound {
    pub id: String,
    pub fraction: f64,
    pub capacity: Capacity,
    pub spatial_capacity: Capacity,
    pub resource_capacity: Capacity,
    pub limiting: LimitingDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionFeature {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelizabilityReport {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub per_subtask: Vec<SubtaskBound>,
    pub regime: Regime,
    pub congestion_features: Vec<CongestionFeature>,
}

/// Weighted harmonic mean of per-subtask speed-up factors.
///
/// The result is clamped to `[min s_i, max s_i]`, which it satisfies
/// mathematically; the clamp makes uniform factors come out exact.
pub fn harmonic_bound(fractions: &[f64], speedups: &[f64]) -> f64 {
    let total: f64 = fractions.iter().sum();
    let denom: f64 = fractions.iter().zip(speedups).map(|(f, s)| f / s).sum();
    let lo = speedups.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = speedups.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (total / denom).clamp(lo, hi)
}

fn limiting_dimension(sub: &SubtaskProfile, team: usize) -> LimitingDimension {
    if sub.capacity().limit(team) == team {
        LimitingDimension::None
    } else if sub.spatial_capacity < sub.resource_capacity {
        LimitingDimension::Spatial
    } else {
        LimitingDimension::Resource
    }
}

pub fn parallelizability(task: &TaskGraph, team: usize) -> Result<ParallelizabilityReport, TaskError> {
    if team < 1 {
        return Err(TaskError::InvalidTeamSize);
    }
    let speedups: Vec<f64> = task
        .subtasks()
        .iter()
        .map(|s| s.capacity().limit(team) as f64)
        .collect();
    let s = harmonic_bound(&task.fractions(), &speedups);
    let per_subtask = task
        .subtasks()
        .iter()
        .map(|sub| SubtaskBound {
            id: sub.id.clone(),
            fraction: sub.fraction,
            capacity: sub.capacity(),
            spatial_capacity: sub.spatial_capacity,
            resource_capacity: sub.resource_capacity,
            limiting: limiting_dimension(sub, team),
        })
        .collect();
    let congestion_features = task
        .subtasks()
        .iter()
        .map(|sub| CongestionFeature {
            id: sub.id.clone(),
            score: sub.congestion_score,
        })
        .collect();
    Ok(ParallelizabilityReport {
        s,
        n: team,
        per_subtask,
        regime: if s < team as f64 {
            Regime::Specialist
        } else {
            Regime::Generalist
        },
        congestion_features,
    })
}

/// Classic Amdahl speed-up for parallel fraction `f` accelerated by `s`.
pub fn amdahl_classic(f: f64, s: f64) -> Result<f64, TaskError> {
    if !(0.0..=1.0).contains(&f) || s.is_nan() || s < 1.0 || !s.is_finite() {
        return Err(TaskError::DomainError { f, s });
    }
    Ok(1.0 / ((1.0 - f) + f / s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub subtask: usize,
    pub id: String,
    pub dimension: LimitingDimension,
    pub capacity: Capacity,
    pub delta_s: f64,
}

/// For every bottlenecked subtask, the gain in `S` from raising its capacity
/// by one agent. Sorted by gain, largest first; ties keep subtask order.
pub fn diagnose(report: &ParallelizabilityReport) -> Vec<Diagnosis> {
    let team = report.n;
    let fractions: Vec<f64> = report.per_subtask.iter().map(|b| b.fraction).collect();
    let speedups: Vec<f64> = report
        .per_subtask
        .iter()
        .map(|b| b.capacity.limit(team) as f64)
        .collect();
    let base = harmonic_bound(&fractions, &speedups);

    let mut out: Vec<Diagnosis> = report
        .per_subtask
        .iter()
        .enumerate()
        .filter(|(_, b)| b.capacity.limit(team) < team)
        .map(|(i, b)| {
            let raised = b.capacity.saturating_add(1);
            let mut bumped = speedups.clone();
            bumped[i] = raised.limit(team) as f64;
            Diagnosis {
                subtask: i,
                id: b.id.clone(),
                dimension: b.limiting,
                capacity: b.capacity,
                delta_s: harmonic_bound(&fractions, &bumped) - base,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.delta_s
            .partial_cmp(&a.delta_s)
            .unwrap_or(Ordering::Equal)
            .then(a.subtask.cmp(&b.subtask))
    });
    out
}
