//! Estimating subtask fractions and capacities from a layout.
//!
//! Each movement subtask runs from a floor cell next to a source workstation
//! to a destination workstation. Its duration is the shortest such route
//! (times the number of ingredient trips the recipe needs), its spatial
//! capacity is the number of vertex-disjoint paths between the route's two
//! floor endpoints, and its resource capacity is the total `c(v)` of the
//! destination workstations. Station-local subtasks (same source and
//! destination, e.g. cooking) take a fixed number of steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{LayoutError, LayoutGraph, Route, StationKind};
use crate::task::{chain, Capacity, SubtaskProfile, TaskError, TaskGraph};

pub const DEFAULT_COOK_STEPS: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("recipe or subtask list is empty")]
    EmptyRecipe,
    #[error("subtask {id:?} needs a {kind:?} but the layout has none")]
    MissingStation { id: String, kind: StationKind },
    #[error("subtask {0:?}: no destination workstation is reachable")]
    Unreachable(String),
    #[error("subtask {0:?} fetches an ingredient the recipe does not use")]
    UnusedIngredient(String),
    #[error("subtask {0:?} needs either stations or an explicit fraction")]
    Incomplete(String),
    #[error("subtask {0:?} uses stations, which needs a layout")]
    NeedsLayout(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    #[serde(default = "one")]
    pub onions: u32,
    #[serde(default)]
    pub tomatoes: u32,
}

fn one() -> u32 {
    1
}

impl Default for Recipe {
    fn default() -> Self {
        Self { onions: 1, tomatoes: 0 }
    }
}

/// One subtask in a task file. Either station-based (`from_station`,
/// `to_station`, optional `fixed_duration`) or explicit (`fraction` plus
/// capacities), the latter for analytic models with no layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_station: Option<StationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_station: Option<StationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_duration: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Capacity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial_capacity: Option<Capacity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_capacity: Option<Capacity>,
}

impl SubtaskSpec {
    fn uses_stations(&self) -> bool {
        self.from_station.is_some() || self.to_station.is_some()
    }
}

/// Task file: `{subtasks, precedence?, recipe?, cook_duration?}`.
///
/// A missing `precedence` chains the subtasks in listed order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub subtasks: Vec<SubtaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precedence: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    pub recipe: Recipe,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cook_duration: Option<u32>,
}

impl TaskSpec {
    /// The onion soup pipeline: fetch onions, cook, fetch a bowl, serve.
    pub fn onion_soup(onions: u32) -> Self {
        let leg = |id: &str, from, to| SubtaskSpec {
            id: id.to_string(),
            from_station: Some(from),
            to_station: Some(to),
            ..Default::default()
        };
        Self {
            subtasks: vec![
                leg("onion_to_pot", StationKind::OnionPile, StationKind::Pot),
                leg("cook", StationKind::Pot, StationKind::Pot),
                leg("bowl_to_pot", StationKind::BowlStack, StationKind::Pot),
                leg("soup_to_serve", StationKind::Pot, StationKind::ServeWindow),
            ],
            precedence: None,
            recipe: Recipe { onions, tomatoes: 0 },
            cook_duration: None,
        }
    }

    /// Analytic task with explicit fractions and capacities.
    pub fn explicit(fractions: &[f64], capacities: &[Capacity]) -> Self {
        Self {
            subtasks: fractions
                .iter()
                .zip(capacities)
                .enumerate()
                .map(|(i, (&f, &c))| SubtaskSpec {
                    id: format!("t{i}"),
                    fraction: Some(f),
                    capacity: Some(c),
                    ..Default::default()
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn needs_layout(&self) -> bool {
        self.subtasks.iter().any(SubtaskSpec::uses_stations)
    }

    fn precedence_pairs(&self) -> Vec<(usize, usize)> {
        match &self.precedence {
            Some(p) => p.iter().map(|&[a, b]| (a, b)).collect(),
            None => chain(self.subtasks.len()),
        }
    }

    fn multiplicity(&self, sub: &SubtaskSpec) -> u32 {
        match sub.from_station {
            Some(StationKind::OnionPile) if sub.to_station != sub.from_station => self.recipe.onions,
            Some(StationKind::TomatoPile) if sub.to_station != sub.from_station => self.recipe.tomatoes,
            _ => 1,
        }
    }

    /// Resolves the spec into a task graph. Station-based subtasks need a layout.
    pub fn to_task_graph(&self, layout: Option<&LayoutGraph>) -> Result<TaskGraph, EstimateError> {
        if self.needs_layout() {
            let graph = layout.ok_or_else(|| {
                let id = self.subtasks.iter().find(|s| s.uses_stations()).unwrap().id.clone();
                EstimateError::NeedsLayout(id)
            })?;
            let task = estimate_fractions(graph, self)?;
            subtask_capacities(graph, self, &task)
        } else {
            self.explicit_task()
        }
    }

    fn explicit_task(&self) -> Result<TaskGraph, EstimateError> {
        if self.subtasks.is_empty() {
            return Err(EstimateError::EmptyRecipe);
        }
        let subtasks = self
            .subtasks
            .iter()
            .map(|s| {
                let fraction = s.fraction.ok_or_else(|| EstimateError::Incomplete(s.id.clone()))?;
                let both = s.capacity.unwrap_or(Capacity::Unbounded);
                Ok(SubtaskProfile {
                    id: s.id.clone(),
                    fraction,
                    spatial_capacity: s.spatial_capacity.unwrap_or(both),
                    resource_capacity: s.resource_capacity.unwrap_or(both),
                    congestion_score: 0.0,
                    fixed_duration: s.fixed_duration,
                })
            })
            .collect::<Result<Vec<_>, EstimateError>>()?;
        Ok(TaskGraph::new(subtasks, self.precedence_pairs())?)
    }
}

/// Route chosen for a movement subtask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StationRoute {
    pub source_station: usize,
    pub destination_station: usize,
    /// Floor cell next to the source station where the route starts.
    pub start: usize,
    /// Floor cell next to the destination station where the route ends.
    pub end: usize,
    /// Path from `start` to the destination station node.
    pub route: Route,
}

/// Shortest route from any floor cell adjacent to a `from` station to any
/// `to` station; ties go to the smallest (start cell, destination) pair.
pub fn station_route(
    graph: &LayoutGraph,
    id: &str,
    from: StationKind,
    to: StationKind,
) -> Result<StationRoute, EstimateError> {
    let missing = |kind| EstimateError::MissingStation {
        id: id.to_string(),
        kind,
    };
    let sources = graph.stations(from);
    let destinations = graph.stations(to);
    if sources.is_empty() {
        return Err(missing(from));
    }
    if destinations.is_empty() {
        return Err(missing(to));
    }

    let mut best: Option<StationRoute> = None;
    for &src in &sources {
        for start in graph.access_cells(src) {
            let dist = graph.digraph().bfs_distances(start);
            for &dst in &destinations {
                let Some(d) = dist[dst] else { continue };
                let better = match &best {
                    None => true,
                    Some(b) => (d, start, dst) < (b.route.length, b.start, b.destination_station),
                };
                if better {
                    let route = graph.shortest_path_between(start, dst)?;
                    best = Some(StationRoute {
                        source_station: src,
                        destination_station: dst,
                        start,
                        end: route.path[route.path.len() - 2],
                        route,
                    });
                }
            }
        }
    }
    best.ok_or_else(|| EstimateError::Unreachable(id.to_string()))
}

/// Normalizes step counts into time fractions.
pub fn normalize_durations(durations: &[u64]) -> Vec<f64> {
    let total: u64 = durations.iter().sum();
    durations.iter().map(|&d| d as f64 / total as f64).collect()
}

enum Plan {
    Timed(u32),
    Move { trips: u32, route: StationRoute },
}

impl Plan {
    fn steps(&self) -> u64 {
        match self {
            Plan::Timed(d) => *d as u64,
            Plan::Move { trips, route } => *trips as u64 * route.route.length as u64,
        }
    }
}

fn plan(graph: &LayoutGraph, spec: &TaskSpec) -> Result<Vec<Plan>, EstimateError> {
    if spec.subtasks.is_empty() || spec.recipe.onions + spec.recipe.tomatoes == 0 {
        return Err(EstimateError::EmptyRecipe);
    }
    spec.subtasks
        .iter()
        .map(|sub| {
            let (Some(from), Some(to)) = (sub.from_station, sub.to_station) else {
                return Err(EstimateError::Incomplete(sub.id.clone()));
            };
            if from == to {
                if graph.stations(from).is_empty() {
                    return Err(EstimateError::MissingStation {
                        id: sub.id.clone(),
                        kind: from,
                    });
                }
                let steps = sub
                    .fixed_duration
                    .or(spec.cook_duration)
                    .unwrap_or(DEFAULT_COOK_STEPS);
                return Ok(Plan::Timed(steps.max(1)));
            }
            let trips = spec.multiplicity(sub);
            if trips == 0 {
                return Err(EstimateError::UnusedIngredient(sub.id.clone()));
            }
            let route = station_route(graph, &sub.id, from, to)?;
            Ok(Plan::Move { trips, route })
        })
        .collect()
}

/// Time fractions `f_i = d(i) / sum_j d(j)`; capacities are left unbounded.
pub fn estimate_fractions(graph: &LayoutGraph, spec: &TaskSpec) -> Result<TaskGraph, EstimateError> {
    let plans = plan(graph, spec)?;
    let steps: Vec<u64> = plans.iter().map(Plan::steps).collect();
    let fractions = normalize_durations(&steps);
    let subtasks = spec
        .subtasks
        .iter()
        .zip(&plans)
        .zip(fractions)
        .map(|((sub, plan), fraction)| SubtaskProfile {
            id: sub.id.clone(),
            fraction,
            spatial_capacity: Capacity::Unbounded,
            resource_capacity: Capacity::Unbounded,
            congestion_score: 0.0,
            fixed_duration: match plan {
                Plan::Timed(d) => Some(*d),
                Plan::Move { .. } => None,
            },
        })
        .collect();
    Ok(TaskGraph::new(subtasks, spec.precedence_pairs())?)
}

fn station_capacity(graph: &LayoutGraph, kind: StationKind) -> Capacity {
    Capacity::Finite(graph.stations(kind).len() as u32 * graph.capacity(kind))
}

/// Fills `C^s_i`, `C^r_i` and the betweenness congestion score of each subtask.
pub fn subtask_capacities(
    graph: &LayoutGraph,
    spec: &TaskSpec,
    task: &TaskGraph,
) -> Result<TaskGraph, EstimateError> {
    let plans = plan(graph, spec)?;
    let centrality = graph.edge_betweenness();
    let subtasks = task
        .subtasks()
        .iter()
        .zip(&spec.subtasks)
        .zip(&plans)
        .map(|((profile, sub), plan)| {
            let mut profile = profile.clone();
            match plan {
                Plan::Timed(_) => {
                    profile.spatial_capacity = Capacity::Unbounded;
                    profile.resource_capacity = station_capacity(graph, sub.from_station.unwrap());
                    profile.congestion_score = 0.0;
                }
                Plan::Move { route, .. } => {
                    profile.spatial_capacity = if route.start == route.end {
                        Capacity::Unbounded
                    } else {
                        let c = graph.disjoint_path_capacity_between(route.start, route.end)?;
                        Capacity::Finite(c as u32)
                    };
                    profile.resource_capacity = station_capacity(graph, sub.to_station.unwrap());
                    profile.congestion_score = centrality.path_sum(&route.route.path);
                }
            }
            Ok(profile)
        })
        .collect::<Result<Vec<_>, EstimateError>>()?;
    Ok(task.with_subtasks(subtasks)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{build_graph, parse_layout};

    fn graph(text: &str) -> LayoutGraph {
        build_graph(&parse_layout(text).unwrap())
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_durations(&[5, 5, 5, 5]), vec![0.25; 4]);
        let f = normalize_durations(&[2, 3, 10]);
        let expected = [2.0 / 15.0, 3.0 / 15.0, 10.0 / 15.0];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn onion_soup_has_four_subtasks() {
        let g = graph("WOWPW\nW   W\nB   W\nW   W\nWWSWW");
        let task = TaskSpec::onion_soup(1).to_task_graph(Some(&g)).unwrap();
        assert_eq!(task.len(), 4);
        assert_eq!(task.subtasks()[1].fixed_duration, Some(DEFAULT_COOK_STEPS));
        assert_eq!(task.precedence(), &[(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn leg_lengths_and_cook_normalize() {
        let g = graph("O P  S");
        // onion->pot: start (0,1), path (0,1)->(0,2)P = 1 hop
        // pot->serve: start (0,1) or (0,3); from (0,3): (0,3)->(0,4)->S = 2 hops
        let spec = TaskSpec {
            subtasks: vec![
                SubtaskSpec {
                    id: "onion".into(),
                    from_station: Some(StationKind::OnionPile),
                    to_station: Some(StationKind::Pot),
                    ..Default::default()
                },
                SubtaskSpec {
                    id: "serve".into(),
                    from_station: Some(StationKind::Pot),
                    to_station: Some(StationKind::ServeWindow),
                    ..Default::default()
                },
                SubtaskSpec {
                    id: "cook".into(),
                    from_station: Some(StationKind::Pot),
                    to_station: Some(StationKind::Pot),
                    ..Default::default()
                },
            ],
            recipe: Recipe { onions: 2, tomatoes: 0 },
            ..Default::default()
        };
        let task = estimate_fractions(&g, &spec).unwrap();
        // d = (2 trips x 1, 2, 10)
        let f = task.fractions();
        let expected = [2.0 / 14.0, 2.0 / 14.0, 10.0 / 14.0];
        for (a, b) in f.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{f:?}");
        }
    }

    #[test]
    fn two_pots_double_resource_capacity() {
        let g = graph("WOWPW\nW   W\nB   P\nW   W\nWWSWW");
        let spec = TaskSpec::onion_soup(1);
        let task = spec.to_task_graph(Some(&g)).unwrap();
        assert_eq!(task.subtasks()[0].resource_capacity, Capacity::Finite(2));
        assert_eq!(task.subtasks()[1].resource_capacity, Capacity::Finite(2));
    }

    #[test]
    fn doorway_limits_spatial_capacity() {
        // the onion side reaches the pot only through (2,2)
        let g = graph("WWWWW\nWO WW\nW   W\nWW PW\nWWWWW");
        let spec = TaskSpec {
            subtasks: vec![SubtaskSpec {
                id: "carry".into(),
                from_station: Some(StationKind::OnionPile),
                to_station: Some(StationKind::Pot),
                ..Default::default()
            }],
            ..Default::default()
        };
        let task = spec.to_task_graph(Some(&g)).unwrap();
        assert_eq!(task.subtasks()[0].spatial_capacity, Capacity::Finite(1));
        assert!(task.subtasks()[0].congestion_score > 0.0);
    }

    #[test]
    fn missing_and_unreachable_stations() {
        let g = graph("O P");
        let spec = TaskSpec::onion_soup(1);
        assert!(matches!(
            spec.to_task_graph(Some(&g)),
            Err(EstimateError::MissingStation { kind: StationKind::BowlStack, .. })
        ));
        let walled = graph(" OWP ");
        let spec = TaskSpec {
            subtasks: vec![SubtaskSpec {
                id: "carry".into(),
                from_station: Some(StationKind::OnionPile),
                to_station: Some(StationKind::Pot),
                ..Default::default()
            }],
            ..Default::default()
        };
        assert_eq!(
            spec.to_task_graph(Some(&walled)),
            Err(EstimateError::Unreachable("carry".into()))
        );
        assert!(matches!(spec.to_task_graph(None), Err(EstimateError::NeedsLayout(_))));
        let empty = TaskSpec::default();
        assert_eq!(empty.to_task_graph(Some(&g)), Err(EstimateError::EmptyRecipe));
    }

    #[test]
    fn explicit_spec_round_trips_through_json() {
        let spec = TaskSpec::explicit(&[0.5, 0.5], &[Capacity::Finite(1), Capacity::Unbounded]);
        let json = serde_json::to_string(&spec).unwrap();
        let back: TaskSpec = serde_json::from_str(&json).unwrap();
        let task = back.to_task_graph(None).unwrap();
        assert_eq!(task.capacities(), vec![Capacity::Finite(1), Capacity::Unbounded]);
    }

    #[test]
    fn parses_station_aliases() {
        let spec: TaskSpec = serde_json::from_str(
            r#"{"subtasks":[{"id":"a","from_station":"onion","to_station":"pot"},
                            {"id":"b","from_station":"pot","to_station":"serve","fixed_duration":3}],
                "precedence":[[0,1]],"recipe":{"onions":3,"tomatoes":0}}"#,
        )
        .unwrap();
        assert_eq!(spec.subtasks[0].from_station, Some(StationKind::OnionPile));
        assert_eq!(spec.recipe.onions, 3);
    }
}
