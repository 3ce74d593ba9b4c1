//! Task parallelizability under spatial and resource contention, and
//! behavioral specialization of multi-agent teams.

pub mod estimate;
pub mod graph;
pub mod layout;
pub mod learn;
pub mod plot;
pub mod sim;
pub mod spec;
pub mod specialization;
pub mod stats;
pub mod sweep;
pub mod table;
pub mod task;

pub use estimate::{Recipe, SubtaskSpec, TaskSpec};
pub use layout::{build_graph, parse_layout, Coord, LayoutGraph, LayoutSpec, StationKind};
pub use sim::{compare_policies, simulate, Assignment, Policy, SimConfig, SimResult};
pub use specialization::{jsd, si, si_from_counts, ActionDistribution, TrajectoryLog};
pub use task::{amdahl_classic, parallelizability, Capacity, ParallelizabilityReport, TaskGraph};
