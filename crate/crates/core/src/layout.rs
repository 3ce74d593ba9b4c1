//! Grid kitchen layouts and their directed traversal graphs.
//!
//! Layout text uses one character per cell:
//!
//! | char | cell |
//! |------|------|
//! | `W`  | counter (impassable, absent from the graph) |
//! | ` `  | floor |
//! | `O`  | onion pile |
//! | `T`  | tomato pile |
//! | `P`  | pot |
//! | `B`  | bowl stack |
//! | `S`  | serving window |
//!
//! Lines starting with `#` are headers. `# capacity <char> <int>` sets the
//! per-cell capacity of a workstation kind; other `#` lines are comments.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Digraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("layout text is empty")]
    Empty,
    #[error("ragged grid: row {row} has {found} cells, expected {expected}")]
    RaggedGrid {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown cell {ch:?} at row {row}, column {col}")]
    UnknownCell { ch: char, row: usize, col: usize },
    #[error("layout has no floor cells")]
    NoFloor,
    #[error("workstation at {0} has no adjacent floor cell")]
    UnreachableWorkstation(Coord),
    #[error("malformed header line {line}: {text:?}")]
    BadHeader { line: usize, text: String },
    #[error("{0} is not a node of the layout graph")]
    UnknownNode(Coord),
    #[error("{to} is unreachable from {from}")]
    Unreachable { from: Coord, to: Coord },
    #[error("path endpoints coincide at {0}")]
    SameEndpoint(Coord),
}

/// Grid position; ordering is row-major, which is the tie-breaking order used
/// throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub row: usize,
    pub col: usize,
}

impl Coord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationKind {
    #[serde(alias = "onion")]
    OnionPile,
    #[serde(alias = "tomato")]
    TomatoPile,
    Pot,
    #[serde(alias = "bowl", alias = "bowls")]
    BowlStack,
    #[serde(alias = "serve", alias = "serving")]
    ServeWindow,
}

impl StationKind {
    pub const ALL: [StationKind; 5] = [
        StationKind::OnionPile,
        StationKind::TomatoPile,
        StationKind::Pot,
        StationKind::BowlStack,
        StationKind::ServeWindow,
    ];

    pub fn from_char(ch: char) -> Option<Self> {
        Some(match ch {
            'O' => Self::OnionPile,
            'T' => Self::TomatoPile,
            'P' => Self::Pot,
            'B' => Self::BowlStack,
            'S' => Self::ServeWindow,
            _ => return None,
        })
    }

    pub fn as_char(self) -> char {
        match self {
            Self::OnionPile => 'O',
            Self::TomatoPile => 'T',
            Self::Pot => 'P',
            Self::BowlStack => 'B',
            Self::ServeWindow => 'S',
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::OnionPile => "onion_pile",
            Self::TomatoPile => "tomato_pile",
            Self::Pot => "pot",
            Self::BowlStack => "bowl_stack",
            Self::ServeWindow => "serve_window",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Floor,
    Counter,
    Workstation(StationKind),
}

impl CellKind {
    fn from_char(ch: char) -> Option<Self> {
        match ch {
            ' ' => Some(Self::Floor),
            'W' => Some(Self::Counter),
            other => StationKind::from_char(other).map(Self::Workstation),
        }
    }
}

/// Validated rectangular grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutSpec {
    width: usize,
    height: usize,
    cells: Vec<Vec<CellKind>>,
    capacities: BTreeMap<StationKind, u32>,
}

impl LayoutSpec {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell(&self, at: Coord) -> Option<CellKind> {
        self.cells.get(at.row).and_then(|r| r.get(at.col)).copied()
    }

    pub fn rows(&self) -> &[Vec<CellKind>] {
        &self.cells
    }

    /// Per-cell capacity `c(v)` for a workstation kind (default 1).
    pub fn capacity(&self, kind: StationKind) -> u32 {
        self.capacities.get(&kind).copied().unwrap_or(1)
    }

    pub fn set_capacity(&mut self, kind: StationKind, capacity: u32) {
        self.capacities.insert(kind, capacity);
    }

    pub fn count(&self, kind: CellKind) -> usize {
        self.cells.iter().flatten().filter(|&&c| c == kind).count()
    }

    pub fn coords(&self) -> impl Iterator<Item = (Coord, CellKind)> + '_ {
        self.cells.iter().enumerate().flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .map(move |(c, &kind)| (Coord::new(r, c), kind))
        })
    }

    fn neighbors(&self, at: Coord) -> impl Iterator<Item = Coord> + '_ {
        let Coord { row, col } = at;
        [
            row.checked_sub(1).map(|r| Coord::new(r, col)),
            (col + 1 < self.width).then(|| Coord::new(row, col + 1)),
            (row + 1 < self.height).then(|| Coord::new(row + 1, col)),
            col.checked_sub(1).map(|c| Coord::new(row, c)),
        ]
        .into_iter()
        .flatten()
    }

    /// Renders back to layout text, including capacity headers that differ from 1.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (kind, cap) in &self.capacities {
            if *cap != 1 {
                out.push_str(&format!("# capacity {} {}\n", kind.as_char(), cap));
            }
        }
        for row in &self.cells {
            for cell in row {
                out.push(match cell {
                    CellKind::Floor => ' ',
                    CellKind::Counter => 'W',
                    CellKind::Workstation(k) => k.as_char(),
                });
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_layout(text: &str) -> Result<LayoutSpec, LayoutError> {
    let mut capacities = BTreeMap::new();
    let mut rows: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some(header) = line.strip_prefix('#') {
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.first() == Some(&"capacity") {
                let bad = || LayoutError::BadHeader {
                    line: idx + 1,
                    text: line.to_string(),
                };
                let [_, ch, cap] = parts[..] else {
                    return Err(bad());
                };
                let mut chars = ch.chars();
                let kind = match (chars.next(), chars.next()) {
                    (Some(c), None) => StationKind::from_char(c).ok_or_else(bad)?,
                    _ => return Err(bad()),
                };
                capacities.insert(kind, cap.parse::<u32>().map_err(|_| bad())?);
            }
            continue;
        }
        rows.push(line);
    }
    while rows.last().is_some_and(|r| r.is_empty()) {
        rows.pop();
    }
    let Some(first) = rows.first() else {
        return Err(LayoutError::Empty);
    };
    let width = first.chars().count();
    if width == 0 {
        return Err(LayoutError::Empty);
    }

    let mut cells = Vec::with_capacity(rows.len());
    for (r, line) in rows.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(LayoutError::RaggedGrid {
                row: r,
                expected: width,
                found,
            });
        }
        let row = line
            .chars()
            .enumerate()
            .map(|(c, ch)| CellKind::from_char(ch).ok_or(LayoutError::UnknownCell { ch, row: r, col: c }))
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(row);
    }

    let spec = LayoutSpec {
        width,
        height: cells.len(),
        cells,
        capacities,
    };
    if spec.count(CellKind::Floor) == 0 {
        return Err(LayoutError::NoFloor);
    }
    for (at, kind) in spec.coords() {
        if matches!(kind, CellKind::Workstation(_))
            && !spec
                .neighbors(at)
                .any(|n| spec.cell(n) == Some(CellKind::Floor))
        {
            return Err(LayoutError::UnreachableWorkstation(at));
        }
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Walkable,
    TaskObject(StationKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Node {
    pub coord: Coord,
    pub kind: NodeKind,
}

/// Directed traversal graph: walkable cells are joined both ways, workstation
/// cells only receive edges from adjacent walkable cells, counters are absent.
#[derive(Debug, Clone)]
pub struct LayoutGraph {
    nodes: Vec<Node>,
    graph: Digraph,
    capacities: BTreeMap<StationKind, u32>,
}

pub fn build_graph(spec: &LayoutSpec) -> LayoutGraph {
    let nodes: Vec<Node> = spec
        .coords()
        .filter_map(|(coord, cell)| match cell {
            CellKind::Floor => Some(Node {
                coord,
                kind: NodeKind::Walkable,
            }),
            CellKind::Workstation(k) => Some(Node {
                coord,
                kind: NodeKind::TaskObject(k),
            }),
            CellKind::Counter => None,
        })
        .collect();
    let index: BTreeMap<Coord, usize> = nodes.iter().enumerate().map(|(i, n)| (n.coord, i)).collect();

    let mut graph = Digraph::new(nodes.len());
    for (u, node) in nodes.iter().enumerate() {
        if node.kind != NodeKind::Walkable {
            continue;
        }
        for n in spec.neighbors(node.coord) {
            if let Some(&v) = index.get(&n) {
                // walkable -> walkable edges are added from both sides as the
                // outer loop reaches each endpoint
                graph.add_edge(u, v);
            }
        }
    }
    let capacities = StationKind::ALL.iter().map(|&k| (k, spec.capacity(k))).collect();
    LayoutGraph {
        nodes,
        graph,
        capacities,
    }
}

/// Edge betweenness keyed by edge, in lexicographic edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCentralityMap {
    edges: Vec<(usize, usize)>,
    values: Vec<f64>,
}

impl EdgeCentralityMap {
    pub fn get(&self, u: usize, v: usize) -> Option<f64> {
        self.edges
            .binary_search(&(u, v))
            .ok()
            .map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.edges.iter().copied().zip(self.values.iter().copied())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum of `B(e)` over consecutive edges of a node path.
    pub fn path_sum(&self, path: &[usize]) -> f64 {
        path.windows(2)
            .map(|w| self.get(w[0], w[1]).unwrap_or(0.0))
            .sum()
    }
}

pub fn edge_betweenness(graph: &Digraph) -> EdgeCentralityMap {
    EdgeCentralityMap {
        edges: graph.edges().collect(),
        values: graph.edge_betweenness(),
    }
}

/// A shortest route through the layout graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub length: usize,
    pub path: Vec<usize>,
}

impl LayoutGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn digraph(&self) -> &Digraph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn node_at(&self, at: Coord) -> Option<usize> {
        self.nodes.binary_search_by(|n| n.coord.cmp(&at)).ok()
    }

    pub fn coord(&self, node: usize) -> Coord {
        self.nodes[node].coord
    }

    pub fn is_walkable(&self, node: usize) -> bool {
        self.nodes[node].kind == NodeKind::Walkable
    }

    pub fn walkable_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Walkable).count()
    }

    pub fn capacity(&self, kind: StationKind) -> u32 {
        self.capacities.get(&kind).copied().unwrap_or(1)
    }

    /// Workstation nodes of a given kind, in coordinate order.
    pub fn stations(&self, kind: StationKind) -> Vec<usize> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::TaskObject(kind))
            .map(|(i, _)| i)
            .collect()
    }

    /// Walkable cells from which a workstation can be used.
    pub fn access_cells(&self, station: usize) -> Vec<usize> {
        self.graph.predecessors(station).to_vec()
    }

    fn require(&self, at: Coord) -> Result<usize, LayoutError> {
        self.node_at(at).ok_or(LayoutError::UnknownNode(at))
    }

    pub fn shortest_path(&self, from: Coord, to: Coord) -> Result<Route, LayoutError> {
        let (u, v) = (self.require(from)?, self.require(to)?);
        self.shortest_path_between(u, v)
    }

    pub fn shortest_path_between(&self, u: usize, v: usize) -> Result<Route, LayoutError> {
        let path = self
            .graph
            .shortest_path(u, v)
            .ok_or(LayoutError::Unreachable {
                from: self.coord(u),
                to: self.coord(v),
            })?;
        Ok(Route {
            length: path.len() - 1,
            path,
        })
    }

    pub fn edge_betweenness(&self) -> EdgeCentralityMap {
        edge_betweenness(&self.graph)
    }

    /// Maximum number of internally vertex-disjoint walkable paths, i.e. how
    /// many agents can travel between the two cells without sharing a cell.
    pub fn disjoint_path_capacity(&self, from: Coord, to: Coord) -> Result<usize, LayoutError> {
        let (u, v) = (self.require(from)?, self.require(to)?);
        self.disjoint_path_capacity_between(u, v)
    }

    pub fn disjoint_path_capacity_between(&self, u: usize, v: usize) -> Result<usize, LayoutError> {
        if u == v {
            return Err(LayoutError::SameEndpoint(self.coord(u)));
        }
        let flow = self
            .graph
            .vertex_disjoint_paths(u, v, |n| self.is_walkable(n));
        if flow == 0 {
            return Err(LayoutError::Unreachable {
                from: self.coord(u),
                to: self.coord(v),
            });
        }
        Ok(flow)
    }

    /// Copy of the graph with one walkable cell removed (edges dropped, node kept).
    pub fn without_node(&self, removed: usize) -> LayoutGraph {
        let graph = Digraph::from_edges(
            self.nodes.len(),
            self.graph.edges().filter(|&(u, v)| u != removed && v != removed),
        );
        LayoutGraph {
            nodes: self.nodes.clone(),
            graph,
            capacities: self.capacities.clone(),
        }
    }

    pub fn export(&self) -> GraphExport {
        let betweenness = self.edge_betweenness();
        GraphExport {
            nodes: self
                .nodes
                .iter()
                .map(|n| ExportNode {
                    x: n.coord.col,
                    y: n.coord.row,
                    kind: match n.kind {
                        NodeKind::Walkable => "walkable".to_string(),
                        NodeKind::TaskObject(k) => k.name().to_string(),
                    },
                })
                .collect(),
            edges: self.graph.edges().map(|(u, v)| [u, v]).collect(),
            betweenness: betweenness
                .values()
                .iter()
                .enumerate()
                .map(|(i, &b)| (i.to_string(), b))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExportNode {
    pub x: usize,
    pub y: usize,
    pub kind: String,
}

/// JSON form of a layout graph: nodes, directed edges, and betweenness keyed
/// by edge index.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GraphExport {
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<[usize; 2]>,
    pub betweenness: BTreeMap<String, f64>,
}
