//! Unweighted directed graphs over dense `usize` node ids.
//!
//! [`Digraph`] carries the algorithms the layout module needs: BFS distances,
//! deterministic shortest paths, Brandes-style edge betweenness, and
//! vertex-disjoint path counting via unit-capacity max-flow.

use std::collections::VecDeque;

/// Directed graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Digraph {
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl Digraph {
    pub fn new(node_count: usize) -> Self {
        Self {
            out: vec![Vec::new(); node_count],
            inc: vec![Vec::new(); node_count],
        }
    }

    /// Builds a graph from an edge list. Duplicate edges and self-loops are dropped.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = Self::new(node_count);
        for (u, v) in edges {
            g.add_edge(u, v);
        }
        g
    }

    pub fn add_edge(&mut self, u: usize, v: usize) {
        assert!(u < self.out.len() && v < self.out.len(), "edge endpoint out of range");
        if u == v {
            return;
        }
        if let Err(pos) = self.out[u].binary_search(&v) {
            self.out[u].insert(pos, v);
            let pos = self.inc[v].binary_search(&u).unwrap_err();
            self.inc[v].insert(pos, u);
        }
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.out[u].binary_search(&v).is_ok()
    }

    pub fn successors(&self, u: usize) -> &[usize] {
        &self.out[u]
    }

    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.inc[v]
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.out[u].len()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.inc[v].len()
    }

    /// All edges in lexicographic `(source, target)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    /// Hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        bfs(&self.out, source)
    }

    /// Lexicographically smallest minimum-hop path from `from` to `to`.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        // Distances to `to` on the reversed graph let us walk forward greedily,
        // always taking the smallest successor that stays on a shortest path.
        let to_target = bfs(&self.inc, to);
        let mut remaining = to_target[from]?;
        let mut path = Vec::with_capacity(remaining + 1);
        path.push(from);
        let mut cur = from;
        while remaining > 0 {
            cur = *self.out[cur]
                .iter()
                .find(|&&next| to_target[next] == Some(remaining - 1))
                .expect("a successor one hop closer exists on every shortest path");
            path.push(cur);
            remaining -= 1;
        }
        Some(path)
    }

    /// Unnormalized edge betweenness over all ordered pairs `s != t` with `t`
    /// reachable from `s`. Values are returned in [`Digraph::edges`] order.
    pub fn edge_betweenness(&self) -> Vec<f64> {
        let n = self.node_count();
        let offsets: Vec<usize> = self
            .out
            .iter()
            .scan(0, |acc, vs| {
                let start = *acc;
                *acc += vs.len();
                Some(start)
            })
            .collect();
        let edge_index = |u: usize, v: usize| offsets[u] + self.out[u].binary_search(&v).unwrap();

        let mut scores = vec![0.0; self.edge_count()];
        let mut sigma = vec![0.0f64; n];
        let mut dist: Vec<Option<usize>> = vec![None; n];
        let mut delta = vec![0.0f64; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::with_capacity(n);

        for s in 0..n {
            sigma.iter_mut().for_each(|x| *x = 0.0);
            dist.iter_mut().for_each(|x| *x = None);
            delta.iter_mut().for_each(|x| *x = 0.0);
            order.clear();

            sigma[s] = 1.0;
            dist[s] = Some(0);
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let dv = dist[v].unwrap();
                for &w in &self.out[v] {
                    match dist[w] {
                        None => {
                            dist[w] = Some(dv + 1);
                            sigma[w] += sigma[v];
                            queue.push_back(w);
                        }
                        Some(dw) if dw == dv + 1 => sigma[w] += sigma[v],
                        Some(_) => {}
                    }
                }
            }

            for &w in order.iter().rev() {
                let dw = dist[w].unwrap();
                for &v in &self.inc[w] {
                    if dist[v].is_some_and(|dv| dv + 1 == dw) {
                        let credit = sigma[v] / sigma[w] * (1.0 + delta[w]);
                        scores[edge_index(v, w)] += credit;
                        delta[v] += credit;
                    }
                }
            }
        }
        scores
    }

    /// Maximum number of internally vertex-disjoint `from -> to` paths.
    ///
    /// Every node other than the endpoints is split into an in/out pair joined
    /// by a unit arc, and every original edge becomes a unit arc, so the max
    /// flow equals the minimum vertex cut separating the endpoints.
    /// `interior` decides which nodes may appear inside a path.
    pub fn vertex_disjoint_paths(
        &self,
        from: usize,
        to: usize,
        interior: impl Fn(usize) -> bool,
    ) -> usize {
        assert_ne!(from, to, "endpoints must differ");
        let n = self.node_count();
        // node v -> (in = 2v, out = 2v + 1)
        let mut net = FlowNetwork::new(2 * n);
        for v in 0..n {
            if v == from || v == to {
                net.add_arc(2 * v, 2 * v + 1, usize::MAX / 4);
            } else if interior(v) {
                net.add_arc(2 * v, 2 * v + 1, 1);
            }
        }
        for (u, v) in self.edges() {
            net.add_arc(2 * u + 1, 2 * v, 1);
        }
        net.max_flow(2 * from + 1, 2 * to)
    }
}

fn bfs(adj: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let next = dist[v].unwrap() + 1;
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(next);
                queue.push_back(w);
            }
        }
    }
    dist
}

struct Arc {
    to: usize,
    cap: usize,
}

/// Residual network for Edmonds-Karp. Arc `2k` is paired with reverse arc `2k + 1`.
struct FlowNetwork {
    arcs: Vec<Arc>,
    adj: Vec<Vec<usize>>,
}

impl FlowNetwork {
    fn new(nodes: usize) -> Self {
        Self {
            arcs: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_arc(&mut self, from: usize, to: usize, cap: usize) {
        self.adj[from].push(self.arcs.len());
        self.arcs.push(Arc { to, cap });
        self.adj[to].push(self.arcs.len());
        self.arcs.push(Arc { to: from, cap: 0 });
    }

    fn max_flow(&mut self, source: usize, sink: usize) -> usize {
        let mut flow = 0;
        loop {
            let mut via: Vec<Option<usize>> = vec![None; self.adj.len()];
            let mut seen = vec![false; self.adj.len()];
            seen[source] = true;
            let mut queue = VecDeque::from([source]);
            while let Some(v) = queue.pop_front() {
                if v == sink {
                    break;
                }
                for &a in &self.adj[v] {
                    let w = self.arcs[a].to;
                    if self.arcs[a].cap > 0 && !seen[w] {
                        seen[w] = true;
                        via[w] = Some(a);
                        queue.push_back(w);
                    }
                }
            }
            if !seen[sink] {
                return flow;
            }
            let mut push = usize::MAX;
            let mut v = sink;
            while let Some(a) = via[v] {
                push = push.min(self.arcs[a].cap);
                v = self.arcs[a ^ 1].to;
            }
            let mut v = sink;
            while let Some(a) = via[v] {
                self.arcs[a].cap -= push;
                self.arcs[a ^ 1].cap += push;
                v = self.arcs[a ^ 1].to;
            }
            flow += push;
        }
    }
}
