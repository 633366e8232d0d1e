//! Neighborhood graphs induced by a link-budget bound.
//!
//! For a bound `beta`, nodes `a` and `b` are adjacent iff both directed losses
//! exist and are at most `beta`. Sweeping `beta` over a grid yields a family of
//! graphs whose edge sets grow monotonically.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{LossMatrix, NodePositions};
use crate::NodeId;

/// Smallest budget reachable by the AT86RF231 (-17 dBm tx, -48 dBm sensitivity).
pub const DEFAULT_BETA_MIN: f64 = 31.0;
/// Largest budget reachable by the AT86RF231 (3 dBm tx, -101 dBm sensitivity).
pub const DEFAULT_BETA_MAX: f64 = 104.0;
pub const DEFAULT_BETA_STEP: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid beta grid: {0}")]
    InvalidGrid(String),
}

/// The bounds a family is evaluated at: `min, min + step, ...` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for BetaGrid {
    fn default() -> Self {
        BetaGrid {
            min: DEFAULT_BETA_MIN,
            max: DEFAULT_BETA_MAX,
            step: DEFAULT_BETA_STEP,
        }
    }
}

impl BetaGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self, GraphError> {
        let grid = BetaGrid { min, max, step };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(GraphError::InvalidGrid("non-finite value".into()));
        }
        if self.min > self.max {
            return Err(GraphError::InvalidGrid(format!(
                "min {} exceeds max {}",
                self.min, self.max
            )));
        }
        if self.step <= 0.0 {
            return Err(GraphError::InvalidGrid(format!(
                "step {} must be positive",
                self.step
            )));
        }
        Ok(())
    }

    /// Grid points, computed as `min + k * step` to avoid accumulating error.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|k| self.min + k as f64 * self.step)
            .collect()
    }

    pub fn contains(&self, beta: f64) -> bool {
        beta >= self.min && beta <= self.max
    }
}

/// Undirected graph `G_beta` over all matrix nodes, isolated ones included.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedGraph {
    beta: f64,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
}

impl BoundedGraph {
    /// An edgeless graph over `nodes`.
    pub fn empty(beta: f64, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        BoundedGraph {
            beta,
            adjacency: nodes.into_iter().map(|n| (n, BTreeSet::new())).collect(),
        }
    }

    /// Adds an undirected edge; both endpoints are added as nodes if needed.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        if a == b {
            return;
        }
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn contains_node(&self, node: NodeId) -> bool {
        self.adjacency.contains_key(&node)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|s| s.contains(&b))
    }

    /// Edges as `(a, b)` with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&a, nbrs)| nbrs.range(a..).map(move |&b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// `N(u, beta)`.
    pub fn neighbors(&self, u: NodeId) -> Result<&BTreeSet<NodeId>, GraphError> {
        self.adjacency.get(&u).ok_or(GraphError::UnknownNode(u))
    }

    pub fn degree(&self, u: NodeId) -> Result<usize, GraphError> {
        self.neighbors(u).map(BTreeSet::len)
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency
            .values()
            .map(BTreeSet::len)
            .max()
            .unwrap_or(0)
    }

    /// The subgraph induced by `keep` (nodes outside the graph are ignored).
    pub fn induced(&self, keep: &BTreeSet<NodeId>) -> BoundedGraph {
        BoundedGraph {
            beta: self.beta,
            adjacency: self
                .adjacency
                .iter()
                .filter(|(n, _)| keep.contains(n))
                .map(|(&n, nbrs)| (n, nbrs.intersection(keep).copied().collect()))
                .collect(),
        }
    }

    /// Graphviz rendering. Positions, when given, are emitted as `pos` attributes
    /// in the x/y plane.
    pub fn to_dot(&self, name: &str, positions: Option<&NodePositions>) -> String {
        let mut out = format!(
            "graph \"{name}\" {{\n  label=\"beta = {} dB\";\n",
            self.beta
        );
        for n in self.nodes() {
            match positions.and_then(|p| p.get(n)) {
                Some([x, y, _]) => writeln!(out, "  {n} [label=\"{n}\", pos=\"{x},{y}!\"];"),
                None => writeln!(out, "  {n} [label=\"{n}\"];"),
            }
            .expect("write to string");
        }
        for (a, b) in self.edges() {
            writeln!(out, "  {a} -- {b};").expect("write to string");
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'a str,
            version: u32,
            beta: f64,
            nodes: Vec<NodeId>,
            edges: Vec<(NodeId, NodeId)>,
        }
        let doc = Doc {
            format: "multihop-topo/graph",
            version: 1,
            beta: self.beta,
            nodes: self.nodes().collect(),
            edges: self.edges().collect(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("graph serializes");
        s.push('\n');
        s
    }
}

/// Builds `G_beta`. Asymmetric links where either direction exceeds `beta`, or
/// was never measured, are excluded.
pub fn neighborhood_graph(matrix: &LossMatrix, beta: f64) -> BoundedGraph {
    let mut g = BoundedGraph::empty(beta, matrix.nodes().iter().copied());
    for (tx, rx, e) in matrix.entries() {
        if tx < rx && e.mean_loss <= beta {
            if let Some(back) = matrix.loss(rx, tx) {
                if back <= beta {
                    g.add_edge(tx, rx);
                }
            }
        }
    }
    g
}

/// `N(u, beta)` on an existing graph.
pub fn bounded_neighbors(graph: &BoundedGraph, u: NodeId) -> Result<&BTreeSet<NodeId>, GraphError> {
    graph.neighbors(u)
}

/// A loss matrix paired with the grid of bounds to evaluate it at.
#[derive(Debug, Clone, Copy)]
pub struct GraphFamily<'m> {
    pub matrix: &'m LossMatrix,
    pub grid: BetaGrid,
}

impl<'m> GraphFamily<'m> {
    pub fn new(matrix: &'m LossMatrix, grid: BetaGrid) -> Result<Self, GraphError> {
        grid.validate()?;
        Ok(GraphFamily { matrix, grid })
    }

    pub fn with_default_grid(matrix: &'m LossMatrix) -> Self {
        GraphFamily {
            matrix,
            grid: BetaGrid::default(),
        }
    }

    pub fn graph(&self, beta: f64) -> BoundedGraph {
        neighborhood_graph(self.matrix, beta)
    }

    /// One graph per grid point, in grid order.
    pub fn graphs(&self) -> Vec<BoundedGraph> {
        self.grid
            .values()
            .into_par_iter()
            .map(|b| neighborhood_graph(self.matrix, b))
            .collect()
    }
}

/// Degree multisets (sorted ascending) per grid bound.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    pub rows: Vec<(f64, Vec<usize>)>,
}

impl DegreeDistribution {
    /// `beta,degree,count` rows, one per distinct degree at each bound.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,degree,count\n");
        for (beta, degrees) in &self.rows {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &d in degrees {
                *counts.entry(d).or_default() += 1;
            }
            for (d, c) in counts {
                writeln!(out, "{beta},{d},{c}").expect("write to string");
            }
        }
        out
    }

    pub fn at(&self, beta: f64) -> Option<&[usize]> {
        self.rows
            .iter()
            .find(|(b, _)| *b == beta)
            .map(|(_, d)| d.as_slice())
    }
}

pub fn degree_distribution(family: &GraphFamily<'_>) -> DegreeDistribution {
    let rows = family
        .graphs()
        .into_iter()
        .map(|g| {
            let mut degrees: Vec<usize> = g.adjacency.values().map(BTreeSet::len).collect();
            degrees.sort_unstable();
            (g.beta, degrees)
        })
        .collect();
    DegreeDistribution { rows }
}

/// Maximal connected node sets, largest first; equal sizes are ordered by their
/// smallest node id.
pub fn connected_components(graph: &BoundedGraph) -> Vec<BTreeSet<NodeId>> {
    let mut seen: BTreeSet<NodeId> = BTreeSet::new();
    let mut components = Vec::new();
    for start in graph.nodes() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &graph.adjacency[&u] {
                if seen.insert(v) {
                    comp.insert(v);
                    queue.push_back(v);
                }
            }
        }
        components.push(comp);
    }
    components.sort_by(|a, b| {
        b.len()
            .cmp(&a.len())
            .then_with(|| a.first().cmp(&b.first()))
    });
    components
}

/// Edge-count change between two consecutive grid bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeDelta {
    pub from: f64,
    pub to: f64,
    pub added: usize,
    /// Edges present at `from` but not at `to`; zero for any valid family.
    pub removed: usize,
}

/// Consecutive-bound edge deltas. Empty when the grid has a single point.
pub fn monotonicity_report(family: &GraphFamily<'_>) -> Vec<EdgeDelta> {
    let edge_sets: Vec<(f64, BTreeSet<(NodeId, NodeId)>)> = family
        .graphs()
        .into_iter()
        .map(|g| (g.beta, g.edges().collect()))
        .collect();
    edge_sets
        .windows(2)
        .map(|w| EdgeDelta {
            from: w[0].0,
            to: w[1].0,
            added: w[1].1.difference(&w[0].1).count(),
            removed: w[0].1.difference(&w[1].1).count(),
        })
        .collect()
}

pub fn monotonicity_csv(deltas: &[EdgeDelta]) -> String {
    let mut out = String::from("beta_from,beta_to,added,removed\n");
    for d in deltas {
        writeln!(out, "{},{},{},{}", d.from, d.to, d.added, d.removed).expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(v: u32) -> NodeId {
        NodeId(v)
    }

    fn symmetric(pairs: &[(u32, u32, f64)]) -> LossMatrix {
        let mut m = LossMatrix::default();
        for &(a, b, l) in pairs {
            m.insert_loss(n(a), n(b), l).unwrap();
            m.insert_loss(n(b), n(a), l).unwrap();
        }
        m
    }

    #[test]
    fn asymmetric_link_needs_both_directions() {
        let mut m = LossMatrix::default();
        m.insert_loss(n(1), n(2), 45.0).unwrap();
        m.insert_loss(n(2), n(1), 50.0).unwrap();
        assert!(!neighborhood_graph(&m, 47.0).has_edge(n(1), n(2)));
        let g = neighborhood_graph(&m, 50.0);
        assert!(g.has_edge(n(1), n(2)) && g.has_edge(n(2), n(1)));
    }

    #[test]
    fn missing_direction_never_connects() {
        let mut m = LossMatrix::default();
        m.insert_loss(n(1), n(2), 31.0).unwrap();
        assert_eq!(neighborhood_graph(&m, 104.0).edge_count(), 0);
        assert_eq!(neighborhood_graph(&m, 104.0).node_count(), 2);
    }

    #[test]
    fn full_mesh_at_max_bound() {
        let pairs: Vec<_> = (1..=5)
            .flat_map(|a| ((a + 1)..=5).map(move |b| (a, b, 60.0 + (a * b) as f64)))
            .collect();
        let g = neighborhood_graph(&symmetric(&pairs), 104.0);
        assert_eq!(g.edge_count(), 10);
        for u in 1..=5 {
            assert_eq!(bounded_neighbors(&g, n(u)).unwrap().len(), 4);
        }
    }

    #[test]
    fn neighbor_queries() {
        let mut m = symmetric(&[(1, 2, 40.0)]);
        m.add_node(n(3));
        let g = neighborhood_graph(&m, 50.0);
        assert_eq!(
            bounded_neighbors(&g, n(1)).unwrap(),
            &BTreeSet::from([n(2)])
        );
        assert!(bounded_neighbors(&g, n(3)).unwrap().is_empty());
        assert_eq!(
            bounded_neighbors(&g, n(4)),
            Err(GraphError::UnknownNode(n(4)))
        );
    }

    #[test]
    fn degrees_at_extremes() {
        let m = symmetric(&[(1, 2, 50.0), (1, 3, 60.0), (2, 3, 70.0)]);
        let family = GraphFamily::new(&m, BetaGrid::new(40.0, 80.0, 40.0).unwrap()).unwrap();
        let dist = degree_distribution(&family);
        assert_eq!(dist.at(40.0), Some(&[0, 0, 0][..]));
        assert_eq!(dist.at(80.0), Some(&[2, 2, 2][..]));
        assert_eq!(dist.to_csv(), "beta,degree,count\n40,0,3\n80,2,3\n");
    }

    #[test]
    fn components_ordering() {
        let mut g = BoundedGraph::empty(50.0, (1..=5).map(n));
        assert_eq!(connected_components(&g).len(), 5);
        g.add_edge(n(4), n(5));
        g.add_edge(n(2), n(3));
        let comps = connected_components(&g);
        assert_eq!(
            comps,
            vec![
                BTreeSet::from([n(2), n(3)]),
                BTreeSet::from([n(4), n(5)]),
                BTreeSet::from([n(1)]),
            ]
        );
        for a in 1..=5 {
            for b in (a + 1)..=5 {
                g.add_edge(n(a), n(b));
            }
        }
        assert_eq!(connected_components(&g).len(), 1);
    }

    #[test]
    fn monotonicity_of_two_level_matrix() {
        let m = symmetric(&[(1, 2, 40.0), (3, 4, 50.0)]);
        let family = GraphFamily::new(&m, BetaGrid::new(39.0, 51.0, 1.0).unwrap()).unwrap();
        let report = monotonicity_report(&family);
        assert_eq!(report.len(), 12);
        for d in &report {
            let expected = usize::from(d.to == 40.0 || d.to == 50.0);
            assert_eq!((d.added, d.removed), (expected, 0), "{d:?}");
        }
    }

    #[test]
    fn constant_matrix_jumps_once() {
        let pairs: Vec<_> = (1..=4)
            .flat_map(|a| ((a + 1)..=4).map(move |b| (a, b, 55.0)))
            .collect();
        let m = symmetric(&pairs);
        let family = GraphFamily::with_default_grid(&m);
        let report = monotonicity_report(&family);
        let jumps: Vec<_> = report.iter().filter(|d| d.added > 0).collect();
        assert_eq!(jumps.len(), 1);
        assert_eq!((jumps[0].to, jumps[0].added), (55.0, 6));
    }

    #[test]
    fn grid_values_and_validation() {
        assert_eq!(BetaGrid::default().values().len(), 74);
        assert_eq!(
            BetaGrid::new(40.0, 41.0, 0.5).unwrap().values(),
            vec![40.0, 40.5, 41.0]
        );
        assert!(BetaGrid::new(50.0, 40.0, 1.0).is_err());
        assert!(BetaGrid::new(40.0, 50.0, 0.0).is_err());
        let single = BetaGrid::new(40.0, 40.0, 1.0).unwrap();
        let m = LossMatrix::default();
        assert!(monotonicity_report(&GraphFamily::new(&m, single).unwrap()).is_empty());
    }

    #[test]
    fn dot_output() {
        let m = symmetric(&[(1, 2, 40.0)]);
        let g = neighborhood_graph(&m, 45.0);
        let mut p = NodePositions::new();
        p.insert(n(1), [1.0, 2.0, 0.0]);
        let dot = g.to_dot("G_45", Some(&p));
        assert!(dot.starts_with("graph \"G_45\" {"));
        assert!(dot.contains("1 [label=\"1\", pos=\"1,2!\"];"));
        assert!(dot.contains("2 [label=\"2\"];"));
        assert!(dot.contains("1 -- 2;"));
    }
}
