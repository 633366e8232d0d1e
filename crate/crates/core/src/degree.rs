//! Constant-degree induced subgraphs.
//!
//! For a bound `beta` and target degree `c`, find the largest node set in which
//! every selected node has exactly `c` selected neighbors in `G_beta`. With one
//! binary variable `x(u)` per node and `m` the maximum degree of `G_beta`:
//!
//! ```text
//! maximize   sum x(u)
//! subject to c * x(u) <= sum_{v in N(u)} x(v) <= c + m * (1 - x(u))   for all u
//! ```
//!
//! A deselected node makes its row vacuous; a selected node pins its selected
//! neighbor count to `c`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{connected_components, BoundedGraph, GraphFamily};
use crate::ilp::{self, BinaryProgram, Comparator, IlpError, Sense, Status};
use crate::ingest::{LossMatrix, NodePositions};
use crate::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum DegreeError {
    #[error("target degree must be at least 1")]
    ZeroDegree,
    #[error("no selections to choose from")]
    NoSelections,
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error("edge set shrank between beta {from} and {to}")]
    NonMonotoneFamily { from: f64, to: f64 },
    #[error("selection at beta {beta} is not {c}-regular: {violations:?}")]
    NotRegular {
        beta: f64,
        c: usize,
        violations: Vec<(NodeId, usize)>,
    },
}

/// The degree program together with the node behind each variable.
#[derive(Debug, Clone)]
pub struct DegreeProgram {
    pub program: BinaryProgram,
    /// `nodes[i]` is the node of variable `i`.
    pub nodes: Vec<NodeId>,
    /// Maximum degree of the graph the program was built from.
    pub m: usize,
}

/// Builds the program over every node of `graph`.
pub fn build_degree_program(graph: &BoundedGraph, c: usize) -> Result<DegreeProgram, DegreeError> {
    let nodes: Vec<NodeId> = graph.nodes().collect();
    build_program_over(graph, &nodes, c, graph.max_degree())
}

/// Program restricted to `nodes`, which must be closed under adjacency (a union
/// of components). `m` is passed in so component programs keep the
/// whole-graph constant.
fn build_program_over(
    graph: &BoundedGraph,
    nodes: &[NodeId],
    c: usize,
    m: usize,
) -> Result<DegreeProgram, DegreeError> {
    if c == 0 {
        return Err(DegreeError::ZeroDegree);
    }
    let mut program = BinaryProgram::new(Sense::Maximize);
    let vars: Vec<_> = nodes
        .iter()
        .map(|n| program.add_var(format!("n{n}"), 1))
        .collect();
    let index = |n: &NodeId| nodes.binary_search(n).ok();
    let (c, m) = (c as i64, m as i64);
    for (i, u) in nodes.iter().enumerate() {
        let nbrs: Vec<_> = graph
            .neighbors(*u)
            .expect("node from graph")
            .iter()
            .map(|v| vars[index(v).expect("nodes closed under adjacency")])
            .collect();
        // c*x(u) - sum x(v) <= 0
        program.add_constraint(
            std::iter::once((vars[i], c)).chain(nbrs.iter().map(|&v| (v, -1))),
            Comparator::Le,
            0,
        )?;
        // sum x(v) + m*x(u) <= c + m
        program.add_constraint(
            nbrs.iter()
                .map(|&v| (v, 1))
                .chain(std::iter::once((vars[i], m))),
            Comparator::Le,
            c + m,
        )?;
    }
    Ok(DegreeProgram {
        program,
        nodes: nodes.to_vec(),
        m: m as usize,
    })
}

/// A constant-degree selection at one bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSelection {
    pub beta: f64,
    pub c: usize,
    pub selected: BTreeSet<NodeId>,
    /// Connected components of the induced subgraph, largest first.
    pub components: Vec<BTreeSet<NodeId>>,
    pub objective: usize,
}

impl DegreeSelection {
    pub fn induced_graph(&self, matrix: &LossMatrix) -> BoundedGraph {
        let mut g = BoundedGraph::empty(self.beta, self.selected.iter().copied());
        let full = crate::graph::neighborhood_graph(matrix, self.beta);
        for (a, b) in full.edges() {
            if self.selected.contains(&a) && self.selected.contains(&b) {
                g.add_edge(a, b);
            }
        }
        g
    }

    pub fn to_dot(&self, matrix: &LossMatrix, positions: Option<&NodePositions>) -> String {
        let name = format!("degree_c{}_beta{}", self.c, self.beta);
        self.induced_graph(matrix).to_dot(&name, positions)
    }
}

const SELECTION_FORMAT: &str = "multihop-topo/selection";

/// Sweep output: every nonempty selection plus the largest-component pick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub format: String,
    pub version: u32,
    pub c: usize,
    pub best: Option<DegreeSelection>,
    pub selections: Vec<DegreeSelection>,
}

impl SelectionDocument {
    pub fn new(c: usize, best: Option<DegreeSelection>, selections: Vec<DegreeSelection>) -> Self {
        SelectionDocument {
            format: SELECTION_FORMAT.to_string(),
            version: 1,
            c,
            best,
            selections,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("selections serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let doc: SelectionDocument = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if doc.format != SELECTION_FORMAT || doc.version != 1 {
            return Err(format!(
                "expected {SELECTION_FORMAT:?} version 1, found {:?} version {}",
                doc.format, doc.version
            ));
        }
        Ok(doc)
    }
}

/// Selected nodes whose selected-neighbor count differs from `c`.
pub fn regularity_violations(
    graph: &BoundedGraph,
    selected: &BTreeSet<NodeId>,
    c: usize,
) -> Vec<(NodeId, usize)> {
    selected
        .iter()
        .filter_map(|&u| {
            let deg = graph
                .neighbors(u)
                .map(|n| n.intersection(selected).count())
                .unwrap_or(0);
            (deg != c).then_some((u, deg))
        })
        .collect()
}

/// Solves the degree program on one graph. Components are solved
/// independently with the whole-graph `m`; the objective is separable, so the
/// union is optimal for the full program.
pub fn select_in_graph(graph: &BoundedGraph, c: usize) -> Result<DegreeSelection, DegreeError> {
    if c == 0 {
        return Err(DegreeError::ZeroDegree);
    }
    let m = graph.max_degree();
    let mut selected = BTreeSet::new();
    for comp in connected_components(graph) {
        // A c-regular subgraph needs at least c + 1 nodes.
        if comp.len() <= c {
            continue;
        }
        let nodes: Vec<NodeId> = comp.into_iter().collect();
        let dp = build_program_over(graph, &nodes, c, m)?;
        let sol = ilp::solve(&dp.program)?;
        debug_assert_eq!(sol.status, Status::Optimal, "all-zero is always feasible");
        selected.extend(
            dp.nodes
                .iter()
                .zip(&sol.assignment)
                .filter(|(_, &x)| x)
                .map(|(n, _)| *n),
        );
    }
    let violations = regularity_violations(graph, &selected, c);
    if !violations.is_empty() {
        return Err(DegreeError::NotRegular {
            beta: graph.beta(),
            c,
            violations,
        });
    }
    let components = connected_components(&graph.induced(&selected));
    Ok(DegreeSelection {
        beta: graph.beta(),
        c,
        objective: selected.len(),
        selected,
        components,
    })
}

/// Runs the degree program at every grid bound of `family` over `matrix` and
/// keeps nonempty results, in grid order.
pub fn select_constant_degree(
    matrix: &LossMatrix,
    c: usize,
    family: &GraphFamily<'_>,
) -> Result<Vec<DegreeSelection>, DegreeError> {
    if c == 0 {
        return Err(DegreeError::ZeroDegree);
    }
    let graphs = GraphFamily {
        matrix,
        grid: family.grid,
    }
    .graphs();
    for w in graphs.windows(2) {
        if w[0].edges().any(|(a, b)| !w[1].has_edge(a, b)) {
            return Err(DegreeError::NonMonotoneFamily {
                from: w[0].beta(),
                to: w[1].beta(),
            });
        }
    }
    let results: Vec<DegreeSelection> = graphs
        .par_iter()
        .map(|g| select_in_graph(g, c))
        .collect::<Result<_, _>>()?;
    Ok(results.into_iter().filter(|s| s.objective > 0).collect())
}

/// Picks the selection with the largest connected component and restricts it
/// to that component. Ties prefer the smaller bound, then the component with
/// the smaller lowest node id.
pub fn largest_component_selection(
    selections: &[DegreeSelection],
) -> Result<DegreeSelection, DegreeError> {
    let best = selections
        .iter()
        .filter_map(|s| s.components.first().map(|comp| (s, comp)))
        .min_by(|(sa, ca), (sb, cb)| {
            cb.len()
                .cmp(&ca.len())
                .then(sa.beta.total_cmp(&sb.beta))
                .then(ca.first().cmp(&cb.first()))
        });
    let Some((sel, comp)) = best else {
        return Err(DegreeError::NoSelections);
    };
    Ok(DegreeSelection {
        beta: sel.beta,
        c: sel.c,
        selected: comp.clone(),
        components: vec![comp.clone()],
        objective: comp.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{neighborhood_graph, BetaGrid};

    fn n(v: u32) -> NodeId {
        NodeId(v)
    }

    fn graph(nodes: u32, edges: &[(u32, u32)]) -> BoundedGraph {
        let mut g = BoundedGraph::empty(50.0, (1..=nodes).map(n));
        for &(a, b) in edges {
            g.add_edge(n(a), n(b));
        }
        g
    }

    /// Reference: every subset, largest c-regular one, first in the same
    /// preference order the solver uses.
    fn subset_oracle(g: &BoundedGraph, c: usize) -> usize {
        let nodes: Vec<NodeId> = g.nodes().collect();
        (0u32..(1 << nodes.len()))
            .filter_map(|mask| {
                let set: BTreeSet<NodeId> = nodes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, n)| *n)
                    .collect();
                regularity_violations(g, &set, c)
                    .is_empty()
                    .then_some(set.len())
            })
            .max()
            .unwrap()
    }

    #[test]
    fn triangle_is_two_regular() {
        let g = graph(3, &[(1, 2), (2, 3), (1, 3)]);
        let dp = build_degree_program(&g, 2).unwrap();
        assert_eq!(dp.m, 2);
        let sol = ilp::solve(&dp.program).unwrap();
        assert_eq!(sol.objective_value, 3);
        assert_eq!(select_in_graph(&g, 2).unwrap().objective, 3);
    }

    #[test]
    fn path_has_no_two_regular_subgraph() {
        let g = graph(3, &[(1, 2), (2, 3)]);
        assert_eq!(subset_oracle(&g, 2), 0);
        let sol = ilp::solve(&build_degree_program(&g, 2).unwrap().program).unwrap();
        assert_eq!(sol.objective_value, 0);
    }

    #[test]
    fn star_with_four_leaves() {
        let g = graph(5, &[(1, 2), (1, 3), (1, 4), (1, 5)]);
        let expected = subset_oracle(&g, 1);
        // Hub plus one leaf is the only 1-regular shape; leaves are independent.
        assert_eq!(expected, 2);
        let sol = ilp::solve(&build_degree_program(&g, 1).unwrap().program).unwrap();
        assert_eq!(sol.objective_value as usize, expected);
        let sel = select_in_graph(&g, 1).unwrap();
        assert_eq!(sel.selected, BTreeSet::from([n(1), n(2)]));
    }

    #[test]
    fn deselected_rows_are_vacuous() {
        let g = graph(5, &[(1, 2), (1, 3), (1, 4), (1, 5), (2, 3)]);
        let dp = build_degree_program(&g, 2).unwrap();
        for (i, u) in dp.nodes.iter().enumerate() {
            let deg = g.degree(*u).unwrap() as i64;
            let upper = &dp.program.constraints()[2 * i + 1];
            // With x(u) = 0 the row reads sum <= c + m, and sum <= deg <= m.
            assert_eq!(upper.rhs, 2 + dp.m as i64);
            assert!(deg <= upper.rhs);
        }
    }

    #[test]
    fn zero_degree_rejected() {
        let g = graph(2, &[(1, 2)]);
        assert_eq!(
            build_degree_program(&g, 0).unwrap_err(),
            DegreeError::ZeroDegree
        );
    }

    #[test]
    fn four_cycle_at_its_bound() {
        let mut m = LossMatrix::default();
        for (a, b) in [(1, 2), (2, 3), (3, 4), (4, 1)] {
            m.insert_loss(n(a), n(b), 50.0).unwrap();
            m.insert_loss(n(b), n(a), 50.0).unwrap();
        }
        for (a, b) in [(1, 3), (2, 4)] {
            m.insert_loss(n(a), n(b), 80.0).unwrap();
            m.insert_loss(n(b), n(a), 80.0).unwrap();
        }
        let family = GraphFamily::new(&m, BetaGrid::new(49.0, 50.0, 1.0).unwrap()).unwrap();
        let sels = select_constant_degree(&m, 2, &family).unwrap();
        assert_eq!(sels.len(), 1);
        assert_eq!(sels[0].beta, 50.0);
        assert_eq!(sels[0].objective, 4);
        let g = neighborhood_graph(&m, 80.0);
        assert_eq!(select_in_graph(&g, 3).unwrap().objective, 4);
    }

    #[test]
    fn oversized_degree_gives_nothing() {
        let mut m = LossMatrix::default();
        m.insert_loss(n(1), n(2), 40.0).unwrap();
        m.insert_loss(n(2), n(1), 40.0).unwrap();
        let family = GraphFamily::with_default_grid(&m);
        assert!(select_constant_degree(&m, 5, &family).unwrap().is_empty());
    }

    #[test]
    fn component_restriction_and_tie_rules() {
        let sel = |beta: f64, comps: Vec<Vec<u32>>| {
            let components: Vec<BTreeSet<NodeId>> = comps
                .into_iter()
                .map(|c| c.into_iter().map(n).collect())
                .collect();
            let selected: BTreeSet<NodeId> = components.iter().flatten().copied().collect();
            DegreeSelection {
                beta,
                c: 2,
                objective: selected.len(),
                selected,
                components,
            }
        };
        let one = sel(50.0, vec![vec![1, 2, 3, 4], vec![5, 6, 7]]);
        let best = largest_component_selection(&[one]).unwrap();
        assert_eq!(best.selected, BTreeSet::from([n(1), n(2), n(3), n(4)]));
        assert_eq!(best.objective, 4);

        let a = sel(52.0, vec![vec![1, 2, 3]]);
        let b = sel(47.0, vec![vec![4, 5, 6]]);
        assert_eq!(largest_component_selection(&[a, b]).unwrap().beta, 47.0);
        assert_eq!(
            largest_component_selection(&[]).unwrap_err(),
            DegreeError::NoSelections
        );
    }
}
