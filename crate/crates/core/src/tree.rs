//! Layered trees with a prescribed per-level breadth.
//!
//! A [`LayeredTree`] rooted at `v0` for bound `beta` and margin `eta` satisfies:
//!
//! 1. every node at level `i >= 1` has a `G_beta` neighbor at level `i - 1`;
//! 2. level 0 is exactly the root;
//! 3. level `i` holds at least `kappa(i)` nodes;
//! 4. no node at level `i` has a `G_{beta+eta}` neighbor at level `i - 2` or
//!    shallower, so small channel changes cannot shortcut the layering.
//!
//! [`monitored_bfs`] grows such a tree breadth first and stops at the first
//! level that falls short of `kappa`. [`reduce_tree`] then drops nodes that
//! are not needed to keep the depth and breadth, via a covering program.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{neighborhood_graph, BoundedGraph, GraphFamily};
use crate::ilp::{self, BinaryProgram, Comparator, IlpError, Sense, Status};
use crate::ingest::LossMatrix;
use crate::NodeId;

const TREE_FORMAT: &str = "multihop-topo/trees";

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("unknown root {0}")]
    UnknownRoot(NodeId),
    #[error("margin must be finite and non-negative, got {0}")]
    InvalidMargin(f64),
    #[error("invalid kappa {0:?} (expected const:K, linear or table:1=A,2=B,...)")]
    InvalidKappa(String),
    #[error(transparent)]
    Ilp(#[from] IlpError),
    #[error("reduction infeasible")]
    ReductionInfeasible,
    #[error("tree violates its requirements:\n{0}")]
    InvalidTree(RequirementReport),
    #[error("fresh matrix lacks tree nodes {0:?}")]
    MissingNodes(Vec<NodeId>),
    #[error("malformed tree document: {0}")]
    Format(String),
}

/// Minimum breadth per depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KappaSpec {
    /// `kappa(d) = k`.
    Constant(u32),
    /// `kappa(d) = d + 1`.
    Linear,
    /// `kappa(d) = table[d - 1]`; depths past the table reuse its last entry.
    Table(Vec<u32>),
}

impl KappaSpec {
    /// Required breadth at `depth >= 1`.
    pub fn at(&self, depth: usize) -> usize {
        debug_assert!(depth >= 1);
        match self {
            KappaSpec::Constant(k) => *k as usize,
            KappaSpec::Linear => depth + 1,
            KappaSpec::Table(t) => t[(depth - 1).min(t.len() - 1)] as usize,
        }
    }
}

impl fmt::Display for KappaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KappaSpec::Constant(k) => write!(f, "const:{k}"),
            KappaSpec::Linear => f.write_str("linear"),
            KappaSpec::Table(t) => {
                f.write_str("table:")?;
                for (i, v) in t.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{}={v}", i + 1)?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for KappaSpec {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || TreeError::InvalidKappa(s.to_string());
        if s == "linear" {
            return Ok(KappaSpec::Linear);
        }
        if let Some(k) = s.strip_prefix("const:") {
            let k: u32 = k.parse().map_err(|_| bad())?;
            return if k >= 1 {
                Ok(KappaSpec::Constant(k))
            } else {
                Err(bad())
            };
        }
        if let Some(body) = s.strip_prefix("table:") {
            let mut entries = BTreeMap::new();
            for item in body.split(',') {
                let (d, v) = item.split_once('=').ok_or_else(bad)?;
                let d: usize = d.trim().parse().map_err(|_| bad())?;
                let v: u32 = v.trim().parse().map_err(|_| bad())?;
                if v == 0 || entries.insert(d, v).is_some() {
                    return Err(bad());
                }
            }
            // Depths must run 1, 2, ..., n without gaps.
            if entries.keys().copied().ne(1..=entries.len()) || entries.is_empty() {
                return Err(bad());
            }
            return Ok(KappaSpec::Table(entries.into_values().collect()));
        }
        Err(bad())
    }
}

impl TryFrom<String> for KappaSpec {
    type Error = TreeError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<KappaSpec> for String {
    fn from(k: KappaSpec) -> String {
        k.to_string()
    }
}

/// Root, bound, margin and the node sets per hop distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredTree {
    pub root: NodeId,
    pub beta: f64,
    pub margin: f64,
    /// `levels[0] == {root}`; `levels[i]` are the nodes `i` hops out.
    pub levels: Vec<BTreeSet<NodeId>>,
}

impl LayeredTree {
    pub fn depth(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(BTreeSet::len).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.levels.iter().flatten().copied()
    }

    /// Graphviz rendering with one rank per level and the `G_beta` links
    /// between consecutive levels.
    pub fn to_dot(&self, matrix: &LossMatrix) -> String {
        let mut out = format!(
            "graph \"tree_root{}_beta{}\" {{\n  rankdir=TB;\n  label=\"beta = {} dB, margin = {} dB, depth = {}\";\n",
            self.root,
            self.beta,
            self.beta,
            self.margin,
            self.depth()
        );
        for (i, level) in self.levels.iter().enumerate() {
            let ids: Vec<String> = level.iter().map(|n| format!("{n};")).collect();
            writeln!(out, "  {{ rank=same; /* level {i} */ {} }}", ids.join(" "))
                .expect("write to string");
        }
        for w in self.levels.windows(2) {
            for &child in &w[1] {
                for &parent in &w[0] {
                    if matrix
                        .symmetric_loss(parent, child)
                        .is_some_and(|l| l <= self.beta)
                    {
                        writeln!(out, "  {parent} -- {child};").expect("write to string");
                    }
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Trees together with the breadth requirement they were built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub format: String,
    pub version: u32,
    pub kappa: KappaSpec,
    pub trees: Vec<LayeredTree>,
}

impl TreeDocument {
    pub fn new(kappa: KappaSpec, trees: Vec<LayeredTree>) -> Self {
        TreeDocument {
            format: TREE_FORMAT.to_string(),
            version: 1,
            kappa,
            trees,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("trees serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let doc: TreeDocument =
            serde_json::from_str(text).map_err(|e| TreeError::Format(e.to_string()))?;
        if doc.format != TREE_FORMAT || doc.version != 1 {
            return Err(TreeError::Format(format!(
                "expected {TREE_FORMAT:?} version 1, found {:?} version {}",
                doc.format, doc.version
            )));
        }
        for t in &doc.trees {
            if t.levels.first() != Some(&BTreeSet::from([t.root])) {
                return Err(TreeError::Format(format!(
                    "tree rooted at {} does not start with its root",
                    t.root
                )));
            }
        }
        Ok(doc)
    }
}

fn check_margin(margin: f64) -> Result<(), TreeError> {
    if margin.is_finite() && margin >= 0.0 {
        Ok(())
    } else {
        Err(TreeError::InvalidMargin(margin))
    }
}

/// Breadth-first layering from `v0` over `G_beta`.
///
/// A neighbor `v` of the current frontier joins the next level unless it is
/// already placed or has a `G_{beta+margin}` neighbor two or more levels up.
/// Growth stops at the first level smaller than `kappa(level)`; that partial
/// level is dropped.
pub fn monitored_bfs(
    matrix: &LossMatrix,
    v0: NodeId,
    beta: f64,
    margin: f64,
    kappa: &KappaSpec,
) -> Result<LayeredTree, TreeError> {
    check_margin(margin)?;
    if !matrix.contains_node(v0) {
        return Err(TreeError::UnknownRoot(v0));
    }
    let g = neighborhood_graph(matrix, beta);
    let g_margin = neighborhood_graph(matrix, beta + margin);
    Ok(bfs_on(&g, &g_margin, v0, margin, kappa))
}

fn bfs_on(
    g: &BoundedGraph,
    g_margin: &BoundedGraph,
    v0: NodeId,
    margin: f64,
    kappa: &KappaSpec,
) -> LayeredTree {
    let mut levels: Vec<BTreeSet<NodeId>> = vec![BTreeSet::from([v0])];
    // level index of every placed node
    let mut placed: BTreeMap<NodeId, usize> = BTreeMap::from([(v0, 0)]);
    loop {
        let depth = levels.len() - 1;
        let mut next = BTreeSet::new();
        for &u in &levels[depth] {
            for &v in g.neighbors(u).expect("frontier node in graph") {
                if placed.contains_key(&v) || next.contains(&v) {
                    continue;
                }
                // Neighbors within beta + margin at levels 0..=depth-1 disqualify v.
                let shortcut = g_margin
                    .neighbors(v)
                    .expect("same node set")
                    .iter()
                    .any(|w| placed.get(w).is_some_and(|&lvl| lvl < depth));
                if !shortcut {
                    next.insert(v);
                }
            }
        }
        if next.len() < kappa.at(depth + 1) {
            break;
        }
        for &v in &next {
            placed.insert(v, depth + 1);
        }
        levels.push(next);
    }
    LayeredTree {
        root: v0,
        beta: g.beta(),
        margin,
        levels,
    }
}

/// Runs [`monitored_bfs`] for every grid bound and every root. Sorted deepest
/// first, then by fewer nodes, smaller bound and smaller root.
pub fn sweep_trees(
    matrix: &LossMatrix,
    kappa: &KappaSpec,
    margin: f64,
    family: &GraphFamily<'_>,
) -> Result<Vec<LayeredTree>, TreeError> {
    check_margin(margin)?;
    let roots: Vec<NodeId> = matrix.nodes().iter().copied().collect();
    let mut trees: Vec<LayeredTree> = family
        .grid
        .values()
        .into_par_iter()
        .flat_map_iter(|beta| {
            let g = neighborhood_graph(matrix, beta);
            let g_margin = neighborhood_graph(matrix, beta + margin);
            roots
                .iter()
                .map(|&v0| bfs_on(&g, &g_margin, v0, margin, kappa))
                .collect::<Vec<_>>()
        })
        .collect();
    trees.sort_by(tree_order);
    Ok(trees)
}

/// The sweep ordering: deeper, then smaller, then lower bound, then lower root.
pub fn tree_order(a: &LayeredTree, b: &LayeredTree) -> std::cmp::Ordering {
    b.depth()
        .cmp(&a.depth())
        .then(a.node_count().cmp(&b.node_count()))
        .then(a.beta.total_cmp(&b.beta))
        .then(a.root.cmp(&b.root))
}

/// The node-reduction program with the node and level behind each variable.
#[derive(Debug, Clone)]
pub struct ReductionProgram {
    pub program: BinaryProgram,
    /// `(node, level)` per variable; the root has no variable.
    pub nodes: Vec<(NodeId, usize)>,
}

/// Builds the node-reduction program:
///
/// ```text
/// minimize   sum x(u)
/// subject to sum_{u in level i} x(u) >= kappa(i)                 1 <= i <= depth
///            x(u) <= sum_{v in level i-1, v in N(u)} x(v)         u in level i
/// ```
///
/// The root is the constant 1, so for level-1 nodes adjacent to it the parent
/// row becomes `x(u) <= 1`.
pub fn build_reduction_program(
    tree: &LayeredTree,
    graph: &BoundedGraph,
    kappa: &KappaSpec,
) -> Result<ReductionProgram, TreeError> {
    let mut program = BinaryProgram::new(Sense::Minimize);
    let mut nodes = Vec::new();
    let mut var_of = BTreeMap::new();
    for (level, set) in tree.levels.iter().enumerate().skip(1) {
        for &u in set {
            let v = program.add_var(format!("n{u}"), 1);
            var_of.insert(u, v);
            nodes.push((u, level));
        }
    }
    for (level, set) in tree.levels.iter().enumerate().skip(1) {
        program.add_constraint(
            set.iter().map(|u| (var_of[u], 1)),
            Comparator::Ge,
            kappa.at(level) as i64,
        )?;
    }
    for (level, set) in tree.levels.iter().enumerate().skip(1) {
        for &u in set {
            let mut terms = vec![(var_of[&u], 1)];
            let mut constant = 0;
            for &v in &tree.levels[level - 1] {
                if !graph.has_edge(u, v) {
                    continue;
                }
                if v == tree.root {
                    constant += 1;
                } else {
                    terms.push((var_of[&v], -1));
                }
            }
            program.add_constraint(terms, Comparator::Le, constant)?;
        }
    }
    Ok(ReductionProgram { program, nodes })
}

/// Shrinks a tree to the fewest nodes that keep its depth, breadth and parent
/// links.
pub fn reduce_tree(
    tree: &LayeredTree,
    matrix: &LossMatrix,
    kappa: &KappaSpec,
) -> Result<LayeredTree, TreeError> {
    let before = check_requirements(tree, matrix, kappa);
    if !before.passed() {
        return Err(TreeError::InvalidTree(before));
    }
    let graph = neighborhood_graph(matrix, tree.beta);
    let rp = build_reduction_program(tree, &graph, kappa)?;
    let sol = ilp::solve(&rp.program)?;
    if sol.status != Status::Optimal {
        return Err(TreeError::ReductionInfeasible);
    }
    let mut levels = vec![BTreeSet::new(); tree.levels.len()];
    levels[0].insert(tree.root);
    for (&(node, level), &keep) in rp.nodes.iter().zip(&sol.assignment) {
        if keep {
            levels[level].insert(node);
        }
    }
    let reduced = LayeredTree {
        root: tree.root,
        beta: tree.beta,
        margin: tree.margin,
        levels,
    };
    let after = check_requirements(&reduced, matrix, kappa);
    if !after.passed() {
        return Err(TreeError::InvalidTree(after));
    }
    Ok(reduced)
}

/// One broken requirement.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Requirement 2: level 0 must be exactly the root.
    RootLevel {
        expected: NodeId,
        found: Vec<NodeId>,
    },
    /// A node listed at more than one level.
    Overlap { node: NodeId, levels: Vec<usize> },
    /// Requirement 1: no link within the bound to the previous level.
    /// `closest` is the best available link to that level, if any was measured
    /// in both directions.
    Orphan {
        node: NodeId,
        level: usize,
        closest: Option<(NodeId, f64)>,
    },
    /// Requirement 3: too few nodes connected to the root through the levels.
    Breadth {
        level: usize,
        connected: usize,
        required: usize,
    },
    /// Requirement 4: a link within `beta + margin` skipping at least one level.
    Shortcut {
        node: NodeId,
        level: usize,
        other: NodeId,
        other_level: usize,
        loss: f64,
    },
}

impl Violation {
    pub fn requirement(&self) -> u8 {
        match self {
            Violation::Orphan { .. } => 1,
            Violation::RootLevel { .. } | Violation::Overlap { .. } => 2,
            Violation::Breadth { .. } => 3,
            Violation::Shortcut { .. } => 4,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "requirement {}: ", self.requirement())?;
        match self {
            Violation::RootLevel { expected, found } => {
                write!(f, "level 0 is {found:?}, expected [{expected}]")
            }
            Violation::Overlap { node, levels } => {
                write!(f, "node {node} appears at levels {levels:?}")
            }
            Violation::Orphan {
                node,
                level,
                closest,
            } => {
                write!(
                    f,
                    "node {node} at level {level} has no link to level {}",
                    level - 1
                )?;
                match closest {
                    Some((p, loss)) => write!(f, " (closest {p} -- {node} at {loss} dB)"),
                    None => Ok(()),
                }
            }
            Violation::Breadth {
                level,
                connected,
                required,
            } => write!(
                f,
                "level {level} has {connected} connected nodes, requires {required}"
            ),
            Violation::Shortcut {
                node,
                level,
                other,
                other_level,
                loss,
            } => write!(
                f,
                "link {other} -- {node} at {loss} dB joins level {other_level} to level {level}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RequirementReport {
    pub violations: Vec<Violation>,
}

impl RequirementReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for RequirementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return f.write_str("all requirements hold");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks all four tree requirements directly against matrix losses.
pub fn check_requirements(
    tree: &LayeredTree,
    matrix: &LossMatrix,
    kappa: &KappaSpec,
) -> RequirementReport {
    let mut violations = Vec::new();
    let beta = tree.beta;
    let outer = tree.beta + tree.margin;
    let link = |a: NodeId, b: NodeId| matrix.symmetric_loss(a, b);

    let level0: Vec<NodeId> = tree.levels.first().into_iter().flatten().copied().collect();
    if level0 != [tree.root] {
        violations.push(Violation::RootLevel {
            expected: tree.root,
            found: level0,
        });
    }

    let mut seen: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, level) in tree.levels.iter().enumerate() {
        for &n in level {
            seen.entry(n).or_default().push(i);
        }
    }
    for (node, levels) in seen {
        if levels.len() > 1 {
            violations.push(Violation::Overlap { node, levels });
        }
    }

    let mut connected: BTreeSet<NodeId> = BTreeSet::from([tree.root]);
    for i in 1..tree.levels.len() {
        let mut reached = 0;
        for &v in &tree.levels[i] {
            let parents: Vec<(NodeId, f64)> = tree.levels[i - 1]
                .iter()
                .filter_map(|&p| link(p, v).map(|l| (p, l)))
                .collect();
            let linked: Vec<NodeId> = parents
                .iter()
                .filter(|(_, l)| *l <= beta)
                .map(|(p, _)| *p)
                .collect();
            if linked.is_empty() {
                let closest = parents
                    .iter()
                    .copied()
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                violations.push(Violation::Orphan {
                    node: v,
                    level: i,
                    closest,
                });
            }
            if linked.iter().any(|p| connected.contains(p)) {
                connected.insert(v);
                reached += 1;
            }
        }
        let required = kappa.at(i);
        if reached < required {
            violations.push(Violation::Breadth {
                level: i,
                connected: reached,
                required,
            });
        }
    }

    for (i, level) in tree.levels.iter().enumerate().skip(2) {
        for &v in level {
            for (j, upper) in tree.levels[..i - 1].iter().enumerate() {
                for &w in upper {
                    if let Some(loss) = link(v, w).filter(|&l| l <= outer) {
                        violations.push(Violation::Shortcut {
                            node: v,
                            level: i,
                            other: w,
                            other_level: j,
                            loss,
                        });
                    }
                }
            }
        }
    }
    RequirementReport { violations }
}

/// Re-checks a stored tree against a fresh measurement campaign.
pub fn revalidate(
    tree: &LayeredTree,
    fresh: &LossMatrix,
    kappa: &KappaSpec,
) -> Result<RequirementReport, TreeError> {
    let missing: Vec<NodeId> = tree.nodes().filter(|n| !fresh.contains_node(*n)).collect();
    if !missing.is_empty() {
        return Err(TreeError::MissingNodes(missing));
    }
    Ok(check_requirements(tree, fresh, kappa))
}
