//! Fixtures and brute-force oracles shared by the integration tests. The
//! oracles only read raw matrix entries and program rows; they never call the
//! library's own graph, solver or checker code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use multihop_topo::ilp::{BinaryProgram, Comparator, Sense};
use multihop_topo::synth::{generate, random_positions, ModelParams, SynthScenario};
use multihop_topo::{KappaSpec, LayeredTree, LossMatrix, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` nodes with independent uniform losses in `lo..hi` per direction; about
/// `missing` of the directed entries are left out.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: u32, lo: f64, hi: f64, missing: f64) -> LossMatrix {
    let mut m = LossMatrix::new(Some(26));
    for a in 1..=n {
        m.add_node(NodeId(a));
        for b in 1..=n {
            if a != b && !rng.gen_bool(missing) {
                let loss = rng.gen_range(lo..hi).round();
                m.insert_loss(NodeId(a), NodeId(b), loss).unwrap();
            }
        }
    }
    m
}

/// Log-distance matrix over random positions in a `side x side` square.
pub fn geometric_matrix(seed: u64, n: u32, side: f64, sigma: f64) -> LossMatrix {
    generate(&SynthScenario {
        positions: random_positions(n, side, side, seed),
        params: ModelParams {
            reference_loss: 40.0,
            path_loss_exponent: 3.0,
            shadowing_sigma: sigma,
            asymmetry_sigma: sigma / 3.0,
            seed,
        },
    })
    .unwrap()
}

pub fn node_ids(m: &LossMatrix) -> Vec<NodeId> {
    m.nodes().iter().copied().collect()
}

/// Edge of `G_beta`: both directions measured and within the bound.
pub fn oracle_edge(m: &LossMatrix, a: NodeId, b: NodeId, beta: f64) -> bool {
    a != b
        && matches!(
            (m.loss(a, b), m.loss(b, a)),
            (Some(x), Some(y)) if x <= beta && y <= beta
        )
}

/// Sets of nodes linked by a path, via transitive closure of the adjacency
/// matrix.
pub fn oracle_components(m: &LossMatrix, beta: f64) -> BTreeSet<BTreeSet<NodeId>> {
    let ids = node_ids(m);
    let n = ids.len();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
        for j in 0..n {
            if oracle_edge(m, ids[i], ids[j], beta) {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0..n)
        .map(|i| (0..n).filter(|&j| reach[i][j]).map(|j| ids[j]).collect())
        .collect()
}

/// Random binary program; coefficients and right-hand sides are small so a
/// fair share of instances are feasible.
pub fn random_program(rng: &mut ChaCha8Rng, vars: usize) -> BinaryProgram {
    let sense = if rng.gen_bool(0.5) {
        Sense::Maximize
    } else {
        Sense::Minimize
    };
    let mut p = BinaryProgram::new(sense);
    let v: Vec<_> = (0..vars)
        .map(|i| p.add_var(format!("x{i}"), rng.gen_range(-5..=9)))
        .collect();
    for _ in 0..rng.gen_range(1..=vars.max(2)) {
        let k = rng.gen_range(1..=vars);
        let terms: Vec<_> = (0..k)
            .map(|_| (v[rng.gen_range(0..vars)], rng.gen_range(-4..=6)))
            .collect();
        let cmp = match rng.gen_range(0..7) {
            0..=2 => Comparator::Le,
            3..=5 => Comparator::Ge,
            _ => Comparator::Eq,
        };
        p.add_constraint(terms, cmp, rng.gen_range(-3..=10))
            .unwrap();
    }
    p
}

/// Best objective over every assignment, or `None` if none is feasible.
pub fn oracle_ilp(p: &BinaryProgram) -> Option<i64> {
    let n = p.num_vars();
    let mut best: Option<i64> = None;
    for mask in 0u64..(1 << n) {
        let x = |i: usize| i64::from((mask >> i) & 1 == 1);
        let ok = p.constraints().iter().all(|c| {
            let lhs: i64 = c.terms.iter().map(|&(v, a)| a * x(v.0)).sum();
            match c.cmp {
                Comparator::Le => lhs <= c.rhs,
                Comparator::Ge => lhs >= c.rhs,
                Comparator::Eq => lhs == c.rhs,
            }
        });
        if !ok {
            continue;
        }
        let obj: i64 = (0..n)
            .map(|i| p.objective_coef(multihop_topo::ilp::Var(i)) * x(i))
            .sum();
        best = Some(match (best, p.sense()) {
            (None, _) => obj,
            (Some(b), Sense::Maximize) => b.max(obj),
            (Some(b), Sense::Minimize) => b.min(obj),
        });
    }
    best
}

/// Number of members of `set` adjacent to `u` in `G_beta`.
pub fn count_neighbors(m: &LossMatrix, beta: f64, u: NodeId, set: &BTreeSet<NodeId>) -> usize {
    set.iter().filter(|&&v| oracle_edge(m, u, v, beta)).count()
}

/// Every selected node has exactly `c` selected neighbors.
pub fn is_c_regular(m: &LossMatrix, beta: f64, c: usize, set: &BTreeSet<NodeId>) -> bool {
    set.iter().all(|&u| count_neighbors(m, beta, u, set) == c)
}

/// Size of the largest `c`-regular induced subgraph of `G_beta`, by subsets.
pub fn oracle_max_regular(m: &LossMatrix, beta: f64, c: usize) -> usize {
    let ids = node_ids(m);
    let n = ids.len();
    assert!(n <= 20);
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let set: BTreeSet<NodeId> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ids[i])
            .collect();
        if is_c_regular(m, beta, c, &set) {
            best = size;
        }
    }
    best
}

/// Problems with a layered tree, checked straight from matrix entries.
pub fn oracle_tree_problems(t: &LayeredTree, m: &LossMatrix, kappa: &KappaSpec) -> Vec<String> {
    let mut out = Vec::new();
    if t.levels.first() != Some(&BTreeSet::from([t.root])) {
        out.push("level 0 is not the root alone".to_string());
    }
    let mut level_of = BTreeMap::new();
    for (i, level) in t.levels.iter().enumerate() {
        for &v in level {
            if level_of.insert(v, i).is_some() {
                out.push(format!("{v} placed twice"));
            }
        }
    }
    for (i, level) in t.levels.iter().enumerate().skip(1) {
        if level.len() < kappa.at(i) {
            out.push(format!("level {i} holds {} nodes", level.len()));
        }
        for &v in level {
            if !t.levels[i - 1]
                .iter()
                .any(|&p| oracle_edge(m, p, v, t.beta))
            {
                out.push(format!("{v} has no parent"));
            }
        }
    }
    for (&v, &i) in &level_of {
        for (&w, &j) in &level_of {
            if j + 2 <= i && oracle_edge(m, v, w, t.beta + t.margin) {
                out.push(format!("shortcut {w} (level {j}) -- {v} (level {i})"));
            }
        }
    }
    out
}

/// Fewest nodes (root included) of any sub-tree keeping every level at
/// `kappa` with a parent link for each kept node.
pub fn oracle_min_reduction(t: &LayeredTree, m: &LossMatrix, kappa: &KappaSpec) -> Option<usize> {
    let vars: Vec<(NodeId, usize)> = t
        .levels
        .iter()
        .enumerate()
        .skip(1)
        .flat_map(|(i, l)| l.iter().map(move |&v| (v, i)))
        .collect();
    let n = vars.len();
    assert!(n <= 20);
    let mut best: Option<usize> = None;
    for mask in 0u32..(1 << n) {
        let kept: BTreeSet<NodeId> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| vars[i].0)
            .chain([t.root])
            .collect();
        let breadth_ok = (1..t.levels.len())
            .all(|i| t.levels[i].iter().filter(|v| kept.contains(v)).count() >= kappa.at(i));
        let parents_ok = (0..n).filter(|i| mask >> i & 1 == 1).all(|i| {
            let (v, lvl) = vars[i];
            t.levels[lvl - 1]
                .iter()
                .any(|p| kept.contains(p) && oracle_edge(m, *p, v, t.beta))
        });
        if breadth_ok && parents_ok {
            let size = kept.len();
            best = Some(best.map_or(size, |b| b.min(size)));
        }
    }
    best
}

/// `n` nodes on a line: neighbors at `on`, all other pairs at `off`.
pub fn chain(n: u32, on: f64, off: f64) -> LossMatrix {
    let mut m = LossMatrix::new(None);
    for a in 1..=n {
        for b in 1..=n {
            if a != b {
                let l = if a.abs_diff(b) == 1 { on } else { off };
                m.insert_loss(NodeId(a), NodeId(b), l).unwrap();
            }
        }
    }
    m
}

/// Every pair at `loss`.
pub fn mesh(n: u32, loss: f64) -> LossMatrix {
    let mut m = LossMatrix::new(None);
    for a in 1..=n {
        for b in 1..=n {
            if a != b {
                m.insert_loss(NodeId(a), NodeId(b), loss).unwrap();
            }
        }
    }
    m
}

/// Symmetric matrix from an edge list; unlisted pairs get `off`.
pub fn from_pairs(n: u32, pairs: &[(u32, u32, f64)], off: f64) -> LossMatrix {
    let mut m = mesh(n, off);
    for &(a, b, l) in pairs {
        m.insert_loss(NodeId(a), NodeId(b), l).unwrap();
        m.insert_loss(NodeId(b), NodeId(a), l).unwrap();
    }
    m
}

pub fn ids(v: &[u32]) -> BTreeSet<NodeId> {
    v.iter().map(|&i| NodeId(i)).collect()
}
