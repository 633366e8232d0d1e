use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use multihop_topo::degree::{
    largest_component_selection, regularity_violations, select_constant_degree, SelectionDocument,
};
use multihop_topo::graph::{
    connected_components, degree_distribution, monotonicity_csv, monotonicity_report,
    neighborhood_graph, BetaGrid, GraphFamily,
};
use multihop_topo::ingest::{
    build_loss_matrix, distance_loss_correlation, parse_campaign_log, warn_low_counts, Aggregator,
    LossMatrix, NodePositions,
};
use multihop_topo::radio::{settings_for_bound, TransceiverProfile};
use multihop_topo::synth::ScenarioFile;
use multihop_topo::tree::{
    monitored_bfs, reduce_tree, revalidate, sweep_trees, tree_order, KappaSpec, LayeredTree,
    TreeDocument,
};
use multihop_topo::NodeId;
use serde::Serialize;

use crate::manifest::Run;
use crate::{Cli, Command, GlobalOpts, EXIT_VERIFY};

pub fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest {
            logs,
            aggregator,
            min_count,
        } => ingest(g, logs, aggregator, *min_count),
        Command::Analyze {
            matrix,
            positions,
            correlation,
        } => analyze(g, matrix, positions.as_deref(), *correlation),
        Command::Degree {
            matrix,
            c,
            positions,
        } => degree(g, matrix, *c, positions.as_deref()),
        Command::Tree {
            matrix,
            reduce,
            root,
            beta,
            top,
        } => tree(g, matrix, *reduce, *root, *beta, *top),
        Command::Settings { beta } => settings(g, *beta),
        Command::Verify {
            topology,
            fresh,
            index,
        } => verify(g, topology, fresh, *index),
        Command::SweepReport { matrices } => sweep_report(g, matrices),
        Command::Synth { scenario } => synth(g, scenario),
    }
}

fn grid(g: &GlobalOpts) -> Result<BetaGrid> {
    Ok(BetaGrid::new(g.beta_min, g.beta_max, g.beta_step)?)
}

fn kappa(g: &GlobalOpts) -> Result<KappaSpec> {
    Ok(g.kappa.parse()?)
}

fn load_matrix(run: &mut Run, path: &Path) -> Result<LossMatrix> {
    let text = run.read(path)?;
    LossMatrix::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_positions(run: &mut Run, path: &Path) -> Result<NodePositions> {
    let text = run.read(path)?;
    NodePositions::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ingest(
    g: &GlobalOpts,
    logs: &[std::path::PathBuf],
    aggregator: &str,
    min_count: u32,
) -> Result<u8> {
    let aggregator: Aggregator = aggregator.parse()?;
    let mut run = Run::new("ingest", g)?;
    let mut samples = Vec::new();
    for path in logs {
        let text = run.read(path)?;
        let parsed = parse_campaign_log(&text);
        eprintln!(
            "{}: {} samples, {} rejected",
            path.display(),
            parsed.samples.len(),
            parsed.rejections.len()
        );
        for r in &parsed.rejections {
            eprintln!("  line {}: {}", r.line, r.reason);
        }
        samples.extend(parsed.samples);
    }
    let matrix = build_loss_matrix(&samples, aggregator)?;
    if matrix.is_empty() {
        eprintln!("warning: no valid samples, matrix is empty");
    }
    let low = warn_low_counts(&matrix, min_count);
    if !low.is_empty() {
        eprintln!(
            "warning: {} directed links have fewer than {min_count} samples",
            low.len()
        );
        for l in low.iter().take(20) {
            eprintln!("  {} -> {}: {}", l.tx, l.rx, l.count);
        }
    }
    let path = run.write("matrix.json", &matrix.to_json())?;
    println!(
        "{} nodes, {} directed entries -> {}",
        matrix.nodes().len(),
        matrix.len(),
        path.display()
    );
    run.finish()?;
    Ok(0)
}

#[derive(Serialize)]
struct Analysis {
    nodes: usize,
    entries: usize,
    first_edge_beta: Option<f64>,
    full_mesh_beta: Option<f64>,
    largest_component_at_max: usize,
    correlation: Option<f64>,
}

fn analyze(
    g: &GlobalOpts,
    matrix_path: &Path,
    positions: Option<&Path>,
    correlation: bool,
) -> Result<u8> {
    if correlation && positions.is_none() {
        bail!("--correlation needs --positions");
    }
    let grid = grid(g)?;
    let mut run = Run::new("analyze", g)?;
    let matrix = load_matrix(&mut run, matrix_path)?;
    let positions = positions.map(|p| load_positions(&mut run, p)).transpose()?;
    let family = GraphFamily::new(&matrix, grid)?;
    let dist = degree_distribution(&family);
    let deltas = monotonicity_report(&family);
    if deltas.iter().any(|d| d.removed > 0) {
        bail!("edge set shrank along the sweep; matrix is inconsistent");
    }
    let n = matrix.nodes().len();
    let first_edge_beta = dist
        .rows
        .iter()
        .find(|(_, d)| d.iter().any(|&x| x > 0))
        .map(|(b, _)| *b);
    let full_mesh_beta = dist
        .rows
        .iter()
        .find(|(_, d)| n > 1 && d.iter().all(|&x| x == n - 1))
        .map(|(b, _)| *b);
    let correlation = if correlation {
        let p = positions.as_ref().expect("checked above");
        Some(distance_loss_correlation(&matrix, p)?)
    } else {
        None
    };
    let analysis = Analysis {
        nodes: n,
        entries: matrix.len(),
        first_edge_beta,
        full_mesh_beta,
        largest_component_at_max: connected_components(&neighborhood_graph(&matrix, grid.max))
            .first()
            .map_or(0, BTreeSet::len),
        correlation,
    };
    run.write("degree_distribution.csv", &dist.to_csv())?;
    run.write("monotonicity.csv", &monotonicity_csv(&deltas))?;
    let mut text = serde_json::to_string_pretty(&analysis)?;
    text.push('\n');
    run.write("analysis.json", &text)?;
    let fmt_beta = |b: Option<f64>| b.map_or("none".to_string(), |b| format!("{b} dB"));
    println!("nodes: {n}, directed entries: {}", matrix.len());
    println!("first edge at beta: {}", fmt_beta(first_edge_beta));
    println!("fully meshed from beta: {}", fmt_beta(full_mesh_beta));
    if let Some(r) = correlation {
        println!("distance/loss correlation: {r:.4}");
    }
    run.finish()?;
    Ok(0)
}

fn degree(g: &GlobalOpts, matrix_path: &Path, c: usize, positions: Option<&Path>) -> Result<u8> {
    let grid = grid(g)?;
    let mut run = Run::new("degree", g)?;
    let matrix = load_matrix(&mut run, matrix_path)?;
    let positions = positions.map(|p| load_positions(&mut run, p)).transpose()?;
    let family = GraphFamily::new(&matrix, grid)?;
    let selections = select_constant_degree(&matrix, c, &family)?;
    let best = if selections.is_empty() {
        None
    } else {
        Some(largest_component_selection(&selections)?)
    };
    let doc = SelectionDocument::new(c, best.clone(), selections);
    run.write("selection.json", &doc.to_json())?;
    match &best {
        None => println!("no nonempty selection at any beta for c = {c}"),
        Some(best) => {
            run.write("selection.dot", &best.to_dot(&matrix, positions.as_ref()))?;
            println!(
                "{} bounds with a nonempty {c}-regular selection",
                doc.selections.len()
            );
            println!(
                "largest connected component: {} nodes at beta {} dB: {}",
                best.objective,
                best.beta,
                join(&best.selected)
            );
        }
    }
    run.finish()?;
    Ok(0)
}

fn join(nodes: &BTreeSet<NodeId>) -> String {
    nodes
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

fn tree(
    g: &GlobalOpts,
    matrix_path: &Path,
    reduce: bool,
    root: Option<u32>,
    beta: Option<f64>,
    top: usize,
) -> Result<u8> {
    let kappa = kappa(g)?;
    let mut run = Run::new("tree", g)?;
    let matrix = load_matrix(&mut run, matrix_path)?;
    let grid = match beta {
        Some(b) => BetaGrid::new(b, b, 1.0)?,
        None => grid(g)?,
    };
    let mut trees: Vec<LayeredTree> = match root {
        Some(r) => {
            let mut v = grid
                .values()
                .into_iter()
                .map(|b| monitored_bfs(&matrix, NodeId(r), b, g.margin, &kappa))
                .collect::<Result<Vec<_>, _>>()?;
            v.sort_by(tree_order);
            v
        }
        None => sweep_trees(&matrix, &kappa, g.margin, &GraphFamily::new(&matrix, grid)?)?,
    };
    trees.truncate(top.max(1));
    if reduce {
        trees = trees
            .iter()
            .map(|t| reduce_tree(t, &matrix, &kappa))
            .collect::<Result<_, _>>()?;
    }
    let doc = TreeDocument::new(kappa, trees);
    run.write("trees.json", &doc.to_json())?;
    if let Some(best) = doc.trees.first() {
        run.write("tree.dot", &best.to_dot(&matrix))?;
        println!(
            "best: root {} at beta {} dB, depth {}, {} nodes",
            best.root,
            best.beta,
            best.depth(),
            best.node_count()
        );
        for (i, level) in best.levels.iter().enumerate() {
            println!("  level {i}: {}", join(level));
        }
    }
    run.finish()?;
    Ok(0)
}

fn load_profile(g: &GlobalOpts) -> Result<TransceiverProfile> {
    match &g.profile {
        None => Ok(TransceiverProfile::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(TransceiverProfile::from_json(&text)?)
        }
    }
}

fn settings(g: &GlobalOpts, beta: i32) -> Result<u8> {
    let profile = load_profile(g)?;
    let list = settings_for_bound(beta, &profile, g.guard)?;
    println!(
        "profile {}, beta {beta} dB, guard {} dB",
        profile.name, g.guard
    );
    for s in list {
        let guarded = match s.guarded {
            Some(v) => v.to_string(),
            None => "none".to_string(),
        };
        let note = if s.saturated {
            "  [guard saturated]"
        } else {
            ""
        };
        println!("{}  guarded {guarded}{note}", s.base);
    }
    Ok(0)
}

fn verify(g: &GlobalOpts, topology: &Path, fresh_path: &Path, index: usize) -> Result<u8> {
    let mut run = Run::new("verify", g)?;
    let text = run.read(topology)?;
    let fresh = load_matrix(&mut run, fresh_path)?;
    let mut lines = String::new();
    let passed = if let Ok(doc) = TreeDocument::from_json(&text) {
        let Some(tree) = doc.trees.get(index) else {
            bail!(
                "{} holds {} trees, no index {index}",
                topology.display(),
                doc.trees.len()
            );
        };
        let report = revalidate(tree, &fresh, &doc.kappa)?;
        writeln!(
            lines,
            "tree rooted at {}, beta {} dB, margin {} dB, depth {}",
            tree.root,
            tree.beta,
            tree.margin,
            tree.depth()
        )?;
        write!(lines, "{report}")?;
        report.passed()
    } else if let Ok(doc) = SelectionDocument::from_json(&text) {
        let Some(sel) = doc.best.as_ref() else {
            bail!("{} holds no selection", topology.display());
        };
        let missing: Vec<NodeId> = sel
            .selected
            .iter()
            .filter(|n| !fresh.contains_node(**n))
            .copied()
            .collect();
        if !missing.is_empty() {
            bail!("fresh matrix lacks selected nodes {missing:?}");
        }
        let graph = neighborhood_graph(&fresh, sel.beta);
        let violations = regularity_violations(&graph, &sel.selected, sel.c);
        let components = connected_components(&graph.induced(&sel.selected)).len();
        writeln!(
            lines,
            "selection of {} nodes, beta {} dB, c = {}",
            sel.objective, sel.beta, sel.c
        )?;
        for (node, deg) in &violations {
            writeln!(
                lines,
                "node {node} has {deg} selected neighbors, expected {}",
                sel.c
            )?;
        }
        if components != sel.components.len() {
            writeln!(
                lines,
                "induced subgraph has {components} components, expected {}",
                sel.components.len()
            )?;
        }
        if violations.is_empty() && components == sel.components.len() {
            lines.push_str("all requirements hold");
        }
        violations.is_empty() && components == sel.components.len()
    } else {
        bail!(
            "{} is neither a tree nor a selection file",
            topology.display()
        );
    };
    let verdict = if passed { "PASS" } else { "FAIL" };
    let out = format!("{}\n{verdict}\n", lines.trim_end());
    print!("{out}");
    run.write("verify.txt", &out)?;
    run.finish()?;
    Ok(if passed { 0 } else { EXIT_VERIFY })
}

fn sweep_report(g: &GlobalOpts, matrices: &[std::path::PathBuf]) -> Result<u8> {
    let kappa = kappa(g)?;
    let grid = grid(g)?;
    let mut run = Run::new("sweep-report", g)?;
    let mut csv = String::from("testbed,nodes,max_depth,beta_from,beta_to,note\n");
    println!(
        "{:<20} {:>6} {:>9} {:>14}",
        "testbed", "nodes", "max depth", "beta range"
    );
    for path in matrices {
        let matrix = load_matrix(&mut run, path)?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        let trees = sweep_trees(&matrix, &kappa, g.margin, &GraphFamily::new(&matrix, grid)?)?;
        let max_depth = trees.first().map_or(0, LayeredTree::depth);
        let betas: Vec<f64> = trees
            .iter()
            .filter(|t| t.depth() == max_depth)
            .map(|t| t.beta)
            .collect();
        let lo = betas.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let note = if max_depth < 2 { "no multi-hop" } else { "" };
        writeln!(
            csv,
            "{name},{},{max_depth},{lo},{hi},{note}",
            matrix.nodes().len()
        )?;
        println!(
            "{name:<20} {:>6} {max_depth:>9} {:>14}  {note}",
            matrix.nodes().len(),
            format!("{lo}-{hi}")
        );
    }
    run.write("sweep_report.csv", &csv)?;
    run.finish()?;
    Ok(0)
}

fn synth(g: &GlobalOpts, scenario: &Path) -> Result<u8> {
    let mut run = Run::new("synth", g)?;
    let text = run.read(scenario)?;
    let mut file = ScenarioFile::from_json(&text)?;
    if let Some(seed) = g.seed {
        file.params.seed = seed;
    }
    let (matrix, positions) = file.realize()?;
    run.write("matrix.json", &matrix.to_json())?;
    if let Some(p) = positions {
        run.write("positions.json", &p.to_json())?;
    }
    println!(
        "{} nodes, {} directed entries",
        matrix.nodes().len(),
        matrix.len()
    );
    run.finish()?;
    Ok(0)
}
