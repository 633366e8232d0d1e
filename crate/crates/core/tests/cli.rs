//! End-to-end runs of the `multihop-topo` binary.

mod common;

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use common::*;
use multihop_topo::degree::SelectionDocument;
use multihop_topo::graph::{connected_components, neighborhood_graph};
use multihop_topo::ingest::NodePositions;
use multihop_topo::tree::TreeDocument;
use multihop_topo::{LossMatrix, NodeId};
use tempfile::TempDir;

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn put(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn put_matrix(&self, name: &str, m: &LossMatrix) -> PathBuf {
        self.put(name, &m.to_json())
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_multihop-topo"))
            .args(args)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn log_text(channel: u8, pairs: &[(u32, u32, f64)], repeats: usize) -> String {
    let mut s = String::new();
    let mut seq = 0;
    for _ in 0..repeats {
        for &(tx, rx, loss) in pairs {
            s.push_str(&format!("{tx} {rx} 0 {} {channel} {seq}\n", -loss));
            seq += 1;
        }
    }
    s
}

#[test]
fn ingest_is_reproducible_and_reports_rejections() {
    let w = Work::new();
    let mut text = log_text(26, &[(1, 2, 60.0), (2, 1, 64.0), (1, 3, 70.0)], 3);
    text.push_str("garbage line\n1 1 0 -50 26 99\n");
    w.put("a.log", &text);
    let first = w.run(&["ingest", "a.log", "--out", "one"]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    assert!(stderr(&first).contains("2 rejected"));
    assert!(stderr(&first).contains("tx equals rx"));
    assert!(stderr(&first).contains("fewer than 250 samples"));
    let again = w.run(&["ingest", "a.log", "--out", "two"]);
    assert_eq!(code(&again), 0);
    assert_eq!(w.read("one/matrix.json"), w.read("two/matrix.json"));
    let m = LossMatrix::from_json(&w.read("one/matrix.json")).unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(m.loss(NodeId(1), NodeId(2)), Some(60.0));
    assert!(w.read("one/manifest.json").contains("\"sha256\""));
}

#[test]
fn ingest_rejects_mixed_channels() {
    let w = Work::new();
    w.put("a.log", &log_text(11, &[(1, 2, 60.0)], 1));
    w.put("b.log", &log_text(26, &[(2, 1, 60.0)], 1));
    let o = w.run(&["ingest", "a.log", "b.log", "--out", "x"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("11") && err.contains("26"), "{err}");
}

#[test]
fn empty_log_gives_empty_matrix() {
    let w = Work::new();
    w.put("empty.log", "");
    let o = w.run(&["ingest", "empty.log", "--out", "x"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("empty"));
    assert!(LossMatrix::from_json(&w.read("x/matrix.json"))
        .unwrap()
        .is_empty());
}

#[test]
fn analyze_chain_progression() {
    let w = Work::new();
    w.put_matrix("chain.json", &chain(4, 45.0, 90.0));
    let o = w.run(&["analyze", "chain.json", "--out", "a"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = w.read("a/degree_distribution.csv");
    let counts = |beta: u32, degree: usize| -> usize {
        csv.lines()
            .filter_map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[0] == beta.to_string() && f[1] == degree.to_string())
                    .then(|| f[2].parse::<usize>().unwrap())
            })
            .sum()
    };
    assert_eq!(counts(44, 0), 4);
    assert_eq!((counts(45, 1), counts(45, 2)), (2, 2));
    assert_eq!(counts(90, 3), 4);
    assert!(w
        .read("a/monotonicity.csv")
        .starts_with("beta_from,beta_to,added,removed"));
}

#[test]
fn analyze_correlation_needs_positions() {
    let w = Work::new();
    w.put_matrix("m.json", &chain(3, 45.0, 90.0));
    let o = w.run(&["analyze", "m.json", "--correlation", "--out", "a"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--positions"));
}

#[test]
fn synth_then_correlation() {
    let w = Work::new();
    w.put(
        "grid.json",
        r#"{"layout":{"grid":{"rows":5,"cols":5,"spacing":1}},"params":{}}"#,
    );
    let o = w.run(&["synth", "grid.json", "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = w.run(&[
        "analyze",
        "s/matrix.json",
        "--positions",
        "s/positions.json",
        "--correlation",
        "--out",
        "a",
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("correlation: 0.9727"), "{}", stdout(&o));
    NodePositions::from_json(&w.read("s/positions.json")).unwrap();
}

#[test]
fn synth_closed_form_and_seed_override() {
    let w = Work::new();
    w.put(
        "two.json",
        r#"{"layout":{"positions":[{"node":1,"x":0,"y":0,"z":0},{"node":2,"x":10,"y":0,"z":0}]}}"#,
    );
    assert_eq!(code(&w.run(&["synth", "two.json", "--out", "s"])), 0);
    let m = LossMatrix::from_json(&w.read("s/matrix.json")).unwrap();
    assert_eq!(m.loss(NodeId(1), NodeId(2)), Some(60.0));
    assert_eq!(m.loss(NodeId(2), NodeId(1)), Some(60.0));

    w.put(
        "noisy.json",
        r#"{"layout":{"grid":{"rows":3,"cols":4,"spacing":2}},"params":{"shadowing_sigma":6,"seed":1}}"#,
    );
    for (dir, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        assert_eq!(
            code(&w.run(&["synth", "noisy.json", "--seed", seed, "--out", dir])),
            0
        );
    }
    assert_eq!(w.read("a/matrix.json"), w.read("b/matrix.json"));
    assert_ne!(w.read("a/matrix.json"), w.read("c/matrix.json"));
}

#[test]
fn degree_on_a_four_cycle() {
    let w = Work::new();
    let cycle = from_pairs(
        4,
        &[(1, 2, 40.0), (2, 3, 40.0), (3, 4, 40.0), (4, 1, 40.0)],
        90.0,
    );
    w.put_matrix("cycle.json", &cycle);
    let o = w.run(&["degree", "cycle.json", "-c", "2", "--out", "d"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = SelectionDocument::from_json(&w.read("d/selection.json")).unwrap();
    let best = doc.best.unwrap();
    assert_eq!(best.selected, ids(&[1, 2, 3, 4]));
    assert_eq!(best.beta, 40.0);
    assert!(w.read("d/selection.dot").starts_with("graph"));

    let o = w.run(&["degree", "cycle.json", "-c", "99", "--out", "e"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("no nonempty selection at any beta"));
}

#[test]
fn degree_output_passes_independent_recount() {
    let w = Work::new();
    let m = random_matrix(&mut rng(77), 12, 35.0, 90.0, 0.05);
    w.put_matrix("r.json", &m);
    let o = w.run(&[
        "degree",
        "r.json",
        "-c",
        "2",
        "--beta-min",
        "40",
        "--beta-max",
        "85",
        "--out",
        "d",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = SelectionDocument::from_json(&w.read("d/selection.json")).unwrap();
    assert!(!doc.selections.is_empty());
    for s in doc.selections.iter().chain(doc.best.as_ref()) {
        assert!(is_c_regular(&m, s.beta, 2, &s.selected), "beta {}", s.beta);
    }
    let best = doc.best.unwrap();
    let g = neighborhood_graph(&m, best.beta).induced(&best.selected);
    assert_eq!(connected_components(&g).len(), 1);
}

#[test]
fn tree_commands_on_chain_and_bushy_fixtures() {
    let w = Work::new();
    w.put_matrix("chain.json", &chain(7, 45.0, 90.0));
    let o = w.run(&["tree", "chain.json", "--kappa", "const:1", "--out", "t"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let doc = TreeDocument::from_json(&w.read("t/trees.json")).unwrap();
    let best = &doc.trees[0];
    assert_eq!(best.depth(), 6);
    assert!(best.root == NodeId(1) || best.root == NodeId(7));
    assert!(best.levels.iter().all(|l| l.len() == 1));
    assert!(w.read("t/tree.dot").contains("rank=same"));

    let o = w.run(&[
        "tree",
        "chain.json",
        "--kappa",
        "const:1",
        "--root",
        "4",
        "--beta",
        "45",
        "--out",
        "mid",
    ]);
    assert_eq!(code(&o), 0);
    let mid = TreeDocument::from_json(&w.read("mid/trees.json")).unwrap();
    assert!(mid.trees[0].depth() < best.depth());

    let pairs = [
        (1, 2, 40.0),
        (1, 3, 40.0),
        (1, 4, 40.0),
        (2, 5, 40.0),
        (3, 5, 40.0),
        (3, 6, 40.0),
        (4, 7, 40.0),
        (5, 8, 40.0),
        (6, 8, 40.0),
        (6, 9, 40.0),
        (7, 10, 40.0),
    ];
    w.put_matrix("bushy.json", &from_pairs(10, &pairs, 90.0));
    let common_args = [
        "--kappa", "const:1", "--margin", "0", "--root", "1", "--beta", "50",
    ];
    let full = w.run(&[&["tree", "bushy.json", "--out", "full"][..], &common_args].concat());
    let reduced = w.run(
        &[
            &["tree", "bushy.json", "--reduce", "--out", "red"][..],
            &common_args,
        ]
        .concat(),
    );
    assert_eq!(
        (code(&full), code(&reduced)),
        (0, 0),
        "{}",
        stderr(&reduced)
    );
    let full = &TreeDocument::from_json(&w.read("full/trees.json"))
        .unwrap()
        .trees[0];
    let red = &TreeDocument::from_json(&w.read("red/trees.json"))
        .unwrap()
        .trees[0];
    assert_eq!(full.node_count(), 10);
    assert_eq!(red.node_count(), 4);
    assert_eq!(red.depth(), full.depth());
}

#[test]
fn settings_output_and_errors() {
    let w = Work::new();
    let o = w.run(&["settings", "--beta", "46"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("-17/-63 (46 dB)  guarded -17/-66 (49 dB)"));

    let o = w.run(&["settings", "--beta", "104"]);
    let out = stdout(&o);
    assert_eq!(code(&o), 0);
    assert_eq!(out.lines().count(), 2, "{out}");
    assert!(out.contains("3/-101 (104 dB)") && out.contains("saturated"));

    let o = w.run(&["settings", "--beta", "30"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("below minimum budget 31"));

    let coarse = w.put(
        "coarse.json",
        r#"{"name":"coarse","tx_levels":[-17,3],"sensitivity_levels":[-101,-63,-48]}"#,
    );
    let o = w.run(&[
        "settings",
        "--beta",
        "46",
        "--profile",
        coarse.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("-17/-63 (46 dB)"));
}

fn write_tree_for(w: &Work, m: &LossMatrix) {
    w.put_matrix("base.json", m);
    let o = w.run(&[
        "tree",
        "base.json",
        "--kappa",
        "const:1",
        "--root",
        "1",
        "--beta",
        "50",
        "--out",
        "t",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn verify_detects_broken_links_and_shortcuts() {
    let w = Work::new();
    let base = chain(5, 45.0, 90.0);
    write_tree_for(&w, &base);

    let o = w.run(&[
        "verify",
        "t/trees.json",
        "base.json",
        "--kappa",
        "const:1",
        "--out",
        "v",
    ]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));

    let mut broken = base.clone();
    broken.insert_loss(NodeId(3), NodeId(4), 58.0).unwrap();
    w.put_matrix("broken.json", &broken);
    let o = w.run(&[
        "verify",
        "t/trees.json",
        "broken.json",
        "--kappa",
        "const:1",
        "--out",
        "v2",
    ]);
    assert_eq!(code(&o), 3);
    let out = stdout(&o);
    assert!(
        out.contains("requirement 1") && out.contains("3 -- 4 at 58 dB"),
        "{out}"
    );

    let mut shortcut = base.clone();
    shortcut.insert_loss(NodeId(1), NodeId(4), 60.0).unwrap();
    shortcut.insert_loss(NodeId(4), NodeId(1), 60.0).unwrap();
    w.put_matrix("shortcut.json", &shortcut);
    let o = w.run(&[
        "verify",
        "t/trees.json",
        "shortcut.json",
        "--kappa",
        "const:1",
        "--out",
        "v3",
    ]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("requirement 4"), "{}", stdout(&o));
    assert!(w.read("v3/verify.txt").ends_with("FAIL\n"));
}

#[test]
fn verify_rejects_unknown_files() {
    let w = Work::new();
    w.put_matrix("m.json", &chain(3, 45.0, 90.0));
    let o = w.run(&["verify", "m.json", "m.json", "--out", "v"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_report_separates_compact_and_sparse_testbeds() {
    let w = Work::new();
    w.put_matrix("compact.json", &mesh(10, 40.0));
    w.put_matrix("sparse.json", &chain(8, 45.0, 95.0));
    let o = w.run(&[
        "sweep-report",
        "compact.json",
        "sparse.json",
        "--kappa",
        "const:1",
        "--out",
        "r",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = w.read("r/sweep_report.csv");
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "compact");
    assert_eq!(rows[0][2], "1");
    assert_eq!(rows[0][5], "no multi-hop");
    assert_eq!(rows[1][0], "sparse");
    assert!(rows[1][2].parse::<usize>().unwrap() >= 5);
    assert_eq!(rows[1][5], "");

    let o = w.run(&[
        "sweep-report",
        "sparse.json",
        "--kappa",
        "const:1",
        "--out",
        "one",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(w.read("one/sweep_report.csv").lines().count(), 2);
}

#[test]
fn bad_arguments_exit_with_input_code() {
    let w = Work::new();
    assert_eq!(code(&w.run(&["analyze", "missing.json"])), 2);
    w.put_matrix("m.json", &chain(3, 45.0, 90.0));
    assert_eq!(
        code(&w.run(&["tree", "m.json", "--kappa", "sideways", "--out", "t"])),
        2
    );
    assert_eq!(
        code(&w.run(&[
            "analyze",
            "m.json",
            "--beta-min",
            "90",
            "--beta-max",
            "30",
            "--out",
            "a"
        ])),
        2
    );
    assert_eq!(code(&w.run(&["frobnicate"])), 2);
}
