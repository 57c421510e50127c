use std::path::Path;
use std::process::{Command, Output};

fn edgepriv(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgepriv"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn bound_prints_four_decimals() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgepriv(
        &["bound", "--eps", "0.6931", "--density", "0.01"],
        dir.path(),
    );
    assert_eq!(ok(&out).trim(), "0.0200");
    let out = edgepriv(&["bound", "--eps", "-1", "--density", "0.01"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        ok(&edgepriv(
            &["gen", "--out", d, "--blocks", "20,20", "--seed", "7"],
            dir.path(),
        ));
    }
    for f in ["graph.edges", "features.csv", "labels.txt", "splits.txt"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let ds = edgepriv::dataset::Dataset::load(&dir.path().join("a")).unwrap();
    assert_eq!(ds.graph().n(), 40);
    assert_eq!(ds.num_classes(), 2);
}

#[test]
fn perturb_is_byte_identical_for_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    ok(&edgepriv(
        &["gen", "--out", "d", "--blocks", "30,30", "--seed", "1"],
        dir.path(),
    ));
    for mech in ["EdgeRand", "LapGraph"] {
        for out in ["p1.edges", "p2.edges"] {
            ok(&edgepriv(
                &[
                    "perturb",
                    "--graph",
                    "d/graph.edges",
                    "--out",
                    out,
                    "--mechanism",
                    mech,
                    "--eps",
                    "3",
                    "--seed",
                    "5",
                ],
                dir.path(),
            ));
        }
        let a = std::fs::read(dir.path().join("p1.edges")).unwrap();
        let b = std::fs::read(dir.path().join("p2.edges")).unwrap();
        assert_eq!(a, b, "{mech} output differs");
        let side = std::fs::read_to_string(dir.path().join("p1.edges.provenance.json")).unwrap();
        assert!(side.contains(mech), "{side}");
    }
}

#[test]
fn train_then_attack_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(&edgepriv(
        &["gen", "--out", "d", "--blocks", "40,40", "--seed", "2"],
        dir.path(),
    ));
    let train = ok(&edgepriv(
        &["train", "--data", "d", "--out", "m.bin", "--epochs", "100"],
        dir.path(),
    ));
    let summary: serde_json::Value = serde_json::from_str(&train).unwrap();
    assert!(summary["val_accuracy"].as_f64().unwrap() >= 0.9, "{train}");
    ok(&edgepriv(
        &[
            "attack",
            "--data",
            "d",
            "--model",
            "m.bin",
            "--targets",
            "20",
            "--out",
            "r.json",
            "--pairs",
            "p.csv",
        ],
        dir.path(),
    ));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["attacker"], "linkteller");
    assert_eq!(report["center_nodes"].as_array().unwrap().len(), 20);
    let pairs = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(pairs.lines().next().unwrap(), "u,v,score,predicted,is_edge");
    assert_eq!(pairs.lines().count(), 1 + 20 * 19 / 2);
}

#[test]
fn malformed_edge_list_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("g.edges"), "4 2\n0 1\n2 1\n").unwrap();
    let out = edgepriv(
        &[
            "perturb",
            "--graph",
            "g.edges",
            "--out",
            "o.edges",
            "--mechanism",
            "EdgeRand",
            "--eps",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("g.edges:3"), "{err}");
}

#[test]
fn run_twice_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "schema_version": 1,
        "name": "small",
        "dataset": {"kind": "sbm", "spec": {"block_sizes": [30, 30, 30], "p_in": 0.25, "p_out": 0.02,
            "feature_dim": 8, "feature_signal": 0.5, "train_frac": 0.3, "val_frac": 0.2}, "seed": 3},
        "train": {"epochs": 60},
        "attack": {"strata": [{"kind": "unconstrained"}], "target_count": 15},
        "defense": {"mechanisms": ["LapGraph"], "epsilons": [1, 5]},
        "seeds": [1, 2]
    }"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    ok(&edgepriv(
        &["run", "--config", "cfg.json", "--out", "o1", "--jobs", "1"],
        dir.path(),
    ));
    ok(&edgepriv(
        &["run", "--config", "cfg.json", "--out", "o2", "--jobs", "3"],
        dir.path(),
    ));
    for f in ["results.csv", "summary.csv", "tradeoff.csv"] {
        let a = std::fs::read(dir.path().join("o1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("o2").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let report = ok(&edgepriv(
        &[
            "report",
            "--results",
            "o1/results.csv",
            "--out",
            "merged",
            "--utility-threshold",
            "0.5",
        ],
        dir.path(),
    ));
    assert!(report.contains("LapGraph"), "{report}");
    let merged = std::fs::read(dir.path().join("merged/summary.csv")).unwrap();
    assert_eq!(
        merged,
        std::fs::read(dir.path().join("o1/summary.csv")).unwrap()
    );
}
