use std::path::Path;

use edgepriv::dataset::SbmDatasetSpec;
use edgepriv::dpgraph::{Mechanism, MemoryCap};
use edgepriv::experiment::{
    read_rows, run_experiment, AttackSpec, DatasetSource, DefenseSpec, ExperimentConfig,
    RunOptions, StratumSpec,
};
use edgepriv::gcn::TrainConfig;

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSource::Sbm {
            spec: SbmDatasetSpec {
                block_sizes: vec![30, 30, 30],
                p_in: 0.25,
                p_out: 0.02,
                feature_dim: 8,
                ..SbmDatasetSpec::default()
            },
            seed: 11,
        },
        train: TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        },
        attack: AttackSpec {
            target_count: 15,
            ..AttackSpec::default()
        },
        defense: DefenseSpec {
            mechanisms: vec![Mechanism::EdgeRand, Mechanism::LapGraph],
            epsilons: vec![1.0, 4.0],
            ..DefenseSpec::default()
        },
        seeds: vec![1, 2, 3],
        ..ExperimentConfig::desk_default()
    }
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> edgepriv::experiment::ExperimentOutcome {
    run_experiment(
        cfg,
        dir,
        &RunOptions {
            out_dir: Some(dir.to_path_buf()),
            ..RunOptions::default()
        },
    )
    .unwrap()
}

#[test]
fn grid_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let out = run(&cfg, dir.path());
    assert_eq!(out.failed_cells, 0);
    // seeds × defenses × strata × attackers × multipliers
    let expected = 3 * 5 * 3 * 4 * 5;
    assert_eq!(out.rows.len(), expected);
    let on_disk = read_rows(&dir.path().join("results.csv")).unwrap();
    assert_eq!(on_disk.len(), expected);
    for seed in [1, 2, 3] {
        for (mech, eps) in [
            ("none", "vanilla"),
            ("EdgeRand", "eps1"),
            ("LapGraph", "eps4"),
        ] {
            let p = dir
                .path()
                .join(format!("reports/job_s{seed}_{mech}_{eps}.json"));
            assert!(p.is_file(), "missing {}", p.display());
        }
    }
    for r in &out.rows {
        assert!(r.precision.unwrap() <= 1.0);
        assert_eq!(r.precision_bound.is_some(), r.mechanism != "none");
        if let (Some(k), Some(kr)) = (r.density_c, r.density_c_rounded) {
            assert_eq!(format!("{k:.0e}").parse::<f64>().unwrap(), kr);
        }
    }
}

#[test]
fn summary_aggregates_three_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.defense.mechanisms.clear();
    let out = run(&cfg, dir.path());
    assert_eq!(out.summary.len(), 3 * 4 * 5);
    for s in &out.summary {
        assert_eq!(s.runs, 3);
        let f1: Vec<f64> = out
            .rows
            .iter()
            .filter(|r| {
                r.stratum == s.stratum
                    && r.attacker == s.attacker
                    && r.k_hat_multiplier == s.k_hat_multiplier
            })
            .map(|r| r.f1.unwrap())
            .collect();
        let mean = f1.iter().sum::<f64>() / 3.0;
        let sd = (f1.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((s.f1_mean - mean).abs() < 1e-12);
        assert!((s.f1_std - sd).abs() < 1e-12);
    }
}

#[test]
fn seed_offset_shifts_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.defense.mechanisms.clear();
    cfg.seeds = vec![1];
    cfg.attack.strata = vec![StratumSpec::Unconstrained];
    let out = run_experiment(
        &cfg,
        dir.path(),
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            seed_offset: 10,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert!(out.rows.iter().all(|r| r.seed == 11));
}

#[test]
fn memory_cap_failure_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.seeds = vec![1];
    cfg.defense.mechanisms = vec![Mechanism::EdgeRand, Mechanism::LapGraph];
    cfg.defense.epsilons = vec![0.1];
    cfg.defense.memory_cap = MemoryCap {
        max_cells: 100,
        max_density: 0.45,
    };
    let out = run(&cfg, dir.path());
    assert_eq!(out.failed_cells, 1);
    let failed: Vec<_> = out.rows.iter().filter(|r| !r.is_ok()).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0].mechanism, "EdgeRand");
    assert_eq!(failed[0].status, "error:resource");
    assert!(out
        .rows
        .iter()
        .any(|r| r.mechanism == "LapGraph" && r.is_ok()));
    assert!(out.rows.iter().any(|r| r.mechanism == "none" && r.is_ok()));
    let json =
        std::fs::read_to_string(dir.path().join("reports/job_s1_EdgeRand_eps0.1.json")).unwrap();
    assert!(json.contains("error:resource"), "{json}");
}

#[test]
fn sampling_shortfall_marks_only_that_stratum() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.seeds = vec![1];
    cfg.defense.mechanisms.clear();
    cfg.attack.strata = vec![
        StratumSpec::Unconstrained,
        StratumSpec::High { d_high: Some(500) },
    ];
    let out = run(&cfg, dir.path());
    assert_eq!(out.failed_cells, 1);
    let bad: Vec<_> = out.rows.iter().filter(|r| !r.is_ok()).collect();
    assert_eq!(bad.len(), 1);
    assert_eq!(bad[0].stratum, "high");
    assert_eq!(bad[0].status, "error:sampling");
    assert!(out
        .rows
        .iter()
        .filter(|r| r.stratum == "unconstrained")
        .all(|r| r.is_ok()));
}
