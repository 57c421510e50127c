//! Config-driven experiment grid.
//!
//! One job per `(seed, defense)`: perturb (unless vanilla), train, measure
//! utility, then for every degree stratum sample targets and run every
//! attacker at every density-belief multiplier. Jobs are independent and
//! may run on a worker pool; results are merged in grid order so output is
//! byte-identical for identical configs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{generate_sbm_dataset, Dataset, SbmDatasetSpec, Setting};
use crate::dpgraph::{
    precision_bound, train_and_serve, DpBudget, Mechanism, MemoryCap, PerturbOptions, Provenance,
    ServedModel,
};
use crate::error::{Error, Result};
use crate::gcn::TrainConfig;
use crate::graph::{degree_stratified_sample, stratum_thresholds, Stratum};
use crate::linkteller::{
    linkteller_attack, lsa2_attack, random_attack, rethreshold, AttackReport, Attacker,
    Lsa2Variant, DEFAULT_DELTA,
};
use crate::metrics::{utility_report, EvalQuery, PairGroundTruth, UtilityReport};
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";
pub const REPORTS_DIR: &str = "reports";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Sbm {
        #[serde(default)]
        spec: SbmDatasetSpec,
        #[serde(default)]
        seed: u64,
    },
    Files {
        dir: PathBuf,
    },
}

impl DatasetSource {
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Sbm { spec, seed } => generate_sbm_dataset(spec, *seed),
            DatasetSource::Files { dir } => Dataset::load(&base.join(dir)),
        }
    }
}

/// A degree stratum; missing thresholds are chosen per graph so that at
/// least `2 · target_count` nodes qualify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StratumSpec {
    Low {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_low: Option<usize>,
    },
    Unconstrained,
    High {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_high: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSpec {
    pub strata: Vec<StratumSpec>,
    pub target_count: usize,
    pub k_hat_multipliers: Vec<f64>,
    pub delta: f64,
    pub attackers: Vec<Attacker>,
    /// Query the whole inference graph instead of only the targets.
    pub query_all_inference_nodes: bool,
    /// Write a per-pair score CSV for every (job, stratum, attacker).
    pub emit_pair_scores: bool,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec {
            strata: vec![
                StratumSpec::Low { d_low: None },
                StratumSpec::Unconstrained,
                StratumSpec::High { d_high: None },
            ],
            target_count: 100,
            k_hat_multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            delta: DEFAULT_DELTA,
            attackers: Attacker::ALL.to_vec(),
            query_all_inference_nodes: false,
            emit_pair_scores: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseSpec {
    pub include_vanilla: bool,
    pub mechanisms: Vec<Mechanism>,
    pub epsilons: Vec<f64>,
    pub memory_cap: MemoryCap,
    pub count_share: f64,
}

impl Default for DefenseSpec {
    fn default() -> Self {
        DefenseSpec {
            include_vanilla: true,
            mechanisms: vec![],
            epsilons: (1..=10).map(f64::from).collect(),
            memory_cap: MemoryCap::default(),
            count_share: crate::dpgraph::DEFAULT_COUNT_SHARE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub setting: Setting,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub defense: DefenseSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "experiment".into()
}

impl ExperimentConfig {
    /// Desk-scale default: 4 × 125 SBM, inductive, vanilla only.
    pub fn desk_default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: "sbm-4x125".into(),
            dataset: DatasetSource::Sbm {
                spec: SbmDatasetSpec::default(),
                seed: 0,
            },
            setting: Setting::Inductive,
            train: TrainConfig::default(),
            attack: AttackSpec::default(),
            defense: DefenseSpec::default(),
            seeds: vec![1, 2, 3],
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// `base` resolves relative dataset paths.
    pub fn validate(&self, base: &Path) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parameter(format!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("seed list is empty".into()));
        }
        if let Some(e) = self.defense.epsilons.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::Parameter(format!(
                "ε grid contains non-positive {e}"
            )));
        }
        if !self.defense.mechanisms.is_empty() && self.defense.epsilons.is_empty() {
            return Err(Error::Parameter(
                "mechanisms given without an ε grid".into(),
            ));
        }
        if self.attack.target_count < 2 {
            return Err(Error::Parameter("target_count must be at least 2".into()));
        }
        if let Some(m) = self
            .attack
            .k_hat_multipliers
            .iter()
            .find(|m| !(**m >= 0.0 && m.is_finite()))
        {
            return Err(Error::Parameter(format!(
                "bad density-belief multiplier {m}"
            )));
        }
        if let DatasetSource::Files { dir } = &self.dataset {
            let dir = base.join(dir);
            for f in [
                crate::dataset::GRAPH_FILE,
                crate::dataset::FEATURES_FILE,
                crate::dataset::LABELS_FILE,
                crate::dataset::SPLITS_FILE,
            ] {
                if !dir.join(f).is_file() {
                    return Err(Error::Input(format!(
                        "dataset file {} does not exist",
                        dir.join(f).display()
                    )));
                }
            }
        }
        self.train.validate()
    }

    /// Defenses in grid order: vanilla first, then mechanism × ε.
    pub fn defenses(&self) -> Vec<Option<(Mechanism, f64)>> {
        let mut out = Vec::new();
        if self.defense.include_vanilla {
            out.push(None);
        }
        for &m in &self.defense.mechanisms {
            for &e in &self.defense.epsilons {
                out.push(Some((m, e)));
            }
        }
        out
    }
}

/// One line of the wide results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub setting: String,
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub stratum: String,
    pub stratum_threshold: Option<usize>,
    pub target_count: Option<usize>,
    pub attacker: String,
    pub k_hat_multiplier: Option<f64>,
    pub k_hat: Option<f64>,
    pub k_hat_rounded: Option<f64>,
    pub density_c: Option<f64>,
    pub density_c_rounded: Option<f64>,
    pub true_edges: Option<usize>,
    pub predicted: Option<usize>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    pub precision_bound: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_rare_f1: Option<f64>,
    pub status: String,
    pub message: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Rounds to one significant digit, e.g. `5.61e-5 → 6e-5`.
pub fn round_to_leading_digit(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.0e}").parse().unwrap_or(x)
}

fn mechanism_label(defense: Option<(Mechanism, f64)>) -> String {
    defense.map_or_else(|| "none".to_string(), |(m, _)| m.to_string())
}

fn stratum_label(spec: &StratumSpec) -> &'static str {
    match spec {
        StratumSpec::Low { .. } => "low",
        StratumSpec::Unconstrained => "unconstrained",
        StratumSpec::High { .. } => "high",
    }
}

/// Per-job record written under `reports/`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobReport {
    pub seed: u64,
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub status: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inference_provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityReport>,
    /// Attack reports without pair scores, one per stratum × attacker × k̂.
    pub attacks: Vec<AttackSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSummary {
    pub stratum: String,
    pub k_hat_multiplier: f64,
    pub report: AttackReport,
}

struct JobOutput {
    rows: Vec<ResultRow>,
    report: JobReport,
    pair_scores: Vec<(String, Vec<u8>)>,
    failed_cells: usize,
}

struct JobContext<'a> {
    cfg: &'a ExperimentConfig,
    dataset: &'a Dataset,
    options: PerturbOptions,
    /// Stratum, resolved threshold and sampled targets, shared by all jobs
    /// of a seed so defenses are compared on identical targets.
    targets: &'a BTreeMap<(u64, usize), Result<(Stratum, Vec<usize>), String>>,
}

fn base_row(cfg: &ExperimentConfig, seed: u64, defense: Option<(Mechanism, f64)>) -> ResultRow {
    ResultRow {
        dataset: cfg.name.clone(),
        setting: match cfg.setting {
            Setting::Transductive => "transductive".into(),
            Setting::Inductive => "inductive".into(),
        },
        mechanism: mechanism_label(defense),
        epsilon: defense.map(|(_, e)| e),
        seed,
        stratum: String::new(),
        stratum_threshold: None,
        target_count: None,
        attacker: String::new(),
        k_hat_multiplier: None,
        k_hat: None,
        k_hat_rounded: None,
        density_c: None,
        density_c_rounded: None,
        true_edges: None,
        predicted: None,
        precision: None,
        recall: None,
        f1: None,
        auc: None,
        precision_bound: None,
        val_accuracy: None,
        test_accuracy: None,
        test_rare_f1: None,
        status: "ok".into(),
        message: String::new(),
    }
}

fn error_row(mut row: ResultRow, err: &Error) -> ResultRow {
    row.status = format!("error:{}", err.kind());
    row.message = err.to_string();
    row
}

fn measure_utility(served: &ServedModel) -> Result<UtilityReport> {
    let inf = &served.inference;
    let nodes: Vec<usize> = (0..inf.graph.n()).collect();
    utility_report(
        served.blackbox(),
        EvalQuery {
            query_nodes: &nodes,
            features: &inf.features,
            eval_positions: &inf.supervision.val,
            labels: &inf.supervision.labels,
            degree_graph: &served.true_inference_graph,
            num_classes: inf.supervision.num_classes,
        },
    )
}

fn run_attacker(
    served: &ServedModel,
    attacker: Attacker,
    targets: &[usize],
    k_hat: f64,
    delta: f64,
    query_all: bool,
    seed: u64,
) -> Result<AttackReport> {
    let inf = &served.inference;
    let query: Vec<usize> = if query_all {
        (0..inf.graph.n()).collect()
    } else {
        targets.to_vec()
    };
    let features = inf.features.select_rows(&query);
    let api = served.blackbox();
    match attacker {
        Attacker::LinkTeller => linkteller_attack(api, &query, &features, targets, k_hat, delta),
        Attacker::Lsa2Post => {
            lsa2_attack(api, &query, &features, targets, k_hat, Lsa2Variant::Post)
        }
        Attacker::Lsa2Attr => {
            lsa2_attack(api, &query, &features, targets, k_hat, Lsa2Variant::Attr)
        }
        Attacker::Random => random_attack(targets, k_hat.min(1.0), seed),
    }
}

fn run_job(ctx: &JobContext<'_>, seed: u64, defense: Option<(Mechanism, f64)>) -> JobOutput {
    let cfg = ctx.cfg;
    let base = base_row(cfg, seed, defense);
    let mut report = JobReport {
        seed,
        mechanism: base.mechanism.clone(),
        epsilon: base.epsilon,
        status: "ok".into(),
        message: String::new(),
        training_provenance: None,
        inference_provenance: None,
        final_train_loss: None,
        val_accuracy: None,
        utility: None,
        attacks: vec![],
    };

    let served = (|| {
        let budget = defense.map(|(m, e)| DpBudget::new(m, e)).transpose()?;
        let train_cfg = TrainConfig {
            seed: rng::derive(seed, 0x7261_696e),
            ..cfg.train.clone()
        };
        let served = train_and_serve(
            ctx.dataset,
            cfg.setting,
            budget.as_ref(),
            &train_cfg,
            rng::derive(seed, 0x7065_7274),
            &ctx.options,
        )?;
        let utility = measure_utility(&served)?;
        Ok::<_, Error>((served, utility))
    })();
    let (served, utility) = match served {
        Ok(v) => v,
        Err(e) => {
            report.status = format!("error:{}", e.kind());
            report.message = e.to_string();
            return JobOutput {
                rows: vec![error_row(base, &e)],
                report,
                pair_scores: vec![],
                failed_cells: 1,
            };
        }
    };
    report.training_provenance = served.training_provenance.clone();
    report.inference_provenance = served.inference_provenance.clone();
    report.final_train_loss = served.train_outcome.loss_history.last().copied();
    report.val_accuracy = served.train_outcome.final_val_accuracy();
    report.utility = Some(utility.clone());

    let mut base = base;
    base.val_accuracy = report.val_accuracy;
    base.test_accuracy = Some(utility.accuracy);
    base.test_rare_f1 = Some(utility.rare_class_f1);

    let mut rows = Vec::new();
    let mut pair_scores = Vec::new();
    let mut failed_cells = 0;
    for (si, spec) in cfg.attack.strata.iter().enumerate() {
        let mut srow = base.clone();
        srow.stratum = stratum_label(spec).into();
        srow.target_count = Some(cfg.attack.target_count);
        let sampled = match &ctx.targets[&(seed, si)] {
            Ok(v) => v,
            Err(msg) => {
                srow.status = "error:sampling".into();
                srow.message = msg.clone();
                rows.push(srow);
                failed_cells += 1;
                continue;
            }
        };
        let (stratum, targets) = (sampled.0, &sampled.1);
        srow.stratum_threshold = match stratum {
            Stratum::Low(d) | Stratum::High(d) => Some(d),
            Stratum::Unconstrained => None,
        };
        let truth = match PairGroundTruth::from_graph(&served.true_inference_graph, targets) {
            Ok(t) => t,
            Err(e) => {
                rows.push(error_row(srow, &e));
                failed_cells += 1;
                continue;
            }
        };
        let density = truth.density();
        srow.density_c = Some(density);
        srow.density_c_rounded = Some(round_to_leading_digit(density));
        srow.true_edges = Some(truth.edges().len());
        srow.precision_bound = match defense {
            Some((_, eps)) => precision_bound(eps, density).ok(),
            None => None,
        };

        for &attacker in &cfg.attack.attackers {
            let mut arow = srow.clone();
            arow.attacker = attacker.to_string();
            let attack_seed = rng::derive(seed, 0x6174_0000 + si as u64);
            // scores do not depend on k̂ except for the random baseline
            let mut scored: Option<AttackReport> = None;
            for &mult in &cfg.attack.k_hat_multipliers {
                let k_hat = mult * density;
                let mut row = arow.clone();
                row.k_hat_multiplier = Some(mult);
                row.k_hat = Some(k_hat);
                row.k_hat_rounded = Some(round_to_leading_digit(k_hat));
                let attempt = match (&scored, attacker) {
                    (Some(prev), a) if a != Attacker::Random => rethreshold(prev, k_hat),
                    _ => run_attacker(
                        &served,
                        attacker,
                        targets,
                        k_hat,
                        cfg.attack.delta,
                        cfg.attack.query_all_inference_nodes,
                        attack_seed,
                    ),
                };
                let evaluated = attempt.and_then(|mut r| {
                    r.config.stratum = Some(stratum);
                    r.evaluate(&truth)?;
                    Ok(r)
                });
                match evaluated {
                    Ok(r) => {
                        let m = r.metrics.clone().expect("evaluated");
                        row.precision = Some(m.precision);
                        row.recall = Some(m.recall);
                        row.f1 = Some(m.f1);
                        row.auc = m.auc;
                        row.predicted = Some(m.predicted);
                        if cfg.attack.emit_pair_scores && mult == 1.0 {
                            let mut buf = Vec::new();
                            if r.write_pair_scores_csv(&mut buf, Some(&truth)).is_ok() {
                                pair_scores.push((
                                    format!(
                                        "pairs_{}_{}_s{seed}_{}_{attacker}.csv",
                                        report.mechanism,
                                        eps_tag(report.epsilon),
                                        srow.stratum
                                    ),
                                    buf,
                                ));
                            }
                        }
                        let mut slim = r.clone();
                        slim.pair_scores.clear();
                        report.attacks.push(AttackSummary {
                            stratum: srow.stratum.clone(),
                            k_hat_multiplier: mult,
                            report: slim,
                        });
                        if scored.is_none() {
                            scored = Some(r);
                        }
                        rows.push(row);
                    }
                    Err(e) => {
                        rows.push(error_row(row, &e));
                        failed_cells += 1;
                    }
                }
            }
        }
    }
    JobOutput {
        rows,
        report,
        pair_scores,
        failed_cells,
    }
}

fn eps_tag(eps: Option<f64>) -> String {
    eps.map_or_else(|| "vanilla".to_string(), |e| format!("eps{e}"))
}

fn sample_targets(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
) -> Result<BTreeMap<(u64, usize), Result<(Stratum, Vec<usize>), String>>> {
    let inference = dataset.inference_view(cfg.setting)?;
    let graph = &inference.graph;
    let nc = cfg.attack.target_count;
    let auto = stratum_thresholds(graph, (2 * nc).min(graph.n()).max(1));
    let mut out = BTreeMap::new();
    for &seed in &cfg.seeds {
        for (si, spec) in cfg.attack.strata.iter().enumerate() {
            let stratum = match (*spec, &auto) {
                (StratumSpec::Unconstrained, _) => Ok(Stratum::Unconstrained),
                (StratumSpec::Low { d_low: Some(d) }, _) => Ok(Stratum::Low(d)),
                (StratumSpec::High { d_high: Some(d) }, _) => Ok(Stratum::High(d)),
                (StratumSpec::Low { d_low: None }, Ok((lo, _))) => Ok(Stratum::Low(*lo)),
                (StratumSpec::High { d_high: None }, Ok((_, hi))) => Ok(Stratum::High(*hi)),
                (_, Err(e)) => Err(e.to_string()),
            };
            let sampled = stratum.and_then(|s| {
                degree_stratified_sample(graph, s, nc, rng::derive(seed, 0x7367_0000 + si as u64))
                    .map(|t| (s, t))
                    .map_err(|e| e.to_string())
            });
            out.insert((seed, si), sampled);
        }
    }
    Ok(out)
}

/// Extra run-time knobs from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed_offset: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub failed_cells: usize,
    pub out_dir: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        rows.push(rec.map_err(|e| Error::parse(path, i + 2, e.to_string()))?);
    }
    Ok(rows)
}

/// Runs the whole grid and writes `results.csv`, `summary.csv`,
/// `tradeoff.csv` and per-job JSON under `reports/`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    base_dir: &Path,
    opts: &RunOptions,
) -> Result<ExperimentOutcome> {
    cfg.validate(base_dir)?;
    let mut cfg = cfg.clone();
    for s in &mut cfg.seeds {
        *s = s.wrapping_add(opts.seed_offset);
    }
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(|d| base_dir.join(d)))
        .ok_or_else(|| Error::Parameter("no output directory given".into()))?;
    let dataset = cfg.dataset.load(base_dir)?;
    let targets = sample_targets(&cfg, &dataset)?;
    let options = PerturbOptions {
        memory_cap: cfg.defense.memory_cap.with_env_override()?,
        count_share: cfg.defense.count_share,
    };
    let ctx = JobContext {
        cfg: &cfg,
        dataset: &dataset,
        options,
        targets: &targets,
    };

    let grid: Vec<(u64, Option<(Mechanism, f64)>)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.defenses().into_iter().map(move |d| (s, d)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    let outputs: Vec<JobOutput> = pool.install(|| {
        use rayon::prelude::*;
        grid.par_iter().map(|&(s, d)| run_job(&ctx, s, d)).collect()
    });

    let reports_dir = out_dir.join(REPORTS_DIR);
    std::fs::create_dir_all(&reports_dir).map_err(|e| Error::io(&reports_dir, e))?;
    let mut rows = Vec::new();
    let mut failed_cells = 0;
    for out in outputs {
        let name = format!(
            "job_s{}_{}_{}.json",
            out.report.seed,
            out.report.mechanism,
            eps_tag(out.report.epsilon)
        );
        let json = serde_json::to_string_pretty(&out.report)? + "\n";
        write_atomic(&reports_dir.join(name), json.as_bytes())?;
        for (name, bytes) in &out.pair_scores {
            write_atomic(&reports_dir.join(name), bytes)?;
        }
        failed_cells += out.failed_cells;
        rows.extend(out.rows);
    }
    let summary = summarize(&rows);
    write_outputs(&out_dir, &rows, &summary)?;
    Ok(ExperimentOutcome {
        rows,
        summary,
        failed_cells,
        out_dir,
    })
}

pub fn write_outputs(out_dir: &Path, rows: &[ResultRow], summary: &[SummaryRow]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_atomic(&out_dir.join(RESULTS_FILE), &rows_to_csv(rows)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in summary {
        w.serialize(s)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?;
    write_atomic(&out_dir.join(SUMMARY_FILE), &bytes)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in tradeoff(summary) {
        w.serialize(t)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))?;
    write_atomic(&out_dir.join(TRADEOFF_FILE), &bytes)
}

/// Mean ± sample standard deviation over seeds for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub setting: String,
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub stratum: String,
    pub attacker: String,
    pub k_hat_multiplier: Option<f64>,
    pub runs: usize,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub auc_mean: Option<f64>,
    pub auc_std: Option<f64>,
    pub test_accuracy_mean: f64,
    pub test_accuracy_std: f64,
    pub density_c_mean: f64,
    pub precision_bound_mean: Option<f64>,
}

/// `(mean, sample std)`; the std is 0 for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

type SummaryKey = (
    String,
    String,
    String,
    Option<u64>,
    String,
    String,
    Option<u64>,
);

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order: Vec<SummaryKey> = Vec::new();
    let mut groups: BTreeMap<SummaryKey, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let key = (
            r.dataset.clone(),
            r.setting.clone(),
            r.mechanism.clone(),
            r.epsilon.map(f64::to_bits),
            r.stratum.clone(),
            r.attacker.clone(),
            r.k_hat_multiplier.map(f64::to_bits),
        );
        let g = groups.entry(key.clone()).or_default();
        if g.is_empty() {
            order.push(key);
        }
        g.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let col = |f: fn(&ResultRow) -> Option<f64>| -> Vec<f64> {
                g.iter().filter_map(|r| f(r)).collect()
            };
            let (pm, ps) = mean_std(&col(|r| r.precision));
            let (rm, rs) = mean_std(&col(|r| r.recall));
            let (fm, fs) = mean_std(&col(|r| r.f1));
            let aucs = col(|r| r.auc);
            let (am, asd) = mean_std(&aucs);
            let (tm, ts) = mean_std(&col(|r| r.test_accuracy));
            let (dm, _) = mean_std(&col(|r| r.density_c));
            let bounds = col(|r| r.precision_bound);
            let first = g[0];
            SummaryRow {
                dataset: first.dataset.clone(),
                setting: first.setting.clone(),
                mechanism: first.mechanism.clone(),
                epsilon: first.epsilon,
                stratum: first.stratum.clone(),
                attacker: first.attacker.clone(),
                k_hat_multiplier: first.k_hat_multiplier,
                runs: g.len(),
                precision_mean: pm,
                precision_std: ps,
                recall_mean: rm,
                recall_std: rs,
                f1_mean: fm,
                f1_std: fs,
                auc_mean: (!aucs.is_empty()).then_some(am),
                auc_std: (!aucs.is_empty()).then_some(asd),
                test_accuracy_mean: tm,
                test_accuracy_std: ts,
                density_c_mean: dm,
                precision_bound_mean: (!bounds.is_empty()).then(|| mean_std(&bounds).0),
            }
        })
        .collect()
}

/// Utility-vs-attack-F1 series at the true density belief (`k̂ = k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub dataset: String,
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub stratum: String,
    pub attacker: String,
    pub test_accuracy_mean: f64,
    pub attack_f1_mean: f64,
    pub attack_precision_mean: f64,
    pub precision_bound_mean: Option<f64>,
}

pub fn tradeoff(summary: &[SummaryRow]) -> Vec<TradeoffPoint> {
    summary
        .iter()
        .filter(|s| s.k_hat_multiplier == Some(1.0))
        .map(|s| TradeoffPoint {
            dataset: s.dataset.clone(),
            mechanism: s.mechanism.clone(),
            epsilon: s.epsilon,
            stratum: s.stratum.clone(),
            attacker: s.attacker.clone(),
            test_accuracy_mean: s.test_accuracy_mean,
            attack_f1_mean: s.f1_mean,
            attack_precision_mean: s.precision_mean,
            precision_bound_mean: s.precision_bound_mean,
        })
        .collect()
}

/// Smallest ε per mechanism whose mean test accuracy reaches `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonChoice {
    pub dataset: String,
    pub mechanism: String,
    pub epsilon: Option<f64>,
    pub test_accuracy_mean: Option<f64>,
}

pub fn select_epsilon(summary: &[SummaryRow], threshold: f64) -> Vec<EpsilonChoice> {
    let mut per: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for s in summary.iter().filter(|s| s.epsilon.is_some()) {
        per.entry((s.dataset.clone(), s.mechanism.clone()))
            .or_default()
            .push((s.epsilon.unwrap_or(f64::INFINITY), s.test_accuracy_mean));
    }
    per.into_iter()
        .map(|((dataset, mechanism), mut pts)| {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.dedup_by(|a, b| a.0 == b.0);
            let hit = pts.into_iter().find(|&(_, acc)| acc >= threshold);
            EpsilonChoice {
                dataset,
                mechanism,
                epsilon: hit.map(|h| h.0),
                test_accuracy_mean: hit.map(|h| h.1),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leading_digit_rounding() {
        assert_eq!(round_to_leading_digit(5.61e-5), 6e-5);
        assert_eq!(round_to_leading_digit(0.0575), 0.06);
        assert_eq!(round_to_leading_digit(0.0), 0.0);
        assert_eq!(round_to_leading_digit(0.014), 0.01);
    }

    #[test]
    fn mean_std_over_three() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig::desk_default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let minimal = r#"{"schema_version": 1, "dataset": {"kind": "sbm"}, "seeds": [1]}"#;
        let cfg = ExperimentConfig::from_json(minimal).unwrap();
        assert_eq!(cfg.attack.k_hat_multipliers, vec![0.25, 0.5, 1.0, 2.0, 4.0]);
        assert!(cfg.validate(Path::new(".")).is_ok());
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = ExperimentConfig::desk_default();
        cfg.seeds.clear();
        assert!(cfg.validate(Path::new(".")).is_err());
        let mut cfg = ExperimentConfig::desk_default();
        cfg.defense.epsilons = vec![1.0, -2.0];
        assert!(cfg.validate(Path::new(".")).is_err());
        let mut cfg = ExperimentConfig::desk_default();
        cfg.schema_version = 9;
        assert!(cfg.validate(Path::new(".")).is_err());
        let mut cfg = ExperimentConfig::desk_default();
        cfg.dataset = DatasetSource::Files {
            dir: PathBuf::from("/definitely/missing"),
        };
        assert!(cfg.validate(Path::new(".")).is_err());
    }

    #[test]
    fn epsilon_selection_picks_smallest_passing() {
        let mk = |eps: f64, acc: f64| SummaryRow {
            dataset: "d".into(),
            setting: "inductive".into(),
            mechanism: "EdgeRand".into(),
            epsilon: Some(eps),
            stratum: "low".into(),
            attacker: "linkteller".into(),
            k_hat_multiplier: Some(1.0),
            runs: 3,
            precision_mean: 0.0,
            precision_std: 0.0,
            recall_mean: 0.0,
            recall_std: 0.0,
            f1_mean: 0.0,
            f1_std: 0.0,
            auc_mean: None,
            auc_std: None,
            test_accuracy_mean: acc,
            test_accuracy_std: 0.0,
            density_c_mean: 0.1,
            precision_bound_mean: None,
        };
        let s = vec![mk(3.0, 0.8), mk(1.0, 0.5), mk(2.0, 0.75)];
        let pick = select_epsilon(&s, 0.7);
        assert_eq!(pick[0].epsilon, Some(2.0));
        assert_eq!(select_epsilon(&s, 0.9)[0].epsilon, None);
    }
}
