use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use edgepriv::blackbox::GcnBlackbox;
use edgepriv::dataset::{generate_sbm_dataset, Dataset, SbmDatasetSpec, Setting};
use edgepriv::dpgraph::{perturb, precision_bound, DpBudget, Mechanism, MemoryCap, PerturbOptions};
use edgepriv::experiment::{
    read_rows, run_experiment, select_epsilon, summarize, write_outputs, ExperimentConfig,
    RunOptions,
};
use edgepriv::gcn::{train, GcnModel, TrainConfig};
use edgepriv::graph::{degree_stratified_sample, stratum_thresholds, SparseGraph, Stratum};
use edgepriv::linkteller::{
    linkteller_attack, lsa2_attack, random_attack, Attacker, Lsa2Variant, DEFAULT_DELTA,
};
use edgepriv::metrics::PairGroundTruth;
use edgepriv::normalize::{normalize, NormKind};
use edgepriv::{Error, Result};

#[derive(Parser)]
#[command(
    name = "edgepriv",
    version,
    about = "Edge privacy lab for graph convolutional networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic SBM dataset directory.
    Gen(GenArgs),
    /// Train a GCN on a dataset and save the model.
    Train(TrainArgs),
    /// Run one attack against a trained model.
    Attack(AttackArgs),
    /// Perturb an edge list with an edge-DP mechanism.
    Perturb(PerturbArgs),
    /// Print the precision ceiling min(1, e^eps * density).
    Bound(BoundArgs),
    /// Recompute summary tables from a results CSV.
    Report(ReportArgs),
    /// Run an experiment grid from a JSON config.
    Run(RunArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated block sizes; one class per block.
    #[arg(long, value_delimiter = ',', default_value = "125,125,125,125")]
    blocks: Vec<usize>,
    #[arg(long, default_value_t = 0.2)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long)]
    feature_signal: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "inductive")]
    setting: SettingArg,
    /// JSON training config; individual flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    norm: Option<NormKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train on this edge list (e.g. a perturbed graph) instead of the
    /// dataset graph.
    #[arg(long)]
    graph: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SettingArg {
    Inductive,
    Transductive,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Inductive => Setting::Inductive,
            SettingArg::Transductive => Setting::Transductive,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum StratumArg {
    Low,
    Unconstrained,
    High,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "inductive")]
    setting: SettingArg,
    #[arg(long, default_value = "linkteller")]
    attacker: Attacker,
    /// Density belief; defaults to the true density among the targets.
    #[arg(long)]
    k_hat: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    #[arg(long, value_enum, default_value = "unconstrained")]
    stratum: StratumArg,
    /// Degree threshold; chosen automatically when omitted.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 100)]
    targets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Serve queries from this edge list instead of the true inference
    /// graph. Ground truth still comes from the dataset.
    #[arg(long)]
    served_graph: Option<PathBuf>,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-pair score CSV.
    #[arg(long)]
    pairs: Option<PathBuf>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    mechanism: Mechanism,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    density: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// One or more results CSVs to merge.
    #[arg(long, required = true, num_args = 1..)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Pick the smallest ε per mechanism reaching this mean test accuracy.
    #[arg(long)]
    utility_threshold: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Perturb(a) => cmd_perturb(a),
        Command::Bound(a) => cmd_bound(a),
        Command::Report(a) => cmd_report(a),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Parameter(_) | Error::Parse { .. } | Error::Input(_) => 2,
                _ => 1,
            })
        }
    }
}

fn cmd_gen(a: GenArgs) -> Result<ExitCode> {
    let mut spec = SbmDatasetSpec {
        block_sizes: a.blocks,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.feature_dim,
        ..SbmDatasetSpec::default()
    };
    if let Some(s) = a.feature_signal {
        spec.feature_signal = s;
    }
    let ds = generate_sbm_dataset(&spec, a.seed)?;
    ds.save(&a.out)?;
    println!(
        "wrote {} nodes, {} edges, {} classes to {}",
        ds.graph().n(),
        ds.graph().edge_count(),
        ds.num_classes(),
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_with_graph(data: &Path, graph: Option<&Path>) -> Result<Dataset> {
    let ds = Dataset::load(data)?;
    match graph {
        Some(p) => ds.with_graph(SparseGraph::load_edge_list(p)?),
        None => Ok(ds),
    }
}

fn cmd_train(a: TrainArgs) -> Result<ExitCode> {
    let ds = load_with_graph(&a.data, a.graph.as_deref())?;
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden_dims = v;
    }
    if let Some(v) = a.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = a.norm {
        cfg.norm_kind = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let view = ds.training_view(a.setting.into())?;
    let adj = normalize(&view.graph, cfg.norm_kind);
    let outcome = train(&view.features, &view.supervision, &adj, &cfg)?;
    outcome.model.save(&a.out)?;
    let summary = serde_json::json!({
        "model": a.out,
        "epochs": cfg.epochs,
        "final_loss": outcome.loss_history.last(),
        "val_accuracy": outcome.final_val_accuracy(),
        "parameters": outcome.model.num_params(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_attack(a: AttackArgs) -> Result<ExitCode> {
    let ds = Dataset::load(&a.data)?;
    let model = GcnModel::load(&a.model)?;
    let view = ds.inference_view(a.setting.into())?;
    let truth_graph = &view.graph;
    let served = match &a.served_graph {
        Some(p) => {
            let g = SparseGraph::load_edge_list(p)?;
            if g.n() != truth_graph.n() {
                return Err(Error::Input(format!(
                    "served graph has {} nodes, inference graph has {}",
                    g.n(),
                    truth_graph.n()
                )));
            }
            g
        }
        None => truth_graph.clone(),
    };
    let stratum = match (a.stratum, a.degree) {
        (StratumArg::Unconstrained, _) => Stratum::Unconstrained,
        (StratumArg::Low, Some(d)) => Stratum::Low(d),
        (StratumArg::High, Some(d)) => Stratum::High(d),
        (s, None) => {
            let min = (2 * a.targets).min(truth_graph.n()).max(1);
            let (lo, hi) = stratum_thresholds(truth_graph, min)?;
            match s {
                StratumArg::Low => Stratum::Low(lo),
                _ => Stratum::High(hi),
            }
        }
    };
    let targets = degree_stratified_sample(truth_graph, stratum, a.targets, a.seed)?;
    let truth = PairGroundTruth::from_graph(truth_graph, &targets)?;
    let k_hat = a.k_hat.unwrap_or_else(|| truth.density());
    let api = GcnBlackbox::new(Arc::new(model), Arc::new(served));
    let features = view.features.select_rows(&targets);
    let mut report = match a.attacker {
        Attacker::LinkTeller => {
            linkteller_attack(&api, &targets, &features, &targets, k_hat, a.delta)?
        }
        Attacker::Lsa2Post => lsa2_attack(
            &api,
            &targets,
            &features,
            &targets,
            k_hat,
            Lsa2Variant::Post,
        )?,
        Attacker::Lsa2Attr => lsa2_attack(
            &api,
            &targets,
            &features,
            &targets,
            k_hat,
            Lsa2Variant::Attr,
        )?,
        Attacker::Random => random_attack(&targets, k_hat.min(1.0), a.seed)?,
    };
    report.config.stratum = Some(stratum);
    report.evaluate(&truth)?;
    if let Some(p) = &a.pairs {
        let f = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
        report.write_pair_scores_csv(std::io::BufWriter::new(f), Some(&truth))?;
    }
    let json = report.to_json()?;
    match &a.out {
        Some(p) => std::fs::write(p, json + "\n").map_err(|e| Error::io(p, e))?,
        None => println!("{json}"),
    }
    if let Some(m) = &report.metrics {
        eprintln!(
            "{}: precision {:.4} recall {:.4} f1 {:.4} (density {:.4})",
            report.attacker,
            m.precision,
            m.recall,
            m.f1,
            truth.density()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_perturb(a: PerturbArgs) -> Result<ExitCode> {
    let graph = SparseGraph::load_edge_list(&a.graph)?;
    let budget = DpBudget::new(a.mechanism, a.eps)?;
    let opts = PerturbOptions {
        memory_cap: MemoryCap::default().with_env_override()?,
        ..PerturbOptions::default()
    };
    let out = perturb(&graph, &budget, a.seed, &opts)?;
    out.save(&a.out)?;
    println!(
        "{}: {} -> {} edges (token {})",
        a.mechanism,
        graph.edge_count(),
        out.graph().edge_count(),
        out.provenance().token
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_bound(a: BoundArgs) -> Result<ExitCode> {
    println!("{:.4}", precision_bound(a.eps, a.density)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode> {
    let mut rows = Vec::new();
    for p in &a.results {
        rows.extend(read_rows(p)?);
    }
    let summary = summarize(&rows);
    write_outputs(&a.out, &rows, &summary)?;
    if let Some(t) = a.utility_threshold {
        let picks = select_epsilon(&summary, t);
        let path = a.out.join("epsilon_choice.json");
        let json = serde_json::to_string_pretty(&picks)? + "\n";
        std::fs::write(&path, &json).map_err(|e| Error::io(&path, e))?;
        std::io::stdout().write_all(json.as_bytes()).ok();
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let outcome = run_experiment(
        &cfg,
        &base,
        &RunOptions {
            out_dir: a.out,
            jobs: a.jobs,
            seed_offset: a.seed_offset,
        },
    )?;
    println!(
        "{} result rows, {} failed cells, written to {}",
        outcome.rows.len(),
        outcome.failed_cells,
        outcome.out_dir.display()
    );
    Ok(if outcome.failed_cells > 0 {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}
