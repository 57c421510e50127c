//! Edge-level differential privacy by perturbing the adjacency before
//! training, and the matching ceiling on attack precision.
//!
//! * EdgeRand: every cell `i < j` is kept with probability `1 - s`, otherwise
//!   replaced by a fair coin. It is ε-edge-DP for `ε ≥ ln(2/s - 1)`.
//! * LapGraph: spends a small share `ε₁` of the budget on a noisy edge count
//!   `T`, adds `Lap(1/ε₂)` to every cell with the rest, and keeps the `T`
//!   largest noisy cells.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blackbox::GcnBlackbox;
use crate::dataset::{Dataset, GraphView, Setting};
use crate::error::{Error, Result};
use crate::gcn::{train, TrainConfig, TrainOutcome};
use crate::graph::{cell_count, SparseGraph};
use crate::normalize::normalize;
use crate::rng::{self, stream};

/// Environment variable overriding [`MemoryCap::max_cells`].
pub const MAX_CELLS_ENV: &str = "EDGEPRIV_EDGERAND_MAX_CELLS";

/// Share of the LapGraph budget spent on the edge count.
pub const DEFAULT_COUNT_SHARE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    EdgeRand,
    LapGraph,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::EdgeRand => "EdgeRand",
            Mechanism::LapGraph => "LapGraph",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edgerand" => Ok(Mechanism::EdgeRand),
            "lapgraph" => Ok(Mechanism::LapGraph),
            _ => Err(Error::Parameter(format!("unknown mechanism {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    epsilon: f64,
    mechanism: Mechanism,
}

impl DpBudget {
    pub fn new(mechanism: Mechanism, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(DpBudget { epsilon, mechanism })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) || epsilon.is_nan() {
        return Err(Error::Parameter(format!("ε = {epsilon} must be positive")));
    }
    Ok(())
}

/// EdgeRand refuses inputs whose expected output would be too dense to
/// hold: more than `max_cells` cells *and* expected density above
/// `max_density`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryCap {
    pub max_cells: u64,
    pub max_density: f64,
}

impl Default for MemoryCap {
    fn default() -> Self {
        MemoryCap {
            max_cells: 10_000_000,
            max_density: 0.45,
        }
    }
}

impl MemoryCap {
    /// Applies the environment override for `max_cells`, if set.
    pub fn with_env_override(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(MAX_CELLS_ENV) {
            self.max_cells = v.trim().parse().map_err(|_| {
                Error::Parameter(format!("{MAX_CELLS_ENV}={v:?} is not a cell count"))
            })?;
        }
        Ok(self)
    }
}

/// Knobs shared by both mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbOptions {
    pub memory_cap: MemoryCap,
    /// LapGraph share of ε spent on the edge count.
    pub count_share: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        PerturbOptions {
            memory_cap: MemoryCap::default(),
            count_share: DEFAULT_COUNT_SHARE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub seed: u64,
    /// EdgeRand sampling probability.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// LapGraph budget for the edge count.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_count: Option<f64>,
    /// LapGraph budget for the cells.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_cells: Option<f64>,
    /// LapGraph noisy edge count after rounding and clamping.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_target: Option<u64>,
    pub n: usize,
    pub output_edges: usize,
    /// Digest of the mechanism parameters and output edge set.
    pub token: String,
}

#[derive(Debug, Clone)]
pub struct PerturbedGraph {
    graph: Arc<SparseGraph>,
    provenance: Provenance,
}

impl PerturbedGraph {
    pub fn graph(&self) -> &Arc<SparseGraph> {
        &self.graph
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Sidecar path used by [`PerturbedGraph::save`].
    pub fn sidecar_path(edges_path: &Path) -> PathBuf {
        let mut p = edges_path.as_os_str().to_owned();
        p.push(".provenance.json");
        PathBuf::from(p)
    }

    /// Writes the edge list and a provenance JSON sidecar next to it.
    pub fn save(&self, edges_path: &Path) -> Result<()> {
        self.graph.save_edge_list(edges_path)?;
        let side = Self::sidecar_path(edges_path);
        let json = serde_json::to_string_pretty(&self.provenance)? + "\n";
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    fn seal(graph: SparseGraph, mut provenance: Provenance) -> Self {
        debug_assert!(graph.edges().iter().all(|&(i, j)| i < j));
        provenance.n = graph.n();
        provenance.output_edges = graph.edge_count();
        let mut h = Sha256::new();
        h.update(provenance.mechanism.to_string().as_bytes());
        h.update(provenance.epsilon.to_le_bytes());
        h.update(provenance.seed.to_le_bytes());
        for x in [
            provenance.s,
            provenance.epsilon_count,
            provenance.epsilon_cells,
        ]
        .into_iter()
        .flatten()
        {
            h.update(x.to_le_bytes());
        }
        h.update((graph.n() as u64).to_le_bytes());
        for &(i, j) in graph.edges() {
            h.update((i as u64).to_le_bytes());
            h.update((j as u64).to_le_bytes());
        }
        provenance.token = h
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect();
        PerturbedGraph {
            graph: Arc::new(graph),
            provenance,
        }
    }
}

/// Smallest admissible EdgeRand sampling rate for budget `epsilon`:
/// `s = 2 / (e^ε + 1)`, clamped into `(0, 1]`.
pub fn edgerand_s_from_eps(epsilon: f64) -> f64 {
    let s = 2.0 / (epsilon.exp() + 1.0);
    s.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Expected EdgeRand output density for input density `k`: `(1-s)k + s/2`.
pub fn edgerand_expected_density(k: f64, s: f64) -> f64 {
    (1.0 - s) * k + s / 2.0
}

pub fn edgerand(
    graph: &SparseGraph,
    epsilon: f64,
    seed: u64,
    cap: &MemoryCap,
) -> Result<PerturbedGraph> {
    check_epsilon(epsilon)?;
    let s = edgerand_s_from_eps(epsilon);
    let cells = cell_count(graph.n()) as u64;
    let expected = edgerand_expected_density(graph.density(), s);
    if cells > cap.max_cells && expected > cap.max_density {
        return Err(Error::Resource(format!(
            "EdgeRand at ε = {epsilon} would produce expected density {expected:.3} over \
             {cells} cells (cap: {} cells above density {})",
            cap.max_cells, cap.max_density
        )));
    }
    let out = edgerand_with_rate(graph, s, seed);
    Ok(PerturbedGraph::seal(
        out,
        Provenance {
            mechanism: Mechanism::EdgeRand,
            epsilon,
            seed,
            s: Some(s),
            epsilon_count: None,
            epsilon_cells: None,
            edge_target: None,
            n: 0,
            output_edges: 0,
            token: String::new(),
        },
    ))
}

/// EdgeRand with an explicit sampling rate `s`.
pub fn edgerand_with_rate(graph: &SparseGraph, s: f64, seed: u64) -> SparseGraph {
    let n = graph.n();
    let mut rng = rng::seeded(seed, stream::EDGERAND);
    let mut pairs = Vec::new();
    for i in 0..n {
        let nb = graph.neighbors(i);
        for j in i + 1..n {
            let keep = rng.random::<f64>() < 1.0 - s;
            let present = if keep {
                nb.binary_search(&j).is_ok()
            } else {
                rng.random::<f64>() < 0.5
            };
            if present {
                pairs.push((i, j));
            }
        }
    }
    SparseGraph::from_sorted(n, pairs)
}

pub fn lapgraph(graph: &SparseGraph, epsilon: f64, seed: u64) -> Result<PerturbedGraph> {
    lapgraph_with_split(graph, epsilon, DEFAULT_COUNT_SHARE, seed)
}

pub fn lapgraph_with_split(
    graph: &SparseGraph,
    epsilon: f64,
    count_share: f64,
    seed: u64,
) -> Result<PerturbedGraph> {
    check_epsilon(epsilon)?;
    if !(count_share > 0.0 && count_share < 1.0) {
        return Err(Error::Parameter(format!(
            "count share {count_share} is not in (0, 1)"
        )));
    }
    let eps_count = count_share * epsilon;
    let eps_cells = epsilon - eps_count;
    let n = graph.n();
    let cells = cell_count(n);
    let mut rng = rng::seeded(seed, stream::LAPGRAPH);

    let noisy_count = graph.edge_count() as f64 + rng::laplace(&mut rng, 1.0 / eps_count);
    let target = noisy_count.round_ties_even().clamp(0.0, cells as f64) as usize;

    let mut noisy: Vec<(f64, usize, usize)> = Vec::with_capacity(cells);
    let scale = 1.0 / eps_cells;
    for i in 0..n {
        let nb = graph.neighbors(i);
        for j in i + 1..n {
            let a = if nb.binary_search(&j).is_ok() {
                1.0
            } else {
                0.0
            };
            noisy.push((a + rng::laplace(&mut rng, scale), i, j));
        }
    }
    // largest values first; ties by cell index
    let order = |x: &(f64, usize, usize), y: &(f64, usize, usize)| {
        y.0.total_cmp(&x.0)
            .then_with(|| (x.1, x.2).cmp(&(y.1, y.2)))
    };
    if target > 0 && target < noisy.len() {
        noisy.select_nth_unstable_by(target - 1, order);
    }
    let mut pairs: Vec<(usize, usize)> = noisy[..target].iter().map(|&(_, i, j)| (i, j)).collect();
    pairs.sort_unstable();
    Ok(PerturbedGraph::seal(
        SparseGraph::from_sorted(n, pairs),
        Provenance {
            mechanism: Mechanism::LapGraph,
            epsilon,
            seed,
            s: None,
            epsilon_count: Some(eps_count),
            epsilon_cells: Some(eps_cells),
            edge_target: Some(target as u64),
            n: 0,
            output_edges: 0,
            token: String::new(),
        },
    ))
}

pub fn perturb(
    graph: &SparseGraph,
    budget: &DpBudget,
    seed: u64,
    options: &PerturbOptions,
) -> Result<PerturbedGraph> {
    match budget.mechanism {
        Mechanism::EdgeRand => edgerand(graph, budget.epsilon, seed, &options.memory_cap),
        Mechanism::LapGraph => {
            lapgraph_with_split(graph, budget.epsilon, options.count_share, seed)
        }
    }
}

/// Ceiling on the precision of any edge re-identification attack against
/// an ε-edge-DP model over targets of density `k_c`: `min(1, e^ε·k_c)`.
pub fn precision_bound(epsilon: f64, k_c: f64) -> Result<f64> {
    if !(epsilon >= 0.0) || !(k_c >= 0.0) {
        return Err(Error::Parameter(format!(
            "bound needs non-negative inputs, got ε = {epsilon}, k = {k_c}"
        )));
    }
    Ok((epsilon.exp() * k_c).min(1.0))
}

/// A model trained on a (possibly perturbed) training graph and served
/// over a (possibly perturbed) inference graph. The perturbed graphs are
/// drawn once; queries never consume further budget.
#[derive(Debug, Clone)]
pub struct ServedModel {
    pub train_outcome: TrainOutcome,
    pub training: GraphView,
    pub inference: GraphView,
    /// True inference graph, for ground truth only.
    pub true_inference_graph: Arc<SparseGraph>,
    pub training_provenance: Option<Provenance>,
    pub inference_provenance: Option<Provenance>,
    training_graph: Arc<SparseGraph>,
    blackbox: GcnBlackbox,
}

impl ServedModel {
    pub fn blackbox(&self) -> &GcnBlackbox {
        &self.blackbox
    }

    /// The graph the model was trained on.
    pub fn training_graph(&self) -> &Arc<SparseGraph> {
        &self.training_graph
    }

    /// The graph answering queries.
    pub fn served_graph(&self) -> &Arc<SparseGraph> {
        self.blackbox.private_graph()
    }
}

/// Perturb (when `budget` is given) → train → wrap inference.
///
/// Transductive runs reuse the perturbed training graph for inference.
/// Inductive runs perturb the disjoint inference graph separately, with a
/// seed derived from `perturb_seed`.
pub fn train_and_serve(
    dataset: &Dataset,
    setting: Setting,
    budget: Option<&DpBudget>,
    train_config: &TrainConfig,
    perturb_seed: u64,
    options: &PerturbOptions,
) -> Result<ServedModel> {
    let mut training = dataset.training_view(setting)?;
    let mut inference = dataset.inference_view(setting)?;
    let true_inference_graph = Arc::new(inference.graph.clone());

    let (training_graph, training_provenance) = match budget {
        Some(b) => {
            let p = perturb(&training.graph, b, perturb_seed, options)?;
            (p.graph.clone(), Some(p.provenance))
        }
        None => (Arc::new(training.graph.clone()), None),
    };
    let (served_graph, inference_provenance) = match (setting, budget) {
        (Setting::Transductive, _) => (training_graph.clone(), training_provenance.clone()),
        (Setting::Inductive, Some(b)) => {
            let p = perturb(&inference.graph, b, rng::derive(perturb_seed, 1), options)?;
            (p.graph.clone(), Some(p.provenance))
        }
        (Setting::Inductive, None) => (true_inference_graph.clone(), None),
    };

    let adj = normalize(&training_graph, train_config.norm_kind);
    let outcome = train(
        &training.features,
        &training.supervision,
        &adj,
        train_config,
    )?;
    training.graph = (*training_graph).clone();
    inference.graph = (*served_graph).clone();
    let blackbox = GcnBlackbox::new(Arc::new(outcome.model.clone()), served_graph);
    Ok(ServedModel {
        train_outcome: outcome,
        training,
        inference,
        true_inference_graph,
        training_provenance,
        inference_provenance,
        training_graph,
        blackbox,
    })
}

pub fn dp_train_and_infer(
    dataset: &Dataset,
    setting: Setting,
    budget: &DpBudget,
    train_config: &TrainConfig,
    perturb_seed: u64,
    options: &PerturbOptions,
) -> Result<ServedModel> {
    train_and_serve(
        dataset,
        setting,
        Some(budget),
        train_config,
        perturb_seed,
        options,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_sbm_dataset, SbmDatasetSpec};
    use crate::graph::generate_er;

    fn within_sigma(x: f64, mean: f64, sd: f64, k: f64) -> bool {
        (x - mean).abs() <= k * sd
    }

    #[test]
    fn sampling_rate_closed_form() {
        assert!((edgerand_s_from_eps(1.0) - 0.5379).abs() < 1e-4);
        assert!((edgerand_s_from_eps(3f64.ln()) - 0.5).abs() < 1e-15);
        assert!(edgerand_s_from_eps(20.0) < 1e-8);
        assert!(edgerand_s_from_eps(1e4) > 0.0);
        assert!(edgerand_s_from_eps(1e-12) <= 1.0);
        assert!(edgerand(&SparseGraph::empty(3), 0.0, 1, &MemoryCap::default()).is_err());
    }

    #[test]
    fn huge_budget_preserves_graph() {
        let g = generate_er(60, 0.1, 3).unwrap();
        let p = edgerand(&g, 40.0, 9, &MemoryCap::default()).unwrap();
        assert_eq!(p.graph().as_ref(), &g);
    }

    #[test]
    fn empty_graph_density_is_half_rate() {
        let g = SparseGraph::empty(100);
        let out = edgerand_with_rate(&g, 0.8, 5);
        let sd = (4950.0 * 0.4 * 0.6f64).sqrt();
        assert!(within_sigma(out.edge_count() as f64, 0.4 * 4950.0, sd, 3.0));
    }

    #[test]
    fn sparse_graph_density_matches_expectation() {
        let g = generate_er(100, 0.05, 5).unwrap();
        let k = g.density();
        let expect = edgerand_expected_density(k, 0.8);
        assert!((edgerand_expected_density(0.05, 0.8) - 0.41).abs() < 1e-15);
        let out = edgerand_with_rate(&g, 0.8, 6);
        let sd = (4950.0 * expect * (1.0 - expect)).sqrt();
        assert!(within_sigma(
            out.edge_count() as f64,
            expect * 4950.0,
            sd,
            3.0
        ));
    }

    #[test]
    fn single_cell_flip_rate() {
        let g = SparseGraph::new(2, [(0, 1)]).unwrap();
        let s = edgerand_s_from_eps(1.0);
        let trials = 100_000;
        let flips = (0..trials)
            .filter(|&t| edgerand_with_rate(&g, s, t).edge_count() == 0)
            .count() as f64;
        let p = s / 2.0;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!(within_sigma(flips, trials as f64 * p, sd, 3.0));
    }

    #[test]
    fn memory_cap_refuses_dense_outputs() {
        let g = SparseGraph::empty(200);
        let cap = MemoryCap {
            max_cells: 1000,
            max_density: 0.1,
        };
        assert!(matches!(
            edgerand(&g, 1.0, 0, &cap),
            Err(Error::Resource(_))
        ));
        assert!(edgerand(&g, 12.0, 0, &cap).is_ok());
    }

    #[test]
    fn lapgraph_large_budget_extremes() {
        // The count noise has scale 1/(0.01 ε); at ε = 100 that is Lap(1), so
        // T itself still wobbles. Cells carry noise of scale ~0.01 and the
        // selected cells are always the true ones.
        let k5 = SparseGraph::new(5, (0..5).flat_map(|i| (i + 1..5).map(move |j| (i, j)))).unwrap();
        let mut small_empty = 0;
        for seed in 0..20 {
            let empty = lapgraph(&SparseGraph::empty(30), 100.0, seed).unwrap();
            assert_eq!(
                empty.provenance().edge_target,
                Some(empty.graph().edge_count() as u64)
            );
            small_empty += usize::from(empty.graph().edge_count() <= 2);
            let out = lapgraph(&k5, 100.0, seed).unwrap();
            assert!(out.graph().edges().iter().all(|&(i, j)| k5.has_edge(i, j)));
            if out.provenance().edge_target == Some(10) {
                assert_eq!(out.graph().as_ref(), &k5);
            }
            // with ε₁ = 100 the count is exact
            assert!(
                lapgraph(&SparseGraph::empty(30), 1e4, seed)
                    .unwrap()
                    .graph()
                    .edge_count()
                    <= 2
            );
            assert_eq!(lapgraph(&k5, 1e4, seed).unwrap().graph().as_ref(), &k5);
        }
        // P(T > 2) = e^{-2.5}/2 ≈ 0.04 per run
        assert!(small_empty >= 17, "{small_empty}");
    }

    #[test]
    fn lapgraph_edge_count_is_noisy_target() {
        let g = generate_er(120, 0.1, 2).unwrap();
        for seed in 0..5 {
            let p = lapgraph(&g, 2.0, seed).unwrap();
            let prov = p.provenance();
            assert_eq!(prov.edge_target, Some(p.graph().edge_count() as u64));
            assert!((prov.epsilon_count.unwrap() - 0.02).abs() < 1e-15);
            assert!(
                (prov.epsilon_count.unwrap() + prov.epsilon_cells.unwrap() - 2.0).abs() < 1e-15
            );
        }
    }

    #[test]
    fn perturbation_is_seed_deterministic() {
        let g = generate_er(50, 0.1, 2).unwrap();
        for mech in [Mechanism::EdgeRand, Mechanism::LapGraph] {
            let b = DpBudget::new(mech, 3.0).unwrap();
            let a = perturb(&g, &b, 4, &PerturbOptions::default()).unwrap();
            let c = perturb(&g, &b, 4, &PerturbOptions::default()).unwrap();
            assert_eq!(a.graph(), c.graph());
            assert_eq!(a.provenance(), c.provenance());
            let d = perturb(&g, &b, 5, &PerturbOptions::default()).unwrap();
            assert_ne!(a.provenance().token, d.provenance().token);
        }
    }

    #[test]
    fn bound_arithmetic() {
        assert!((precision_bound(2f64.ln(), 0.01).unwrap() - 0.02).abs() < 1e-10);
        assert_eq!(precision_bound(0.0, 0.013).unwrap(), 0.013);
        assert_eq!(precision_bound(10.0, 0.01).unwrap(), 1.0);
        assert!(precision_bound(-1.0, 0.1).is_err());
    }

    #[test]
    fn sidecar_is_written() {
        let g = generate_er(20, 0.2, 2).unwrap();
        let p = lapgraph(&g, 1.0, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.edges");
        p.save(&path).unwrap();
        let side: Provenance = serde_json::from_str(
            &std::fs::read_to_string(PerturbedGraph::sidecar_path(&path)).unwrap(),
        )
        .unwrap();
        assert_eq!(&side, p.provenance());
        assert_eq!(SparseGraph::load_edge_list(&path).unwrap(), **p.graph());
    }

    fn tiny_dataset() -> Dataset {
        generate_sbm_dataset(
            &SbmDatasetSpec {
                block_sizes: vec![12, 12],
                ..SbmDatasetSpec::default()
            },
            3,
        )
        .unwrap()
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            epochs: 5,
            hidden_dims: vec![8],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn negligible_noise_pipeline_matches_plain_training() {
        let ds = tiny_dataset();
        let cells = cell_count(24) as f64;
        let s = edgerand_s_from_eps(20.0);
        assert!(s * cells < 0.1);
        let b = DpBudget::new(Mechanism::EdgeRand, 20.0).unwrap();
        let cfg = quick_config();
        let dp = dp_train_and_infer(
            &ds,
            Setting::Transductive,
            &b,
            &cfg,
            1,
            &PerturbOptions::default(),
        )
        .unwrap();
        let plain = train_and_serve(
            &ds,
            Setting::Transductive,
            None,
            &cfg,
            1,
            &PerturbOptions::default(),
        )
        .unwrap();
        assert_eq!(dp.training_graph().as_ref(), ds.graph());
        assert_eq!(dp.train_outcome.model, plain.train_outcome.model);
    }

    #[test]
    fn transductive_serves_the_training_graph() {
        let ds = tiny_dataset();
        let b = DpBudget::new(Mechanism::LapGraph, 2.0).unwrap();
        let run = dp_train_and_infer(
            &ds,
            Setting::Transductive,
            &b,
            &quick_config(),
            7,
            &PerturbOptions::default(),
        )
        .unwrap();
        assert!(Arc::ptr_eq(run.training_graph(), run.served_graph()));
        assert_eq!(run.training_provenance, run.inference_provenance);

        let ind = dp_train_and_infer(
            &ds,
            Setting::Inductive,
            &b,
            &quick_config(),
            7,
            &PerturbOptions::default(),
        )
        .unwrap();
        assert_ne!(
            ind.training_provenance.as_ref().unwrap().token,
            ind.inference_provenance.as_ref().unwrap().token
        );
        // repeated queries see the same fixed graph
        let before = ind.served_graph().clone();
        use crate::blackbox::InferenceApi;
        let nodes: Vec<usize> = (0..ind.inference.graph.n()).collect();
        let a = ind
            .blackbox()
            .query(&nodes, &ind.inference.features)
            .unwrap();
        let c = ind
            .blackbox()
            .query(&nodes, &ind.inference.features)
            .unwrap();
        assert_eq!(a, c);
        assert!(Arc::ptr_eq(&before, ind.served_graph()));
    }
}
