//! Node-classification datasets: graph, features, labels and splits, plus
//! the file layout used by `gen` and the loaders.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{generate_sbm, SparseGraph};
use crate::matrix::Matrix;
use crate::rng::{self, stream};

pub const GRAPH_FILE: &str = "graph.edges";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";
pub const SPLITS_FILE: &str = "splits.txt";

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Labels plus the node indices whose labels drive the loss and model
/// selection. Indices are local to the graph the model is trained on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Supervision {
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub num_classes: usize,
}

/// Whether training and inference share a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Train and infer on the full graph.
    Transductive,
    /// Train on the subgraph induced by train ∪ val, infer on the subgraph
    /// induced by the test nodes. The two graphs share no edges.
    #[default]
    Inductive,
}

/// A graph restricted to some node subset, relabeled `0..len`.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub graph: SparseGraph,
    /// Original node id of each local node.
    pub node_ids: Vec<usize>,
    pub features: Matrix,
    pub supervision: Supervision,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    graph: SparseGraph,
    features: Matrix,
    labels: Vec<usize>,
    splits: Splits,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        graph: SparseGraph,
        features: Matrix,
        labels: Vec<usize>,
        splits: Splits,
        num_classes: usize,
    ) -> Result<Self> {
        let n = graph.n();
        if features.rows() != n {
            return Err(Error::Input(format!(
                "feature matrix has {} rows for {n} nodes",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(Error::Input(format!(
                "{} labels for {n} nodes",
                labels.len()
            )));
        }
        if let Some((v, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Input(format!(
                "node {v} has label {l} but there are {num_classes} classes"
            )));
        }
        let mut seen = vec![false; n];
        for (name, part) in [
            ("train", &splits.train),
            ("val", &splits.val),
            ("test", &splits.test),
        ] {
            for &v in part {
                if v >= n {
                    return Err(Error::Input(format!("{name} split names node {v} >= {n}")));
                }
                if std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Input(format!(
                        "node {v} appears more than once across splits"
                    )));
                }
            }
        }
        Ok(Dataset {
            graph,
            features,
            labels,
            splits,
            num_classes,
        })
    }

    pub fn graph(&self) -> &SparseGraph {
        &self.graph
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Same features, labels and splits on a different graph over the same
    /// node set.
    pub fn with_graph(&self, graph: SparseGraph) -> Result<Dataset> {
        Dataset::new(
            graph,
            self.features.clone(),
            self.labels.clone(),
            self.splits.clone(),
            self.num_classes,
        )
    }

    fn view(&self, nodes: Vec<usize>, train: &[usize], val: &[usize]) -> Result<GraphView> {
        let mut local = vec![usize::MAX; self.graph.n()];
        for (p, &v) in nodes.iter().enumerate() {
            local[v] = p;
        }
        let remap = |ids: &[usize]| -> Vec<usize> {
            ids.iter()
                .map(|&v| local[v])
                .filter(|&p| p != usize::MAX)
                .collect()
        };
        Ok(GraphView {
            graph: self.graph.induced_subgraph(&nodes)?,
            features: self.features.select_rows(&nodes),
            supervision: Supervision {
                labels: nodes.iter().map(|&v| self.labels[v]).collect(),
                train: remap(train),
                val: remap(val),
                num_classes: self.num_classes,
            },
            node_ids: nodes,
        })
    }

    /// The graph, features and supervision the model owner trains on.
    pub fn training_view(&self, setting: Setting) -> Result<GraphView> {
        let nodes = match setting {
            Setting::Transductive => (0..self.graph.n()).collect(),
            Setting::Inductive => {
                let mut v: Vec<usize> = self
                    .splits
                    .train
                    .iter()
                    .chain(&self.splits.val)
                    .copied()
                    .collect();
                v.sort_unstable();
                v
            }
        };
        self.view(nodes, &self.splits.train, &self.splits.val)
    }

    /// The private graph served by the inference API. Its supervision
    /// carries the test nodes in the `val` slot for utility measurement.
    pub fn inference_view(&self, setting: Setting) -> Result<GraphView> {
        let nodes = match setting {
            Setting::Transductive => (0..self.graph.n()).collect(),
            Setting::Inductive => {
                let mut v = self.splits.test.clone();
                v.sort_unstable();
                v
            }
        };
        self.view(nodes, &[], &self.splits.test)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.graph.save_edge_list(&dir.join(GRAPH_FILE))?;
        save_features(&self.features, &dir.join(FEATURES_FILE))?;
        let labels: String = self.labels.iter().map(|l| format!("{l}\n")).collect();
        write_file(&dir.join(LABELS_FILE), labels.as_bytes())?;
        let line = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let splits = format!(
            "{}\n{}\n{}\n",
            line(&self.splits.train),
            line(&self.splits.val),
            line(&self.splits.test)
        );
        write_file(&dir.join(SPLITS_FILE), splits.as_bytes())
    }

    /// Loads the four-file layout. The class count is one past the largest
    /// label.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let graph = SparseGraph::load_edge_list(&dir.join(GRAPH_FILE))?;
        let features = load_features(&dir.join(FEATURES_FILE))?;
        let labels_path = dir.join(LABELS_FILE);
        let text = read_file(&labels_path)?;
        let mut labels = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            labels.push(
                t.parse()
                    .map_err(|_| Error::parse(&labels_path, i + 1, format!("bad label {t:?}")))?,
            );
        }
        let splits_path = dir.join(SPLITS_FILE);
        let text = read_file(&splits_path)?;
        let mut parts: Vec<Vec<usize>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ids = line
                .split_whitespace()
                .map(|t| {
                    t.parse().map_err(|_| {
                        Error::parse(&splits_path, i + 1, format!("bad node id {t:?}"))
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            parts.push(ids);
        }
        if parts.len() != 3 {
            return Err(Error::parse(
                &splits_path,
                parts.len(),
                format!("expected 3 lines (train/val/test), found {}", parts.len()),
            ));
        }
        let test = parts.pop().unwrap_or_default();
        let val = parts.pop().unwrap_or_default();
        let train = parts.pop().unwrap_or_default();
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Dataset::new(
            graph,
            features,
            labels,
            Splits { train, val, test },
            num_classes,
        )
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_features(features: &Matrix, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for i in 0..features.rows() {
        w.write_record(features.row(i).iter().map(|x| x.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, i + 1, format!("bad number {t:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| Error::parse(path, rows.len(), e.to_string()))
}

/// Community-structured synthetic dataset: an SBM whose blocks are the
/// classes, with Gaussian features drawn around a per-class centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmDatasetSpec {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of the class centroids; per-node noise has unit
    /// variance.
    pub feature_signal: f64,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for SbmDatasetSpec {
    fn default() -> Self {
        SbmDatasetSpec {
            block_sizes: vec![125; 4],
            p_in: 0.2,
            p_out: 0.01,
            feature_dim: 16,
            feature_signal: 0.5,
            train_frac: 0.3,
            val_frac: 0.2,
        }
    }
}

pub fn generate_sbm_dataset(spec: &SbmDatasetSpec, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&spec.train_frac)
        || !(0.0..=1.0).contains(&spec.val_frac)
        || spec.train_frac + spec.val_frac > 1.0
    {
        return Err(Error::Parameter(format!(
            "split fractions train = {}, val = {} do not fit in [0, 1]",
            spec.train_frac, spec.val_frac
        )));
    }
    let (graph, labels) = generate_sbm(&spec.block_sizes, spec.p_in, spec.p_out, seed)?;
    let n = graph.n();
    let c = spec.block_sizes.len();
    let d = spec.feature_dim;

    let mut frng = rng::seeded(seed, stream::FEATURES);
    let centroids: Vec<f64> = (0..c * d)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut frng);
            spec.feature_signal * z
        })
        .collect::<Vec<f64>>();
    let mut features = Matrix::zeros(n, d);
    for v in 0..n {
        let base = &centroids[labels[v] * d..(labels[v] + 1) * d];
        for (x, &mu) in features.row_mut(v).iter_mut().zip(base) {
            let z: f64 = StandardNormal.sample(&mut frng);
            *x = mu + z;
        }
    }

    let mut srng = rng::seeded(seed, stream::SPLITS);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = srng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = (spec.train_frac * n as f64).round() as usize;
    let n_val = ((spec.val_frac * n as f64).round() as usize).min(n - n_train);
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Dataset::new(graph, features, labels, Splits { train, val, test }, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let spec = SbmDatasetSpec {
            block_sizes: vec![10, 10],
            ..SbmDatasetSpec::default()
        };
        generate_sbm_dataset(&spec, 4).unwrap()
    }

    #[test]
    fn rejects_broken_invariants() {
        let g = SparseGraph::empty(3);
        let x = Matrix::zeros(3, 2);
        let s = Splits {
            train: vec![0],
            val: vec![1],
            test: vec![2],
        };
        assert!(Dataset::new(g.clone(), x.clone(), vec![0, 1, 2], s.clone(), 2).is_err());
        assert!(Dataset::new(g.clone(), Matrix::zeros(2, 2), vec![0, 1, 1], s.clone(), 2).is_err());
        let overlap = Splits {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert!(Dataset::new(g.clone(), x.clone(), vec![0, 1, 1], overlap, 2).is_err());
        assert!(Dataset::new(g, x, vec![0, 1, 1], s, 2).is_ok());
    }

    #[test]
    fn save_load_round_trip() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.graph(), ds.graph());
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.splits(), ds.splits());
        assert_eq!(back.num_classes(), 2);
    }

    #[test]
    fn loader_reports_line_numbers() {
        let ds = small();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        std::fs::write(dir.path().join(LABELS_FILE), "0\n1\nx\n").unwrap();
        let err = Dataset::load(dir.path()).unwrap_err().to_string();
        assert!(err.ends_with("labels.txt:3: bad label \"x\""), "{err}");
    }

    #[test]
    fn views_partition_the_nodes() {
        let ds = small();
        let train = ds.training_view(Setting::Inductive).unwrap();
        let inf = ds.inference_view(Setting::Inductive).unwrap();
        assert_eq!(train.node_ids.len() + inf.node_ids.len(), 20);
        assert_eq!(train.supervision.train.len(), ds.splits().train.len());
        assert_eq!(inf.supervision.val.len(), ds.splits().test.len());
        for (p, &v) in inf.node_ids.iter().enumerate() {
            assert_eq!(inf.features.row(p), ds.features().row(v));
            assert_eq!(inf.supervision.labels[p], ds.labels()[v]);
        }
        let full = ds.training_view(Setting::Transductive).unwrap();
        assert_eq!(&full.graph, ds.graph());
        assert_eq!(full.supervision.train, ds.splits().train);
    }
}
