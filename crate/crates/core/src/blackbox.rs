//! The query-only inference boundary.
//!
//! An attacker submits node ids and their features and gets logits back.
//! The private adjacency never leaves this module: each query builds the
//! subgraph induced on the submitted nodes, normalizes it the way the model
//! was trained, and runs an eval-mode forward pass.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gcn::{forward, GcnModel, Mode, PredictionMatrix};
use crate::graph::SparseGraph;
use crate::matrix::Matrix;
use crate::normalize::normalize;

/// Anything that answers node-set queries with logits.
pub trait InferenceApi: Sync {
    fn query(&self, nodes: &[usize], features: &Matrix) -> Result<PredictionMatrix>;
}

impl<T: InferenceApi + Send + ?Sized> InferenceApi for Arc<T> {
    fn query(&self, nodes: &[usize], features: &Matrix) -> Result<PredictionMatrix> {
        (**self).query(nodes, features)
    }
}

impl<T: InferenceApi + ?Sized> InferenceApi for &T {
    fn query(&self, nodes: &[usize], features: &Matrix) -> Result<PredictionMatrix> {
        (**self).query(nodes, features)
    }
}

pub fn blackbox_query(
    model: &GcnModel,
    private_graph: &SparseGraph,
    query_nodes: &[usize],
    query_features: &Matrix,
) -> Result<PredictionMatrix> {
    if query_features.rows() != query_nodes.len() {
        return Err(Error::Query(format!(
            "{} feature rows for {} query nodes",
            query_features.rows(),
            query_nodes.len()
        )));
    }
    let sub = private_graph.induced_subgraph(query_nodes)?;
    let adj = normalize(&sub, model.norm_kind());
    forward(model, &adj, query_features, Mode::Eval)
}

/// A trained model serving queries against a fixed private graph.
#[derive(Debug, Clone)]
pub struct GcnBlackbox {
    model: Arc<GcnModel>,
    graph: Arc<SparseGraph>,
}

impl GcnBlackbox {
    pub fn new(model: Arc<GcnModel>, graph: Arc<SparseGraph>) -> Self {
        GcnBlackbox { model, graph }
    }

    pub fn model(&self) -> &GcnModel {
        &self.model
    }

    /// Number of nodes addressable by queries.
    pub fn node_count(&self) -> usize {
        self.graph.n()
    }

    /// The graph behind the boundary. Evaluation code uses this for ground
    /// truth; attacks only see `query`.
    pub fn private_graph(&self) -> &Arc<SparseGraph> {
        &self.graph
    }
}

impl InferenceApi for GcnBlackbox {
    fn query(&self, nodes: &[usize], features: &Matrix) -> Result<PredictionMatrix> {
        blackbox_query(&self.model, &self.graph, nodes, features)
    }
}

/// Wraps an API and counts queries.
#[derive(Debug)]
pub struct CountingApi<A> {
    inner: A,
    count: AtomicUsize,
}

impl<A> CountingApi<A> {
    pub fn new(inner: A) -> Self {
        CountingApi {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.count.store(0, Ordering::SeqCst);
    }
}

impl<A: InferenceApi> InferenceApi for CountingApi<A> {
    fn query(&self, nodes: &[usize], features: &Matrix) -> Result<PredictionMatrix> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.query(nodes, features)
    }
}
