//! Edge-privacy lab for graph convolutional networks.
//!
//! Train a GCN, expose it through a query-only inference API, re-identify
//! private edges from its answers, and measure how edge-level differential
//! privacy on the input graph trades model utility against attack success.

pub mod blackbox;
pub mod dataset;
pub mod dpgraph;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod graph;
pub mod linkteller;
pub mod matrix;
pub mod metrics;
pub mod normalize;
pub mod rng;

pub use error::{Error, Result};
