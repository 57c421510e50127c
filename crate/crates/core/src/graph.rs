//! Undirected simple graphs, synthetic generators and degree-stratified
//! node sampling.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

/// Symmetric 0/1 adjacency stored as sorted unordered pairs `(i, j)` with
/// `i < j`, plus a sorted neighbor list per node.
#[derive(Clone, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl fmt::Debug for SparseGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SparseGraph")
            .field("n", &self.n)
            .field("m", &self.edges.len())
            .finish()
    }
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            edges: Vec::new(),
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from unordered pairs in any orientation. Self-loops,
    /// out-of-range endpoints and repeated pairs are rejected.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pairs = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::Input(format!("self-loop on node {a}")));
            }
            pairs.push((a.min(b), a.max(b)));
        }
        pairs.sort_unstable();
        if let Some(w) = pairs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Input(format!(
                "edge ({}, {}) listed twice",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted(n, pairs))
    }

    /// `pairs` must be sorted, unique, loop-free and oriented `i < j`.
    pub(crate) fn from_sorted(n: usize, pairs: Vec<(usize, usize)>) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(pairs.iter().all(|&(i, j)| i < j && j < n));
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in &pairs {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        SparseGraph {
            n,
            edges: pairs,
            neighbors,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Number of unordered node pairs, `n(n-1)/2`.
    pub fn cell_count(&self) -> usize {
        cell_count(self.n)
    }

    /// `2m / (n(n-1))`; zero for graphs with fewer than two nodes.
    pub fn density(&self) -> f64 {
        let cells = self.cell_count();
        if cells == 0 {
            0.0
        } else {
            self.edges.len() as f64 / cells as f64
        }
    }

    /// Subgraph induced on `nodes`, relabeled so node `nodes[p]` becomes `p`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<SparseGraph> {
        let mut position = vec![usize::MAX; self.n];
        for (p, &v) in nodes.iter().enumerate() {
            if v >= self.n {
                return Err(Error::Query(format!(
                    "node {v} out of range for a graph of {} nodes",
                    self.n
                )));
            }
            if position[v] != usize::MAX {
                return Err(Error::Query(format!("node {v} listed twice")));
            }
            position[v] = p;
        }
        let mut pairs = Vec::new();
        for (p, &v) in nodes.iter().enumerate() {
            for &w in &self.neighbors[v] {
                let q = position[w];
                if q != usize::MAX && p < q {
                    pairs.push((p, q));
                }
            }
        }
        pairs.sort_unstable();
        Ok(Self::from_sorted(nodes.len(), pairs))
    }

    /// Breadth-first hop distances from `source`; `None` when unreachable.
    pub fn hop_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let d = dist[v].unwrap_or(0);
            for &w in &self.neighbors[v] {
                if dist[w].is_none() {
                    dist[w] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.n, self.edges.len())?;
        for &(i, j) in &self.edges {
            writeln!(out, "{i} {j}")?;
        }
        Ok(())
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf)
            .map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Parses the edge-list format: a `n m` header, then `m` lines `i j`
    /// with `i < j`. `origin` only labels diagnostics.
    pub fn read_edge_list<R: BufRead>(input: R, origin: &Path) -> Result<SparseGraph> {
        let mut lines = input.lines().enumerate();
        let mut next_line = || -> Result<Option<(usize, String)>> {
            for (idx, line) in lines.by_ref() {
                let line = line.map_err(|e| Error::io(origin, e))?;
                if !line.trim().is_empty() {
                    return Ok(Some((idx + 1, line)));
                }
            }
            Ok(None)
        };
        let (hline, header) =
            next_line()?.ok_or_else(|| Error::parse(origin, 1, "missing `n m` header"))?;
        let (n, m) = parse_pair(&header).ok_or_else(|| {
            Error::parse(origin, hline, format!("expected `n m`, found {header:?}"))
        })?;
        let mut pairs = Vec::with_capacity(m);
        let mut last = None;
        while let Some((lno, line)) = next_line()? {
            let (i, j) = parse_pair(&line).ok_or_else(|| {
                Error::parse(origin, lno, format!("expected `i j`, found {line:?}"))
            })?;
            if i >= j {
                return Err(Error::parse(
                    origin,
                    lno,
                    format!("need i < j, got {i} {j}"),
                ));
            }
            if j >= n {
                return Err(Error::parse(origin, lno, format!("node {j} >= n = {n}")));
            }
            pairs.push((i, j));
            last = Some(lno);
        }
        if pairs.len() != m {
            return Err(Error::parse(
                origin,
                last.unwrap_or(hline),
                format!("header promises {m} edges, found {}", pairs.len()),
            ));
        }
        SparseGraph::new(n, pairs)
    }

    pub fn load_edge_list(path: &Path) -> Result<SparseGraph> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_edge_list(std::io::BufReader::new(file), path)
    }
}

fn parse_pair(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((a, b))
}

pub fn cell_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("{name} = {p} is not in [0, 1]")));
    }
    Ok(())
}

/// Erdős–Rényi G(n, k): every unordered pair independently with probability `k`.
pub fn generate_er(n: usize, k: f64, seed: u64) -> Result<SparseGraph> {
    check_probability("density", k)?;
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 nodes, got {n}")));
    }
    let mut rng = rng::seeded(seed, stream::GRAPH);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < k {
                pairs.push((i, j));
            }
        }
    }
    Ok(SparseGraph::from_sorted(n, pairs))
}

/// Stochastic block model. Nodes are numbered block by block; the returned
/// vector holds each node's block index.
pub fn generate_sbm(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(SparseGraph, Vec<usize>)> {
    if block_sizes.is_empty() {
        return Err(Error::Parameter("block list is empty".into()));
    }
    if block_sizes.contains(&0) {
        return Err(Error::Parameter("block sizes must be positive".into()));
    }
    check_probability("p_in", p_in)?;
    check_probability("p_out", p_out)?;
    if p_out > p_in {
        return Err(Error::Parameter(format!(
            "p_out = {p_out} exceeds p_in = {p_in}"
        )));
    }
    let blocks: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = blocks.len();
    let mut rng = rng::seeded(seed, stream::GRAPH);
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if blocks[i] == blocks[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                pairs.push((i, j));
            }
        }
    }
    Ok((SparseGraph::from_sorted(n, pairs), blocks))
}

/// Degree constraint for target-node sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "threshold", rename_all = "lowercase")]
pub enum Stratum {
    /// Degree at most the threshold.
    Low(usize),
    Unconstrained,
    /// Degree at least the threshold.
    High(usize),
}

impl Stratum {
    pub fn admits(&self, degree: usize) -> bool {
        match *self {
            Stratum::Low(d) => degree <= d,
            Stratum::Unconstrained => true,
            Stratum::High(d) => degree >= d,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Stratum::Low(_) => "low",
            Stratum::Unconstrained => "unconstrained",
            Stratum::High(_) => "high",
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stratum::Low(d) => write!(f, "low({d})"),
            Stratum::Unconstrained => write!(f, "unconstrained"),
            Stratum::High(d) => write!(f, "high({d})"),
        }
    }
}

/// Uniform sample without replacement of `count` nodes admitted by
/// `stratum`, returned in ascending order.
pub fn degree_stratified_sample(
    graph: &SparseGraph,
    stratum: Stratum,
    count: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut eligible: Vec<usize> = (0..graph.n())
        .filter(|&v| stratum.admits(graph.degree(v)))
        .collect();
    if eligible.len() < count {
        return Err(Error::Sampling {
            stratum: stratum.to_string(),
            needed: count,
            available: eligible.len(),
        });
    }
    let mut rng = rng::seeded(seed, stream::SAMPLE);
    // partial Fisher-Yates
    for i in 0..count {
        let j = rng.random_range(i..eligible.len());
        eligible.swap(i, j);
    }
    eligible.truncate(count);
    eligible.sort_unstable();
    Ok(eligible)
}

/// Largest `d_low` and smallest `d_high` such that each degree stratum
/// still admits at least `min_eligible` nodes.
pub fn stratum_thresholds(graph: &SparseGraph, min_eligible: usize) -> Result<(usize, usize)> {
    let n = graph.n();
    if min_eligible == 0 || min_eligible > n {
        return Err(Error::Parameter(format!(
            "cannot guarantee {min_eligible} eligible nodes out of {n}"
        )));
    }
    let mut deg = graph.degrees();
    deg.sort_unstable();
    Ok((deg[min_eligible - 1], deg[n - min_eligible]))
}
