//! Adjacency normalizations fed to the GCN propagation step.
//!
//! With `A` the 0/1 adjacency and `D` its degree diagonal:
//!
//! | kind            | matrix                                   |
//! |-----------------|------------------------------------------|
//! | `FirstOrderGcn` | `I + D^-1/2 A D^-1/2`                    |
//! | `AugNormAdj`    | `(D+I)^-1/2 (A+I) (D+I)^-1/2`            |
//! | `BingGeNormAdj` | `I + (D+I)^-1/2 (A+I) (D+I)^-1/2`        |
//! | `AugRWalk`      | `(D+I)^-1 (A+I)`                         |
//!
//! For `FirstOrderGcn` a zero degree maps to a zero `D^-1/2` entry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "FirstOrderGCN")]
    FirstOrderGcn,
    AugNormAdj,
    BingGeNormAdj,
    AugRWalk,
}

impl NormKind {
    pub const ALL: [NormKind; 4] = [
        NormKind::FirstOrderGcn,
        NormKind::AugNormAdj,
        NormKind::BingGeNormAdj,
        NormKind::AugRWalk,
    ];

    pub(crate) fn code(self) -> u8 {
        match self {
            NormKind::FirstOrderGcn => 0,
            NormKind::AugNormAdj => 1,
            NormKind::BingGeNormAdj => 2,
            NormKind::AugRWalk => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormKind::FirstOrderGcn => "FirstOrderGCN",
            NormKind::AugNormAdj => "AugNormAdj",
            NormKind::BingGeNormAdj => "BingGeNormAdj",
            NormKind::AugRWalk => "AugRWalk",
        })
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown normalization {s:?}")))
    }
}

/// Normalized adjacency in CSR form. Column indices within a row are
/// ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    kind: NormKind,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

pub fn normalize(graph: &SparseGraph, kind: NormKind) -> NormalizedAdjacency {
    let n = graph.n();
    let deg: Vec<f64> = graph.degrees().into_iter().map(|d| d as f64).collect();
    let inv_sqrt = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(2 * graph.edge_count() + n);
    let mut vals = Vec::with_capacity(2 * graph.edge_count() + n);
    row_ptr.push(0);
    for i in 0..n {
        let nb = graph.neighbors(i);
        // neighbors are sorted; splice the diagonal in at its ordered slot
        let split = nb.partition_point(|&j| j < i);
        let entry = |j: usize| -> f64 {
            let off = j != i;
            match kind {
                NormKind::FirstOrderGcn => {
                    if off {
                        inv_sqrt(deg[i]) * inv_sqrt(deg[j])
                    } else {
                        1.0
                    }
                }
                NormKind::AugNormAdj | NormKind::BingGeNormAdj => {
                    let v = 1.0 / ((deg[i] + 1.0) * (deg[j] + 1.0)).sqrt();
                    if !off && kind == NormKind::BingGeNormAdj {
                        1.0 + v
                    } else {
                        v
                    }
                }
                NormKind::AugRWalk => 1.0 / (deg[i] + 1.0),
            }
        };
        for &j in nb[..split]
            .iter()
            .chain([i].iter())
            .chain(nb[split..].iter())
        {
            cols.push(j);
            vals.push(entry(j));
        }
        row_ptr.push(cols.len());
    }
    NormalizedAdjacency {
        n,
        kind,
        row_ptr,
        cols,
        vals,
    }
}

impl NormalizedAdjacency {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored `(column, value)` entries of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    /// Entry `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `Â * h`. Each output row sums only over the stored entries of that row.
    pub fn spmm(&self, h: &Matrix) -> Result<Matrix> {
        if h.rows() != self.n {
            return Err(Error::Shape(format!(
                "adjacency is {n}x{n} but right operand has {} rows",
                h.rows(),
                n = self.n
            )));
        }
        let mut out = Matrix::zeros(self.n, h.cols());
        for i in 0..self.n {
            let o = out.row_mut(i);
            for (j, a) in self.row(i) {
                for (x, &y) in o.iter_mut().zip(h.row(j)) {
                    *x += a * y;
                }
            }
        }
        Ok(out)
    }

    /// `Âᵀ * g`, used when back-propagating through the propagation step.
    pub fn spmm_transpose(&self, g: &Matrix) -> Result<Matrix> {
        if g.rows() != self.n {
            return Err(Error::Shape(format!(
                "adjacency is {n}x{n} but right operand has {} rows",
                g.rows(),
                n = self.n
            )));
        }
        let mut out = Matrix::zeros(self.n, g.cols());
        for i in 0..self.n {
            let gi = g.row(i);
            for (j, a) in self.row(i) {
                for (x, &y) in out.row_mut(j).iter_mut().zip(gi) {
                    *x += a * y;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;
    use proptest::prelude::*;

    fn edge01() -> SparseGraph {
        SparseGraph::new(2, [(0, 1)]).unwrap()
    }

    #[test]
    fn empty_graph_random_walk_is_identity() {
        let a = normalize(&SparseGraph::empty(3), NormKind::AugRWalk);
        assert_eq!(a.to_dense(), Matrix::identity(3));
    }

    #[test]
    fn single_edge_hand_values() {
        let a = normalize(&edge01(), NormKind::AugNormAdj).to_dense();
        assert!(a.as_slice().iter().all(|&x| x == 0.5));
        let b = normalize(&edge01(), NormKind::BingGeNormAdj).to_dense();
        assert_eq!(b.as_slice(), &[1.5, 0.5, 0.5, 1.5]);
        let f = normalize(&edge01(), NormKind::FirstOrderGcn).to_dense();
        assert_eq!(f.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        let r = normalize(&edge01(), NormKind::AugRWalk).to_dense();
        assert_eq!(r.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn first_order_isolated_node_keeps_unit_diagonal() {
        let g = SparseGraph::new(3, [(0, 1)]).unwrap();
        let f = normalize(&g, NormKind::FirstOrderGcn);
        assert_eq!(f.get(2, 2), 1.0);
        assert_eq!(f.row(2).count(), 1);
    }

    #[test]
    fn transpose_product_matches_dense() {
        let g = generate_er(12, 0.3, 5).unwrap();
        let a = normalize(&g, NormKind::AugRWalk);
        let h = Matrix::from_vec(12, 3, (0..36).map(|x| (x as f64).sin()).collect()).unwrap();
        let dense = a.to_dense();
        let expect = dense.t_matmul(&h).unwrap();
        let got = a.spmm_transpose(&h).unwrap();
        for (x, y) in expect.as_slice().iter().zip(got.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
        let expect = dense.matmul(&h).unwrap();
        let got = a.spmm(&h).unwrap();
        for (x, y) in expect.as_slice().iter().zip(got.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kind_names_parse() {
        for k in NormKind::ALL {
            assert_eq!(k.to_string().parse::<NormKind>().unwrap(), k);
            assert_eq!(NormKind::from_code(k.code()), Some(k));
        }
        assert!("bogus".parse::<NormKind>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn random_walk_rows_sum_to_one(n in 1usize..30, k in 0.0f64..1.0, seed in any::<u64>()) {
            let g = if n >= 2 { generate_er(n, k, seed).unwrap() } else { SparseGraph::empty(n) };
            let a = normalize(&g, NormKind::AugRWalk);
            for i in 0..n {
                let s: f64 = a.row(i).map(|(_, v)| v).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn symmetric_kinds_are_symmetric(n in 2usize..25, k in 0.0f64..1.0, seed in any::<u64>()) {
            let g = generate_er(n, k, seed).unwrap();
            let aug = normalize(&g, NormKind::AugNormAdj).to_dense();
            let bg = normalize(&g, NormKind::BingGeNormAdj).to_dense();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((aug[(i, j)] - aug[(j, i)]).abs() <= 1e-12);
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((bg[(i, j)] - (id + aug[(i, j)])).abs() <= 1e-12);
                    // pattern stays within A + I
                    if i != j && !g.has_edge(i, j) {
                        prop_assert_eq!(aug[(i, j)], 0.0);
                    }
                }
            }
        }
    }
}
