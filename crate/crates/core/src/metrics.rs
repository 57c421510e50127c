//! Attack metrics over node pairs and model-utility metrics over node
//! labels.

use serde::{Deserialize, Serialize};

use crate::blackbox::InferenceApi;
use crate::error::{Error, Result};
use crate::graph::{cell_count, SparseGraph};
use crate::linkteller::{AttackReport, PairScore};
use crate::matrix::Matrix;

/// True edges among a set of target nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGroundTruth {
    center: Vec<usize>,
    edges: Vec<(usize, usize)>,
}

impl PairGroundTruth {
    pub fn from_graph(graph: &SparseGraph, center: &[usize]) -> Result<Self> {
        let mut c = center.to_vec();
        c.sort_unstable();
        if c.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Input("target nodes contain duplicates".into()));
        }
        if let Some(&v) = c.iter().find(|&&v| v >= graph.n()) {
            return Err(Error::Input(format!("target node {v} is not in the graph")));
        }
        let mut edges = Vec::new();
        for (a, &u) in c.iter().enumerate() {
            for &v in &c[a + 1..] {
                if graph.has_edge(u, v) {
                    edges.push((u, v));
                }
            }
        }
        Ok(PairGroundTruth { center: c, edges })
    }

    pub fn center(&self) -> &[usize] {
        &self.center
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn pair_count(&self) -> usize {
        cell_count(self.center.len())
    }

    /// `k^(C) = 2|E_C| / (n_C (n_C - 1))`.
    pub fn density(&self) -> f64 {
        match self.pair_count() {
            0 => 0.0,
            p => self.edges.len() as f64 / p as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    pub true_positives: usize,
    pub predicted: usize,
    pub actual: usize,
    /// No true edges among the targets; recall was set to 0.
    pub no_true_edges: bool,
}

/// Precision, recall and F1 of the predicted edge set. Zero denominators
/// give 0.
pub fn attack_metrics(report: &AttackReport, truth: &PairGroundTruth) -> Result<AttackMetrics> {
    if report.center_nodes != truth.center {
        return Err(Error::Input(
            "report and ground truth cover different target sets".into(),
        ));
    }
    let tp = report
        .predicted_edges
        .iter()
        .filter(|&&(u, v)| truth.is_edge(u, v))
        .count();
    let predicted = report.predicted_edges.len();
    let actual = truth.edges.len();
    let precision = if predicted == 0 {
        0.0
    } else {
        tp as f64 / predicted as f64
    };
    let recall = if actual == 0 {
        0.0
    } else {
        tp as f64 / actual as f64
    };
    Ok(AttackMetrics {
        precision,
        recall,
        f1: harmonic_mean(precision, recall),
        auc: None,
        true_positives: tp,
        predicted,
        actual,
        no_true_edges: actual == 0,
    })
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// ROC-AUC of pair scores against edge labels: the Mann-Whitney statistic
/// with half credit for ties, computed from average ranks.
pub fn attack_auc(scores: &[PairScore], truth: &PairGroundTruth) -> Result<f64> {
    if scores.len() != truth.pair_count() {
        return Err(Error::Input(format!(
            "{} scores for {} target pairs",
            scores.len(),
            truth.pair_count()
        )));
    }
    let mut seen = std::collections::HashSet::with_capacity(scores.len());
    for s in scores {
        let key = (s.u.min(s.v), s.u.max(s.v));
        if s.u == s.v
            || truth.center.binary_search(&s.u).is_err()
            || truth.center.binary_search(&s.v).is_err()
            || !seen.insert(key)
        {
            return Err(Error::Input(format!(
                "pair ({}, {}) is not a distinct target pair",
                s.u, s.v
            )));
        }
    }
    let labels: Vec<bool> = scores.iter().map(|s| truth.is_edge(s.u, s.v)).collect();
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    auc_from_labels(&values, &labels)
}

pub fn auc_from_labels(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of 1-based average ranks of positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg * pos_in_group as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeBin {
    pub label: String,
    pub count: usize,
    pub micro_f1: f64,
    pub rare_class_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub accuracy: f64,
    pub micro_f1: f64,
    /// Least frequent true label in the split (smallest label on ties).
    pub rare_class: usize,
    pub rare_class_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub degree_bins: Vec<DegreeBin>,
}

/// Bin edges: `0`, `1-5`, `6-10`, …, `46-50`, `51+`.
pub fn degree_bin(degree: usize) -> usize {
    match degree {
        0 => 0,
        1..=50 => (degree - 1) / 5 + 1,
        _ => 11,
    }
}

pub fn degree_bin_label(bin: usize) -> String {
    match bin {
        0 => "0".into(),
        11 => "51+".into(),
        b => format!("{}-{}", 5 * (b - 1) + 1, 5 * b),
    }
}

fn class_scores(pred: &[usize], truth: &[usize], c: usize) -> Vec<ClassScores> {
    (0..c)
        .map(|label| {
            let tp = pred
                .iter()
                .zip(truth)
                .filter(|&(&p, &t)| p == label && t == label)
                .count();
            let predicted = pred.iter().filter(|&&p| p == label).count();
            let support = truth.iter().filter(|&&t| t == label).count();
            let precision = if predicted == 0 {
                0.0
            } else {
                tp as f64 / predicted as f64
            };
            let recall = if support == 0 {
                0.0
            } else {
                tp as f64 / support as f64
            };
            ClassScores {
                label,
                support,
                precision,
                recall,
                f1: harmonic_mean(precision, recall),
            }
        })
        .collect()
}

/// Utility metrics from predicted and true labels plus each node's degree.
pub fn utility_from_predictions(
    predicted: &[usize],
    truth: &[usize],
    degrees: &[usize],
    num_classes: usize,
) -> Result<UtilityReport> {
    if predicted.is_empty() {
        return Err(Error::Input("evaluation split is empty".into()));
    }
    if predicted.len() != truth.len() || truth.len() != degrees.len() {
        return Err(Error::Input(
            "prediction, label and degree vectors differ in length".into(),
        ));
    }
    let per_class = class_scores(predicted, truth, num_classes);
    let rare_class = per_class
        .iter()
        .min_by_key(|s| (s.support, s.label))
        .map_or(0, |s| s.label);
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    let accuracy = hits as f64 / predicted.len() as f64;

    let mut degree_bins = Vec::new();
    for bin in 0..=11 {
        let idx: Vec<usize> = (0..degrees.len())
            .filter(|&i| degree_bin(degrees[i]) == bin)
            .collect();
        let (micro_f1, rare_class_f1) = if idx.is_empty() {
            (0.0, 0.0)
        } else {
            let p: Vec<usize> = idx.iter().map(|&i| predicted[i]).collect();
            let t: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
            let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
            (
                hits as f64 / idx.len() as f64,
                class_scores(&p, &t, num_classes)[rare_class].f1,
            )
        };
        degree_bins.push(DegreeBin {
            label: degree_bin_label(bin),
            count: idx.len(),
            micro_f1,
            rare_class_f1,
        });
    }
    Ok(UtilityReport {
        accuracy,
        // single-label multi-class: micro-F1 equals accuracy
        micro_f1: accuracy,
        rare_class,
        rare_class_f1: per_class[rare_class].f1,
        per_class,
        degree_bins,
    })
}

/// What to query and which answers to score when measuring utility.
#[derive(Debug, Clone, Copy)]
pub struct EvalQuery<'a> {
    pub query_nodes: &'a [usize],
    /// Rows align with `query_nodes`.
    pub features: &'a Matrix,
    /// Positions into `query_nodes` that are scored.
    pub eval_positions: &'a [usize],
    /// True label per query node.
    pub labels: &'a [usize],
    /// Graph whose node degrees define the degree bins.
    pub degree_graph: &'a SparseGraph,
    pub num_classes: usize,
}

/// Scores argmax predictions obtained through the inference API, the same
/// path an attacker uses.
pub fn utility_report<A: InferenceApi + ?Sized>(
    api: &A,
    q: EvalQuery<'_>,
) -> Result<UtilityReport> {
    if q.eval_positions.is_empty() {
        return Err(Error::Input("evaluation split is empty".into()));
    }
    if q.labels.len() != q.query_nodes.len() {
        return Err(Error::Input(format!(
            "{} labels for {} query nodes",
            q.labels.len(),
            q.query_nodes.len()
        )));
    }
    let all = api.query(q.query_nodes, q.features)?.predicted_classes();
    let predicted: Vec<usize> = q.eval_positions.iter().map(|&p| all[p]).collect();
    let truth: Vec<usize> = q.eval_positions.iter().map(|&p| q.labels[p]).collect();
    let degrees: Vec<usize> = q
        .eval_positions
        .iter()
        .map(|&p| q.degree_graph.degree(q.query_nodes[p]))
        .collect();
    utility_from_predictions(&predicted, &truth, &degrees, q.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkteller::{random_attack, AttackConfig, Attacker};
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn report(center: Vec<usize>, predicted: Vec<(usize, usize)>) -> AttackReport {
        AttackReport {
            attacker: Attacker::LinkTeller,
            config: AttackConfig {
                k_hat: 0.0,
                delta: None,
                stratum: None,
                seed: None,
            },
            center_nodes: center,
            pair_scores: vec![],
            predicted_edges: predicted,
            requested_predictions: None,
            clamped: false,
            notes: vec![],
            metrics: None,
        }
    }

    fn square() -> SparseGraph {
        SparseGraph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap()
    }

    #[test]
    fn perfect_and_half_recall() {
        let t = PairGroundTruth::from_graph(&square(), &[0, 1, 2, 3]).unwrap();
        assert_eq!(t.density(), 4.0 / 6.0);
        let m = attack_metrics(&report(vec![0, 1, 2, 3], t.edges().to_vec()), &t).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = attack_metrics(&report(vec![0, 1, 2, 3], vec![(0, 1), (1, 2)]), &t).unwrap();
        assert_eq!((m.precision, m.recall), (1.0, 0.5));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(attack_metrics(&report(vec![0, 1, 2], vec![]), &t).is_err());
    }

    #[test]
    fn zero_denominators() {
        let t = PairGroundTruth::from_graph(&SparseGraph::empty(3), &[0, 1, 2]).unwrap();
        let m = attack_metrics(&report(vec![0, 1, 2], vec![]), &t).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.no_true_edges);
    }

    #[test]
    fn exhaustive_prediction_has_density_precision() {
        let g = crate::graph::generate_er(30, 0.2, 4).unwrap();
        let center: Vec<usize> = (0..30).collect();
        let t = PairGroundTruth::from_graph(&g, &center).unwrap();
        let r = random_attack(&center, 1.0, 1).unwrap();
        let m = attack_metrics(&r, &t).unwrap();
        assert!((m.precision - t.density()).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn auc_simple_cases() {
        assert_eq!(
            auc_from_labels(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(),
            1.0
        );
        assert_eq!(
            auc_from_labels(&[0.5; 4], &[true, false, true, false]).unwrap(),
            0.5
        );
        assert!(matches!(
            auc_from_labels(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedAuc {
                positives: 2,
                negatives: 0
            })
        ));
    }

    #[test]
    fn utility_perfect_and_constant() {
        let truth = vec![0, 1, 0, 1];
        let deg = vec![0, 3, 7, 60];
        let u = utility_from_predictions(&truth, &truth, &deg, 2).unwrap();
        assert_eq!(u.accuracy, 1.0);
        assert!(u.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!(u.degree_bins.iter().map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(u.degree_bins[11].label, "51+");
        assert_eq!(u.degree_bins[2].label, "6-10");

        // constant class-0 output on a balanced split: precision 1/2, recall 1
        let u = utility_from_predictions(&[0; 4], &truth, &deg, 2).unwrap();
        assert_eq!(u.accuracy, 0.5);
        assert_eq!(u.rare_class, 0);
        assert!((u.rare_class_f1 - 2.0 / 3.0).abs() < 1e-15);
        let u = utility_from_predictions(&[1; 4], &truth, &deg, 2).unwrap();
        assert_eq!(u.rare_class_f1, 0.0);
    }

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    proptest! {
        #[test]
        fn metrics_match_confusion_recount(seed in any::<u64>(), n in 3usize..12, k in 0.0f64..1.0) {
            let g = crate::graph::generate_er(n, 0.4, seed).unwrap();
            let center: Vec<usize> = (0..n).collect();
            let t = PairGroundTruth::from_graph(&g, &center).unwrap();
            let r = random_attack(&center, k, seed ^ 9).unwrap();
            let m = attack_metrics(&r, &t).unwrap();
            let (mut tp, mut fp, mut fneg) = (0, 0, 0);
            for a in 0..n {
                for b in a + 1..n {
                    let pred = r.predicted_edges.contains(&(a, b));
                    match (pred, g.has_edge(a, b)) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fneg += 1,
                        _ => {}
                    }
                }
            }
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let rc = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
            prop_assert_eq!(m.precision, p);
            prop_assert_eq!(m.recall, rc);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(seed in any::<u64>(), len in 2usize..30) {
            let mut r = rng::seeded(seed, 0);
            let scores: Vec<f64> = (0..len).map(|_| (r.random_range(0..6) as f64) / 3.0).collect();
            let mut labels: Vec<bool> = (0..len).map(|_| r.random_bool(0.4)).collect();
            labels[0] = true;
            labels[1] = false;
            let base = auc_from_labels(&scores, &labels).unwrap();
            let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert!((auc_from_labels(&warped, &labels).unwrap() - base).abs() < 1e-12);
            prop_assert!((brute_auc(&scores, &labels) - base).abs() < 1e-12);
        }
    }
}
