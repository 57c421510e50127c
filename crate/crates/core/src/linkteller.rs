//! Edge re-identification through the inference API.
//!
//! LinkTeller probes each target node `v` by scaling its feature row by
//! `1 + Δ` and measuring how every other target's logits move. A GCN only
//! mixes features along edges, so large movements point at nearby nodes.
//! Pairs are ranked by influence and the top `m = round(k̂·n(n-1)/2)` are
//! declared edges, where `k̂` is the attacker's density belief.
//!
//! The LSA2 baselines rank pairs by correlation distance between posterior
//! rows (`post`) or raw feature rows (`attr`); the random baseline flips a
//! `k̂`-biased coin per pair.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::InferenceApi;
use crate::error::{Error, Result};
use crate::graph::Stratum;
use crate::matrix::Matrix;
use crate::metrics::{AttackMetrics, PairGroundTruth};
use crate::rng::{self, stream};

pub const DEFAULT_DELTA: f64 = 1e-4;

/// Correlation distance assigned when a row has zero variance. It equals
/// the largest attainable distance, so such pairs rank last.
pub const UNDEFINED_DISTANCE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Attacker {
    #[serde(rename = "linkteller")]
    LinkTeller,
    Lsa2Post,
    Lsa2Attr,
    Random,
}

impl Attacker {
    pub const ALL: [Attacker; 4] = [
        Attacker::LinkTeller,
        Attacker::Lsa2Post,
        Attacker::Lsa2Attr,
        Attacker::Random,
    ];
}

impl fmt::Display for Attacker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attacker::LinkTeller => "linkteller",
            Attacker::Lsa2Post => "lsa2-post",
            Attacker::Lsa2Attr => "lsa2-attr",
            Attacker::Random => "random",
        })
    }
}

impl FromStr for Attacker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attacker::ALL
            .into_iter()
            .find(|a| a.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parameter(format!("unknown attacker {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lsa2Variant {
    Post,
    Attr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub u: usize,
    pub v: usize,
    pub score: f64,
}

/// Settings echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub k_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratum: Option<Stratum>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub attacker: Attacker,
    pub config: AttackConfig,
    /// Target nodes, ascending.
    pub center_nodes: Vec<usize>,
    /// One score per unordered target pair, in lexicographic pair order.
    pub pair_scores: Vec<PairScore>,
    /// Predicted edges `(u, v)` with `u < v`, ascending.
    pub predicted_edges: Vec<(usize, usize)>,
    /// `round(k̂·n(n-1)/2)` before clamping; absent for the random attack.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub requested_predictions: Option<u64>,
    /// Set when the requested prediction count exceeded the pair count.
    pub clamped: bool,
    /// Free-form remarks about conventions applied in this run.
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<AttackMetrics>,
}

impl AttackReport {
    /// Fills `metrics` from the ground truth. An undefined AUC is left
    /// empty and noted.
    pub fn evaluate(&mut self, truth: &PairGroundTruth) -> Result<&AttackMetrics> {
        let mut m = crate::metrics::attack_metrics(self, truth)?;
        match crate::metrics::attack_auc(&self.pair_scores, truth) {
            Ok(auc) => m.auc = Some(auc),
            Err(Error::UndefinedAuc { .. }) => {
                self.notes
                    .push("AUC undefined: target pairs are all edges or all non-edges".into());
            }
            Err(e) => return Err(e),
        }
        if m.no_true_edges {
            self.notes
                .push("no true edges among targets; recall reported as 0".into());
        }
        Ok(self.metrics.insert(m))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat per-pair CSV: `u,v,score,predicted[,is_edge]`.
    pub fn write_pair_scores_csv<W: Write>(
        &self,
        out: W,
        truth: Option<&PairGroundTruth>,
    ) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["u", "v", "score", "predicted"];
        if truth.is_some() {
            header.push("is_edge");
        }
        w.write_record(&header)?;
        for ps in &self.pair_scores {
            let predicted = self.predicted_edges.binary_search(&(ps.u, ps.v)).is_ok();
            let mut rec = vec![
                ps.u.to_string(),
                ps.v.to_string(),
                ps.score.to_string(),
                u8::from(predicted).to_string(),
            ];
            if let Some(t) = truth {
                rec.push(u8::from(t.is_edge(ps.u, ps.v)).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<pair scores>", e))
    }
}

/// Influence values `i_uv` for every ordered pair of target nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTable {
    center: Vec<usize>,
    delta: f64,
    /// Row `a` holds the influence of probe `center[a]` on every target.
    values: Matrix,
}

impl InfluenceTable {
    pub fn center_nodes(&self) -> &[usize] {
        &self.center
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Influence of probe `v` on node `u` (`i_uv`); `None` for non-targets
    /// or `u == v`.
    pub fn influence(&self, v: usize, u: usize) -> Option<f64> {
        let a = self.center.binary_search(&v).ok()?;
        let b = self.center.binary_search(&u).ok()?;
        (a != b).then(|| self.values[(a, b)])
    }

    /// `(v, u, i_uv)` for every ordered target pair with `u != v`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.center.len();
        (0..n).flat_map(move |a| {
            (0..n)
                .filter(move |&b| b != a)
                .map(move |b| (self.center[a], self.center[b], self.values[(a, b)]))
        })
    }

    /// Symmetrized pair scores `max(i_uv, i_vu)`.
    pub fn pair_scores(&self) -> Vec<PairScore> {
        let n = self.center.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for a in 0..n {
            for b in a + 1..n {
                out.push(PairScore {
                    u: self.center[a],
                    v: self.center[b],
                    score: self.values[(a, b)].max(self.values[(b, a)]),
                });
            }
        }
        out
    }
}

fn position(nodes: &[usize], v: usize) -> Result<usize> {
    nodes
        .iter()
        .position(|&x| x == v)
        .ok_or_else(|| Error::Parameter(format!("node {v} is not among the query nodes")))
}

/// `(P' - P) / Δ`, where `P'` answers the same query with node `v`'s
/// feature row scaled by `1 + Δ`. Issues exactly two queries.
pub fn influence_matrix<A: InferenceApi + ?Sized>(
    api: &A,
    query_nodes: &[usize],
    features: &Matrix,
    v: usize,
    delta: f64,
) -> Result<Matrix> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Parameter(format!("Δ = {delta} must be positive")));
    }
    let pv = position(query_nodes, v)?;
    let base = api.query(query_nodes, features)?;
    let mut bumped = features.clone();
    for x in bumped.row_mut(pv) {
        *x *= 1.0 + delta;
    }
    let moved = api.query(query_nodes, &bumped)?;
    moved.logits().scaled_diff(base.logits(), 1.0 / delta)
}

/// Sorted, duplicate-free targets that all appear among the query nodes,
/// with their positions in the query.
fn resolve_center(query_nodes: &[usize], center: &[usize]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut sorted = center.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Parameter("target nodes contain duplicates".into()));
    }
    let positions = sorted
        .iter()
        .map(|&v| position(query_nodes, v))
        .collect::<Result<Vec<_>>>()?;
    Ok((sorted, positions))
}

pub fn influence_table<A: InferenceApi + ?Sized>(
    api: &A,
    query_nodes: &[usize],
    features: &Matrix,
    center: &[usize],
    delta: f64,
) -> Result<InfluenceTable> {
    if features.rows() != query_nodes.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} query nodes",
            features.rows(),
            query_nodes.len()
        )));
    }
    let (center, positions) = resolve_center(query_nodes, center)?;
    let n = center.len();
    let rows: Vec<Vec<f64>> = center
        .par_iter()
        .map(|&v| {
            let inf = influence_matrix(api, query_nodes, features, v, delta)?;
            Ok(positions
                .iter()
                .map(|&p| inf.row(p).iter().map(|x| x * x).sum::<f64>().sqrt())
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut values = Matrix::zeros(n, n);
    for (a, row) in rows.into_iter().enumerate() {
        values.row_mut(a).copy_from_slice(&row);
        values[(a, a)] = 0.0;
    }
    Ok(InfluenceTable {
        center,
        delta,
        values,
    })
}

/// Total order used for ranking: higher score first, then lexicographic
/// pair order.
fn rank_order(a: &PairScore, b: &PairScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| (a.u, a.v).cmp(&(b.u, b.v)))
}

/// Number of pairs predicted for density belief `k_hat` over `n` targets,
/// and whether that count had to be clamped.
pub fn prediction_count(k_hat: f64, n: usize) -> Result<(u64, usize, bool)> {
    if !(k_hat >= 0.0 && k_hat.is_finite()) {
        return Err(Error::Parameter(format!(
            "density belief {k_hat} must be a non-negative number"
        )));
    }
    let total = n * n.saturating_sub(1) / 2;
    let requested = (k_hat * total as f64).round() as u64;
    let clamped = requested > total as u64;
    Ok((requested, (requested as usize).min(total), clamped))
}

/// Declares the top `round(k̂·n(n-1)/2)` pairs to be edges.
pub fn threshold_top_pairs(
    attacker: Attacker,
    config: AttackConfig,
    center: Vec<usize>,
    pair_scores: Vec<PairScore>,
    mut notes: Vec<String>,
) -> Result<AttackReport> {
    let (requested, m, clamped) = prediction_count(config.k_hat, center.len())?;
    if clamped {
        notes.push(format!(
            "density belief asks for {requested} pairs; clamped to all {m}"
        ));
    }
    let mut ranked: Vec<&PairScore> = pair_scores.iter().collect();
    ranked.sort_by(|a, b| rank_order(a, b));
    let mut predicted: Vec<(usize, usize)> = ranked[..m].iter().map(|p| (p.u, p.v)).collect();
    predicted.sort_unstable();
    Ok(AttackReport {
        attacker,
        config,
        center_nodes: center,
        pair_scores,
        predicted_edges: predicted,
        requested_predictions: Some(requested),
        clamped,
        notes,
        metrics: None,
    })
}

fn check_center_size(center: &[usize]) -> Result<()> {
    if center.len() < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 target nodes, got {}",
            center.len()
        )));
    }
    Ok(())
}

/// Re-thresholds an existing report's scores at another density belief.
pub fn rethreshold(report: &AttackReport, k_hat: f64) -> Result<AttackReport> {
    if report.attacker == Attacker::Random {
        return Err(Error::Parameter(
            "random-attack predictions are sampled, not thresholded".into(),
        ));
    }
    let notes = report
        .notes
        .iter()
        .filter(|n| !n.starts_with("density belief asks"))
        .cloned()
        .collect();
    threshold_top_pairs(
        report.attacker,
        AttackConfig {
            k_hat,
            ..report.config.clone()
        },
        report.center_nodes.clone(),
        report.pair_scores.clone(),
        notes,
    )
}

/// LinkTeller over `center ⊆ query_nodes`. `features` rows align with
/// `query_nodes`.
pub fn linkteller_attack<A: InferenceApi + ?Sized>(
    api: &A,
    query_nodes: &[usize],
    features: &Matrix,
    center: &[usize],
    k_hat: f64,
    delta: f64,
) -> Result<AttackReport> {
    check_center_size(center)?;
    prediction_count(k_hat, center.len())?;
    let table = influence_table(api, query_nodes, features, center, delta)?;
    let scores = table.pair_scores();
    threshold_top_pairs(
        Attacker::LinkTeller,
        AttackConfig {
            k_hat,
            delta: Some(delta),
            stratum: None,
            seed: None,
        },
        table.center,
        scores,
        vec!["pair score = max(i_uv, i_vu)".into()],
    )
}

/// `1 - Pearson correlation`; `None` when either row has zero variance.
pub fn correlation_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(1.0 - sab / (saa.sqrt() * sbb.sqrt()))
}

/// LSA2 baseline. `post` issues one query and compares softmax posteriors;
/// `attr` compares the submitted feature rows and issues none.
pub fn lsa2_attack<A: InferenceApi + ?Sized>(
    api: &A,
    query_nodes: &[usize],
    features: &Matrix,
    center: &[usize],
    k_hat: f64,
    variant: Lsa2Variant,
) -> Result<AttackReport> {
    check_center_size(center)?;
    prediction_count(k_hat, center.len())?;
    if features.rows() != query_nodes.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} query nodes",
            features.rows(),
            query_nodes.len()
        )));
    }
    let (center, positions) = resolve_center(query_nodes, center)?;
    let (rows, attacker, source) = match variant {
        Lsa2Variant::Post => (
            api.query(query_nodes, features)?.posteriors(),
            Attacker::Lsa2Post,
            "posteriors = softmax of returned logits",
        ),
        Lsa2Variant::Attr => (features.clone(), Attacker::Lsa2Attr, "node attributes"),
    };
    let n = center.len();
    let mut scores = Vec::with_capacity(n * (n - 1) / 2);
    let mut undefined = 0usize;
    for a in 0..n {
        for b in a + 1..n {
            let d = correlation_distance(rows.row(positions[a]), rows.row(positions[b]))
                .unwrap_or_else(|| {
                    undefined += 1;
                    UNDEFINED_DISTANCE
                });
            scores.push(PairScore {
                u: center[a],
                v: center[b],
                score: -d,
            });
        }
    }
    let mut notes = vec![format!("score = -(correlation distance of {source})")];
    if undefined > 0 {
        notes.push(format!(
            "{undefined} pairs had a zero-variance row; assigned distance {UNDEFINED_DISTANCE}"
        ));
    }
    threshold_top_pairs(
        attacker,
        AttackConfig {
            k_hat,
            delta: None,
            stratum: None,
            seed: None,
        },
        center,
        scores,
        notes,
    )
}

/// Predicts each pair independently with probability `k_hat`. The pair
/// score is `1 - u` for the uniform draw `u`, so a pair is predicted
/// exactly when its score exceeds `1 - k_hat`.
pub fn random_attack(center: &[usize], k_hat: f64, seed: u64) -> Result<AttackReport> {
    check_center_size(center)?;
    if !(0.0..=1.0).contains(&k_hat) {
        return Err(Error::Parameter(format!(
            "density belief {k_hat} is not a probability"
        )));
    }
    let mut center = center.to_vec();
    center.sort_unstable();
    if center.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Parameter("target nodes contain duplicates".into()));
    }
    let mut rng = rng::seeded(seed, stream::RANDOM_ATTACK);
    let n = center.len();
    let mut scores = Vec::with_capacity(n * (n - 1) / 2);
    let mut predicted = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            let u: f64 = rng.random();
            if u < k_hat {
                predicted.push((center[a], center[b]));
            }
            scores.push(PairScore {
                u: center[a],
                v: center[b],
                score: 1.0 - u,
            });
        }
    }
    Ok(AttackReport {
        attacker: Attacker::Random,
        config: AttackConfig {
            k_hat,
            delta: None,
            stratum: None,
            seed: Some(seed),
        },
        center_nodes: center,
        pair_scores: scores,
        predicted_edges: predicted,
        requested_predictions: None,
        clamped: false,
        notes: vec![],
        metrics: None,
    })
}
