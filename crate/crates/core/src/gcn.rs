//! Multi-layer graph convolutional network trained from scratch.
//!
//! Layer `l` maps `H` to `σ(Â · (H ⊙ M_l) · W_l)` where `M_l` is an inverted
//! dropout mask (training only) and `σ` is ReLU on hidden layers and the
//! identity on the output layer. The output rows are raw logits.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Supervision;
use crate::error::{Error, Result};
use crate::matrix::{softmax_rows, Matrix};
use crate::normalize::{NormKind, NormalizedAdjacency};
use crate::rng::{self, stream};

/// Raw logits, one row per queried node in query order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix(Matrix);

impl PredictionMatrix {
    pub fn new(logits: Matrix) -> Self {
        PredictionMatrix(logits)
    }

    pub fn logits(&self) -> &Matrix {
        &self.0
    }

    pub fn into_logits(self) -> Matrix {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn posteriors(&self) -> Matrix {
        softmax_rows(&self.0)
    }

    pub fn predicted_classes(&self) -> Vec<usize> {
        self.0.argmax_rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    weights: Vec<Matrix>,
    norm_kind: NormKind,
    dropout: f64,
}

impl GcnModel {
    pub fn new(weights: Vec<Matrix>, norm_kind: NormKind, dropout: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Parameter("a GCN needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Parameter(format!(
                "dropout {dropout} is not in [0, 1)"
            )));
        }
        for (l, w) in weights.windows(2).enumerate() {
            if w[0].cols() != w[1].rows() {
                return Err(Error::Shape(format!(
                    "layer {l} outputs {} features but layer {} expects {}",
                    w[0].cols(),
                    l + 1,
                    w[1].rows()
                )));
            }
        }
        Ok(GcnModel {
            weights,
            norm_kind,
            dropout,
        })
    }

    /// Glorot-uniform initialization for layer widths `dims[0] → … → dims[L]`.
    pub fn glorot(dims: &[usize], norm_kind: NormKind, dropout: f64, seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Parameter("need an input and an output width".into()));
        }
        let mut rng = rng::seeded(seed, stream::INIT);
        let weights = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let data = (0..w[0] * w[1])
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Matrix::from_vec(w[0], w[1], data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, norm_kind, dropout)
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn norm_kind(&self) -> NormKind {
        self.norm_kind
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// `[d_0, d_1, …, d_L]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.weights[0].rows()];
        dims.extend(self.weights.iter().map(Matrix::cols));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights[self.weights.len() - 1].cols()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }
}

/// Inverted-dropout masks for each layer input, entries `0` or `1/(1-p)`.
/// `None` means the layer input passes unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(Vec<Option<Matrix>>);

impl DropoutMasks {
    pub fn none(layers: usize) -> Self {
        DropoutMasks(vec![None; layers])
    }

    pub fn sample<R: Rng + ?Sized>(model: &GcnModel, n: usize, rng: &mut R) -> Self {
        let p = model.dropout;
        if p == 0.0 {
            return Self::none(model.num_layers());
        }
        let keep = 1.0 / (1.0 - p);
        DropoutMasks(
            model
                .layer_dims()
                .iter()
                .take(model.num_layers())
                .map(|&d| {
                    let data = (0..n * d)
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                        .collect();
                    Some(Matrix::from_vec(n, d, data).expect("mask shape"))
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Fresh dropout masks drawn from the given seed.
    Train {
        dropout_seed: u64,
    },
}

/// Intermediate values kept for back-propagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Â · (H_l ⊙ M_l)` per layer.
    propagated: Vec<Matrix>,
    /// `propagated_l · W_l` per layer.
    pre_activations: Vec<Matrix>,
    masks: DropoutMasks,
}

fn check_inputs(model: &GcnModel, adj: &NormalizedAdjacency, features: &Matrix) -> Result<()> {
    if features.cols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "features have {} columns, model expects {}",
            features.cols(),
            model.input_dim()
        )));
    }
    if features.rows() != adj.n() {
        return Err(Error::Shape(format!(
            "{} feature rows for a {}-node adjacency",
            features.rows(),
            adj.n()
        )));
    }
    Ok(())
}

pub fn forward_with_masks(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    features: &Matrix,
    masks: DropoutMasks,
) -> Result<(Matrix, ForwardCache)> {
    check_inputs(model, adj, features)?;
    if masks.0.len() != model.num_layers() {
        return Err(Error::Shape(format!(
            "{} dropout masks for {} layers",
            masks.0.len(),
            model.num_layers()
        )));
    }
    let last = model.num_layers() - 1;
    let mut propagated = Vec::with_capacity(model.num_layers());
    let mut pre_activations = Vec::with_capacity(model.num_layers());
    let mut h = features.clone();
    for (l, w) in model.weights.iter().enumerate() {
        if let Some(mask) = &masks.0[l] {
            if mask.shape() != h.shape() {
                return Err(Error::Shape(format!(
                    "layer {l} mask is {:?}, input is {:?}",
                    mask.shape(),
                    h.shape()
                )));
            }
            for (x, m) in h.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *x *= m;
            }
        }
        let s = adj.spmm(&h)?;
        let z = s.matmul(w)?;
        h = if l < last {
            z.map(|x| x.max(0.0))
        } else {
            z.clone()
        };
        propagated.push(s);
        pre_activations.push(z);
    }
    Ok((
        h,
        ForwardCache {
            propagated,
            pre_activations,
            masks,
        },
    ))
}

pub fn forward(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    features: &Matrix,
    mode: Mode,
) -> Result<PredictionMatrix> {
    let masks = match mode {
        Mode::Eval => DropoutMasks::none(model.num_layers()),
        Mode::Train { dropout_seed } => DropoutMasks::sample(
            model,
            features.rows(),
            &mut rng::seeded(dropout_seed, stream::DROPOUT),
        ),
    };
    let (logits, _) = forward_with_masks(model, adj, features, masks)?;
    Ok(PredictionMatrix(logits))
}

/// Mean softmax cross-entropy over `rows`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize], rows: &[usize]) -> f64 {
    let mut total = 0.0;
    for &r in rows {
        let z = logits.row(r);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - z[labels[r]];
    }
    total / rows.len() as f64
}

fn accuracy(logits: &Matrix, labels: &[usize], rows: &[usize]) -> f64 {
    let pred = logits.argmax_rows();
    let hits = rows.iter().filter(|&&r| pred[r] == labels[r]).count();
    hits as f64 / rows.len() as f64
}

/// Training loss and its gradient with respect to every weight matrix,
/// under fixed dropout masks.
pub fn loss_and_gradients(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    features: &Matrix,
    supervision: &Supervision,
    masks: DropoutMasks,
) -> Result<(f64, Vec<Matrix>)> {
    let rows = &supervision.train;
    if rows.is_empty() {
        return Err(Error::Parameter("train split is empty".into()));
    }
    if supervision.labels.len() != features.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} nodes",
            supervision.labels.len(),
            features.rows()
        )));
    }
    let (logits, cache) = forward_with_masks(model, adj, features, masks)?;
    let loss = cross_entropy(&logits, &supervision.labels, rows);

    // d loss / d logits: (softmax - onehot) / |train| on train rows
    let probs = softmax_rows(&logits);
    let mut g = Matrix::zeros(logits.rows(), logits.cols());
    let scale = 1.0 / rows.len() as f64;
    for &r in rows {
        let gr = g.row_mut(r);
        for (x, &p) in gr.iter_mut().zip(probs.row(r)) {
            *x = p * scale;
        }
        gr[supervision.labels[r]] -= scale;
    }

    let layers = model.num_layers();
    let mut grads = vec![Matrix::zeros(0, 0); layers];
    for l in (0..layers).rev() {
        grads[l] = cache.propagated[l].t_matmul(&g)?;
        if l == 0 {
            break;
        }
        let ds = g.matmul_t(&model.weights[l])?;
        let mut dh = adj.spmm_transpose(&ds)?;
        if let Some(mask) = &cache.masks.0[l] {
            for (x, m) in dh.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                *x *= m;
            }
        }
        for (x, &z) in dh
            .as_mut_slice()
            .iter_mut()
            .zip(cache.pre_activations[l - 1].as_slice())
        {
            if z <= 0.0 {
                *x = 0.0;
            }
        }
        g = dh;
    }
    Ok((loss, grads))
}

/// Worst relative disagreement between central finite differences and the
/// analytic gradient, `|g_fd - g_an| / max(1, |g_fd|)`, over every weight.
pub fn grad_check(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    features: &Matrix,
    supervision: &Supervision,
    eps: f64,
    masks: Option<&DropoutMasks>,
) -> Result<f64> {
    let masks = masks
        .cloned()
        .unwrap_or_else(|| DropoutMasks::none(model.num_layers()));
    let (_, analytic) = loss_and_gradients(model, adj, features, supervision, masks.clone())?;
    let loss_at = |m: &GcnModel| -> Result<f64> {
        let (logits, _) = forward_with_masks(m, adj, features, masks.clone())?;
        Ok(cross_entropy(
            &logits,
            &supervision.labels,
            &supervision.train,
        ))
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for l in 0..model.num_layers() {
        for idx in 0..model.weights[l].as_slice().len() {
            let orig = model.weights[l].as_slice()[idx];
            probe.weights[l].as_mut_slice()[idx] = orig + eps;
            let up = loss_at(&probe)?;
            probe.weights[l].as_mut_slice()[idx] = orig - eps;
            let down = loss_at(&probe)?;
            probe.weights[l].as_mut_slice()[idx] = orig;
            let fd = (up - down) / (2.0 * eps);
            let an = analytic[l].as_slice()[idx];
            worst = worst.max((fd - an).abs() / fd.abs().max(1.0));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub hidden_dims: Vec<usize>,
    pub norm_kind: NormKind,
    /// Seeds weight initialization and the dropout stream.
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 200,
            dropout: 0.5,
            hidden_dims: vec![64],
            norm_kind: NormKind::FirstOrderGcn,
            seed: 0,
            optimizer: Optimizer::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Parameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Parameter(format!(
                "dropout {} is not in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GcnModel,
    /// Training loss at each epoch, measured before that epoch's update.
    pub loss_history: Vec<f64>,
    /// Validation accuracy after each epoch's update; empty without a
    /// validation split.
    pub val_accuracy: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_val_accuracy(&self) -> Option<f64> {
        self.val_accuracy.last().copied()
    }
}

pub fn train(
    features: &Matrix,
    supervision: &Supervision,
    adj: &NormalizedAdjacency,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut dims = vec![features.cols()];
    dims.extend(&config.hidden_dims);
    dims.push(supervision.num_classes);
    let model = GcnModel::glorot(&dims, config.norm_kind, config.dropout, config.seed)?;
    train_from(model, features, supervision, adj, config)
}

/// Runs the optimizer from an existing model. The model's own dropout rate
/// and normalization are kept.
pub fn train_from(
    mut model: GcnModel,
    features: &Matrix,
    supervision: &Supervision,
    adj: &NormalizedAdjacency,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if supervision.train.is_empty() {
        return Err(Error::Parameter("train split is empty".into()));
    }
    if adj.kind() != model.norm_kind {
        return Err(Error::Parameter(format!(
            "model expects {} adjacency, got {}",
            model.norm_kind,
            adj.kind()
        )));
    }
    let mut dropout_rng = rng::seeded(config.seed, stream::DROPOUT);
    let mut first = vec![Matrix::zeros(0, 0); model.num_layers()];
    let mut second = first.clone();
    for (l, w) in model.weights.iter().enumerate() {
        first[l] = Matrix::zeros(w.rows(), w.cols());
        second[l] = Matrix::zeros(w.rows(), w.cols());
    }

    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut val_accuracy = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let masks = DropoutMasks::sample(&model, features.rows(), &mut dropout_rng);
        let (loss, grads) = loss_and_gradients(&model, adj, features, supervision, masks)?;
        if !loss.is_finite() {
            return Err(Error::Training { epoch, loss });
        }
        loss_history.push(loss);

        let lr = config.learning_rate;
        match config.optimizer {
            Optimizer::Sgd => {
                for (w, g) in model.weights.iter_mut().zip(&grads) {
                    for (x, d) in w.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *x -= lr * d;
                    }
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = (epoch + 1) as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for l in 0..model.num_layers() {
                    let w = model.weights[l].as_mut_slice();
                    let m = first[l].as_mut_slice();
                    let v = second[l].as_mut_slice();
                    for (i, &d) in grads[l].as_slice().iter().enumerate() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * d;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * d * d;
                        w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
        if !model.weights.iter().all(Matrix::is_finite) {
            return Err(Error::Training {
                epoch,
                loss: f64::NAN,
            });
        }

        if !supervision.val.is_empty() {
            let logits = forward(&model, adj, features, Mode::Eval)?;
            val_accuracy.push(accuracy(
                logits.logits(),
                &supervision.labels,
                &supervision.val,
            ));
        }
    }
    Ok(TrainOutcome {
        model,
        loss_history,
        val_accuracy,
    })
}

const MAGIC: &[u8; 8] = b"GCNMODEL";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

impl Endian {
    fn marker(self) -> u8 {
        match self {
            Endian::Little => b'L',
            Endian::Big => b'B',
        }
    }
}

/// Binary model file:
///
/// ```text
/// magic "GCNMODEL" | version u8 | endian u8 ('L'/'B') | norm u8 | reserved u8
/// layers u32 | dims (layers + 1) x u64 | dropout f64 | weights, row-major f64
/// ```
///
/// Multi-byte fields use the byte order named by the endian marker.
impl GcnModel {
    pub fn to_bytes(&self, endian: Endian) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&[FORMAT_VERSION, endian.marker(), self.norm_kind.code(), 0]);
        let u32b = |x: u32| match endian {
            Endian::Little => x.to_le_bytes(),
            Endian::Big => x.to_be_bytes(),
        };
        let u64b = |x: u64| match endian {
            Endian::Little => x.to_le_bytes(),
            Endian::Big => x.to_be_bytes(),
        };
        out.extend_from_slice(&u32b(self.num_layers() as u32));
        for d in self.layer_dims() {
            out.extend_from_slice(&u64b(d as u64));
        }
        out.extend_from_slice(&u64b(self.dropout.to_bits()));
        for w in &self.weights {
            for &x in w.as_slice() {
                out.extend_from_slice(&u64b(x.to_bits()));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: String| Error::Input(format!("model file: {msg}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing GCNMODEL magic".into()));
        }
        if bytes[8] != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", bytes[8])));
        }
        let endian = match bytes[9] {
            b'L' => Endian::Little,
            b'B' => Endian::Big,
            m => return Err(bad(format!("unknown endianness marker {m:#04x}"))),
        };
        let norm_kind = NormKind::from_code(bytes[10])
            .ok_or_else(|| bad(format!("unknown normalization code {}", bytes[10])))?;
        let mut pos = 12;
        let mut take = |len: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + len)
                .ok_or_else(|| bad(format!("truncated at byte {pos}")))?;
            pos += len;
            Ok(s)
        };
        let read_u32 = |b: &[u8]| {
            let a: [u8; 4] = b.try_into().expect("4 bytes");
            match endian {
                Endian::Little => u32::from_le_bytes(a),
                Endian::Big => u32::from_be_bytes(a),
            }
        };
        let read_u64 = |b: &[u8]| {
            let a: [u8; 8] = b.try_into().expect("8 bytes");
            match endian {
                Endian::Little => u64::from_le_bytes(a),
                Endian::Big => u64::from_be_bytes(a),
            }
        };
        let layers = read_u32(take(4)?) as usize;
        if layers == 0 {
            return Err(bad("zero layers".into()));
        }
        let dims = (0..=layers)
            .map(|_| take(8).map(|b| read_u64(b) as usize))
            .collect::<Result<Vec<_>>>()?;
        let dropout = f64::from_bits(read_u64(take(8)?));
        let mut weights = Vec::with_capacity(layers);
        for w in dims.windows(2) {
            let count = w[0]
                .checked_mul(w[1])
                .ok_or_else(|| bad("layer size overflows".into()))?;
            let raw = take(
                count
                    .checked_mul(8)
                    .ok_or_else(|| bad("layer size overflows".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_bits(read_u64(c)))
                .collect();
            weights.push(Matrix::from_vec(w[0], w[1], data)?);
        }
        if pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
        }
        GcnModel::new(weights, norm_kind, dropout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes(Endian::Little)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
