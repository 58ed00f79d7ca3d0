//! Single-hidden-layer perceptron regressing pilot values from data
//! subcarriers.
//!
//! `out = W2 * relu(W1 * x + b1) + b2`, trained on mean squared error against
//! the `±sqrt(E)` pilot labels. At inference the outputs are quantized to the
//! nearest legal pilot value by their sign.
//!
//! All parameters live in one flat vector laid out as `W1 (H x D)`, `b1 (H)`,
//! `W2 (P x H)`, `b2 (P)`, row-major; gradients share the layout so the
//! optimizers work on plain slices.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{PaprDataset, Partition};
use crate::error::{domain, Error, Result};
use crate::io::{read_f64_block, write_f64_block, BIN_MAGIC};
use crate::mcsa::{PilotConfig, Sign};
use crate::seed;

pub const DEFAULT_HIDDEN: usize = 500;

/// Rows per gradient work unit. Partial sums are combined in chunk order, so
/// the result does not depend on the thread count.
const CHUNK_ROWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Optimizer {
    SgdMomentum,
    #[default]
    Adam,
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "adam" => Ok(Optimizer::Adam),
            "sgd" | "sgdmomentum" => Ok(Optimizer::SgdMomentum),
            other => Err(Error::Parse(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    hidden: usize,
    output_dim: usize,
    activation: Activation,
    params: Vec<f64>,
}

fn param_count(d: usize, h: usize, p: usize) -> usize {
    h * d + h + p * h + p
}

impl MlpModel {
    /// All-zero parameters.
    pub fn zeros(input_dim: usize, hidden: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || output_dim == 0 {
            return domain(format!(
                "degenerate network dimensions D = {input_dim}, H = {hidden}, P = {output_dim}"
            ));
        }
        Ok(MlpModel {
            input_dim,
            hidden,
            output_dim,
            activation: Activation::Relu,
            params: vec![0.0; param_count(input_dim, hidden, output_dim)],
        })
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Result<Self> {
        let mut model = MlpModel::zeros(input_dim, hidden, output_dim)?;
        let mut rng = seed::rng(seed);
        let l1 = 1.0 / (input_dim as f64).sqrt();
        let l2 = 1.0 / (hidden as f64).sqrt();
        let split = hidden * input_dim + hidden;
        for (i, w) in model.params.iter_mut().enumerate() {
            let limit = if i < split { l1 } else { l2 };
            *w = rng.random_range(-limit..limit);
        }
        Ok(model)
    }

    pub fn from_parameters(
        input_dim: usize,
        hidden: usize,
        output_dim: usize,
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = MlpModel::zeros(input_dim, hidden, output_dim)?;
        if params.len() != model.params.len() {
            return Err(Error::Validation(format!(
                "{} parameters for D = {input_dim}, H = {hidden}, P = {output_dim} (expected {})",
                params.len(),
                model.params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite parameter".into()));
        }
        model.activation = activation;
        model.params = params;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let (d, h, p) = (self.input_dim, self.hidden, self.output_dim);
        [0, h * d, h * d + h, h * d + h + p * h]
    }

    pub fn w1(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[0]..o[1]]
    }

    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[1]..o[2]]
    }

    pub fn w2(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[2]..o[3]]
    }

    pub fn b2(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[3]..]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_dim {
            return domain(format!(
                "input has {len} features, model expects {}",
                self.input_dim
            ));
        }
        Ok(())
    }

    /// Hidden pre-activations into `z`, outputs into `out`.
    fn forward_row(&self, x: &[f64], z: &mut [f64], out: &mut [f64]) {
        let (w1, b1, w2, b2) = (self.w1(), self.b1(), self.w2(), self.b2());
        let d = self.input_dim;
        for (j, zj) in z.iter_mut().enumerate() {
            let row = &w1[j * d..(j + 1) * d];
            *zj = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        let h = self.hidden;
        for (p, o) in out.iter_mut().enumerate() {
            let row = &w2[p * h..(p + 1) * h];
            *o = b2[p]
                + row
                    .iter()
                    .zip(z.iter())
                    .map(|(w, &v)| w * relu(v))
                    .sum::<f64>();
        }
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.check_input(features.len())?;
        let mut z = vec![0.0; self.hidden];
        let mut out = vec![0.0; self.output_dim];
        self.forward_row(features, &mut z, &mut out);
        Ok(out)
    }

    /// Forward pass over a row-major batch.
    pub fn forward_batch(&self, features: &[f64]) -> Result<Vec<f64>> {
        if !features.len().is_multiple_of(self.input_dim) {
            return domain(format!(
                "batch of {} values is not a multiple of D = {}",
                features.len(),
                self.input_dim
            ));
        }
        let mut z = vec![0.0; self.hidden];
        let mut out = vec![0.0; features.len() / self.input_dim * self.output_dim];
        for (x, o) in features
            .chunks_exact(self.input_dim)
            .zip(out.chunks_exact_mut(self.output_dim))
        {
            self.forward_row(x, &mut z, o);
        }
        Ok(out)
    }

    /// Adds the unnormalized gradient of `sum (out - t)^2 * scale` over the
    /// rows of one chunk into `grad`; returns the chunk's squared error.
    fn accumulate_chunk(&self, x: &[f64], t: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let (d, h, p) = (self.input_dim, self.hidden, self.output_dim);
        let o = self.offsets();
        let w2 = self.w2();
        let mut z = vec![0.0; h];
        let mut out = vec![0.0; p];
        let mut d_out = vec![0.0; p];
        let mut sq = 0.0;
        let (g_w1, rest) = grad.split_at_mut(o[1]);
        let (g_b1, rest) = rest.split_at_mut(o[2] - o[1]);
        let (g_w2, g_b2) = rest.split_at_mut(o[3] - o[2]);
        for (xr, tr) in x.chunks_exact(d).zip(t.chunks_exact(p)) {
            self.forward_row(xr, &mut z, &mut out);
            for k in 0..p {
                let e = out[k] - tr[k];
                sq += e * e;
                d_out[k] = 2.0 * e * scale;
                g_b2[k] += d_out[k];
                let g_row = &mut g_w2[k * h..(k + 1) * h];
                for (g, &zj) in g_row.iter_mut().zip(&z) {
                    *g += d_out[k] * relu(zj);
                }
            }
            for j in 0..h {
                if z[j] <= 0.0 {
                    continue;
                }
                let dz: f64 = (0..p).map(|k| w2[k * h + j] * d_out[k]).sum();
                g_b1[j] += dz;
                for (g, &v) in g_w1[j * d..(j + 1) * d].iter_mut().zip(xr) {
                    *g += dz * v;
                }
            }
        }
        sq
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Mean of `(pred - target)^2` over all entries of two equally shaped
/// row-major matrices.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return domain(format!(
            "prediction has {} entries, target has {}",
            pred.len(),
            target.len()
        ));
    }
    if pred.is_empty() {
        return domain("MSE of empty matrices");
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Gradient of the batch MSE, laid out like [`MlpModel::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
    pub loss: f64,
}

fn check_batch(model: &MlpModel, features: &[f64], targets: &[f64]) -> Result<usize> {
    let (d, p) = (model.input_dim, model.output_dim);
    if features.is_empty() || !features.len().is_multiple_of(d) {
        return domain(format!(
            "feature batch of {} values is not a positive multiple of D = {d}",
            features.len()
        ));
    }
    let rows = features.len() / d;
    if targets.len() != rows * p {
        return domain(format!(
            "target batch has {} values, expected {rows} x {p}",
            targets.len()
        ));
    }
    Ok(rows)
}

/// Exact analytic gradient of [`mse_loss`] over the batch.
pub fn backward(model: &MlpModel, features: &[f64], targets: &[f64]) -> Result<Gradients> {
    let rows = check_batch(model, features, targets)?;
    let (d, p) = (model.input_dim, model.output_dim);
    let scale = 1.0 / (rows * p) as f64;
    let n = model.params.len();
    let partials: Vec<(Vec<f64>, f64)> = features
        .par_chunks(CHUNK_ROWS * d)
        .zip(targets.par_chunks(CHUNK_ROWS * p))
        .map(|(x, t)| {
            let mut g = vec![0.0; n];
            let sq = model.accumulate_chunk(x, t, scale, &mut g);
            (g, sq)
        })
        .collect();
    let mut values = vec![0.0; n];
    let mut sq = 0.0;
    for (g, s) in partials {
        for (a, b) in values.iter_mut().zip(&g) {
            *a += b;
        }
        sq += s;
    }
    Ok(Gradients {
        values,
        loss: sq * scale,
    })
}

/// MSE of the model over every row of `part`.
pub fn evaluate_loss(model: &MlpModel, part: &Partition<'_>) -> Result<f64> {
    let rows = check_batch(model, part.features, part.labels)?;
    let (d, p) = (model.input_dim, model.output_dim);
    let sq: Vec<f64> = part
        .features
        .par_chunks(CHUNK_ROWS * d)
        .zip(part.labels.par_chunks(CHUNK_ROWS * p))
        .map(|(x, t)| {
            let pred = model.forward_batch(x).expect("shape checked");
            pred.iter()
                .zip(t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    Ok(sq.iter().sum::<f64>() / (rows * p) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub hidden: usize,
    #[serde(default)]
    pub activation: Activation,
    /// Momentum for SGD, first-moment decay for Adam.
    pub momentum: f64,
    /// Learning rate reached at the last epoch; the rate follows a cosine
    /// from `learning_rate` down to this value. Equal values disable decay.
    pub final_learning_rate: f64,
    /// L2 penalty coefficient on the weight matrices (biases excluded).
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 256,
            learning_rate: 1e-3,
            validation_fraction: 0.10,
            seed: 0,
            optimizer: Optimizer::Adam,
            hidden: DEFAULT_HIDDEN,
            activation: Activation::Relu,
            momentum: 0.9,
            final_learning_rate: 1e-5,
            weight_decay: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return domain("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return domain("batch size must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return domain(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return domain(format!(
                "validation fraction {} not in (0, 1)",
                self.validation_fraction
            ));
        }
        if self.hidden == 0 {
            return domain("hidden layer needs at least one unit");
        }
        if !(self.final_learning_rate.is_finite()
            && self.final_learning_rate > 0.0
            && self.final_learning_rate <= self.learning_rate)
        {
            return domain(format!(
                "final learning rate {} must be in (0, {}]",
                self.final_learning_rate, self.learning_rate
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return domain(format!(
                "weight decay {} must be non-negative",
                self.weight_decay
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return domain(format!("momentum {} not in [0, 1)", self.momentum));
        }
        Ok(())
    }

    /// Learning rate used during epoch `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.learning_rate;
        }
        let progress = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        let (hi, lo) = (self.learning_rate, self.final_learning_rate);
        lo + 0.5 * (hi - lo) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Rows used for fitting and for validation.
    pub fit_rows: usize,
    pub validation_rows: usize,
    pub config: TrainConfig,
}

impl TrainTrace {
    /// `|L[end] - L[end - window]| / L[end - window]` of the training loss.
    pub fn relative_change(&self, window: usize) -> Option<f64> {
        let n = self.train_loss.len();
        if window == 0 || n <= window {
            return None;
        }
        let then = self.train_loss[n - 1 - window];
        let now = self.train_loss[n - 1];
        Some((now - then).abs() / then)
    }
}

enum OptimizerState {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, step: i32 },
}

impl OptimizerState {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::SgdMomentum => OptimizerState::Sgd {
                velocity: vec![0.0; n],
            },
            Optimizer::Adam => OptimizerState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        }
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64, config: &TrainConfig) {
        match self {
            OptimizerState::Sgd { velocity } => {
                for ((w, g), vel) in params.iter_mut().zip(grad).zip(velocity.iter_mut()) {
                    *vel = config.momentum * *vel + g;
                    *w -= lr * *vel;
                }
            }
            OptimizerState::Adam { m, v, step } => {
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                let beta1 = config.momentum;
                *step += 1;
                let c1 = 1.0 - beta1.powi(*step);
                let c2 = 1.0 - BETA2.powi(*step);
                for i in 0..params.len() {
                    let g = grad[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

/// `true` for entries of W1 and W2.
fn weight_mask(model: &MlpModel) -> Vec<bool> {
    let o = model.offsets();
    (0..model.params.len())
        .map(|i| i < o[1] || (o[2]..o[3]).contains(&i))
        .collect()
}

/// Trains on the training partition of `dataset`. Test rows are never read.
pub fn train(dataset: &PaprDataset, config: &TrainConfig) -> Result<(MlpModel, TrainTrace)> {
    train_partition(&dataset.train(), config)
}

/// Mini-batch training on `part`.
///
/// The last `validation_fraction` of the rows is held out for validation
/// (when that leaves at least one row on each side; otherwise the validation
/// curve repeats the training curve). Losses are full passes after each
/// epoch. Initial weights and the per-epoch shuffles derive from
/// `config.seed`.
pub fn train_partition(
    part: &Partition<'_>,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainTrace)> {
    config.validate()?;
    if part.is_empty() {
        return domain("training partition is empty");
    }
    let n = part.len();
    let val_rows = (config.validation_fraction * n as f64).floor() as usize;
    let val_rows = if val_rows == 0 || val_rows >= n {
        0
    } else {
        val_rows
    };
    let fit = part.slice(0..n - val_rows);
    let val = part.slice(n - val_rows..n);

    let mut model = MlpModel::init(
        part.feature_width,
        config.hidden,
        part.label_width,
        seed::derive(config.seed, 0),
    )?;
    model.activation = config.activation;
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, 1));
    let mut state = OptimizerState::new(config.optimizer, model.params.len());
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let (d, p) = (part.feature_width, part.label_width);
    let mut bx = Vec::with_capacity(config.batch_size * d);
    let mut bt = Vec::with_capacity(config.batch_size * p);

    let mut trace = TrainTrace {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: Vec::with_capacity(config.epochs),
        fit_rows: fit.len(),
        validation_rows: val_rows,
        config: config.clone(),
    };
    let weights = weight_mask(&model);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            bx.clear();
            bt.clear();
            for &i in batch {
                bx.extend_from_slice(fit.feature_row(i));
                bt.extend_from_slice(fit.label_row(i));
            }
            let mut grad = backward(&model, &bx, &bt)?;
            if config.weight_decay > 0.0 {
                for ((g, w), &is_weight) in grad.values.iter_mut().zip(&model.params).zip(&weights)
                {
                    if is_weight {
                        *g += 2.0 * config.weight_decay * w;
                    }
                }
            }
            state.apply(&mut model.params, &grad.values, lr, config);
        }
        let train_loss = evaluate_loss(&model, &fit)?;
        let val_loss = if val_rows > 0 {
            evaluate_loss(&model, &val)?
        } else {
            train_loss
        };
        if !train_loss.is_finite() {
            return domain("training diverged (non-finite loss)");
        }
        trace.train_loss.push(train_loss);
        trace.val_loss.push(val_loss);
    }
    Ok((model, trace))
}

/// Sign-quantizes the network output into a legal pilot configuration.
pub fn predict_pilots(model: &MlpModel, features: &[f64], magnitude: f64) -> Result<PilotConfig> {
    let raw = model.forward(features)?;
    PilotConfig::new(raw.into_iter().map(Sign::of).collect(), magnitude)
}

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_config: TrainConfig,
    pub dataset_meta_hash: String,
    pub pilot_magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    input_dim: usize,
    hidden: usize,
    output_dim: usize,
    activation: Activation,
    parameter_count: usize,
    provenance: Option<Provenance>,
}

const MODEL_FORMAT: &str = "papr-mlp/1";

/// Writes a JSON header line followed by the packed parameter block
/// (`PAPRDS1` magic, little-endian `f64`).
pub fn save_model(model: &MlpModel, provenance: Option<&Provenance>, path: &Path) -> Result<()> {
    let header = ModelHeader {
        format: MODEL_FORMAT.into(),
        input_dim: model.input_dim,
        hidden: model.hidden,
        output_dim: model.output_dim,
        activation: model.activation,
        parameter_count: model.params.len(),
        provenance: provenance.cloned(),
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    bytes.extend_from_slice(BIN_MAGIC);
    write_f64_block(&mut bytes, &model.params)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(MlpModel, Option<Provenance>)> {
    let bytes = fs::read(path)?;
    let file = path.display().to_string();
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Parse(format!("{file}: missing header line")))?;
    let header: ModelHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::Parse(format!("{file}: header: {e}")))?;
    if header.format != MODEL_FORMAT {
        return Err(Error::Validation(format!(
            "{file}: unknown format `{}`",
            header.format
        )));
    }
    let body = &bytes[nl + 1..];
    if !body.starts_with(BIN_MAGIC) {
        return Err(Error::Parse(format!("{file}: missing PAPRDS1 magic")));
    }
    let params = read_f64_block(&body[BIN_MAGIC.len()..], &file)?;
    let expected = param_count(header.input_dim, header.hidden, header.output_dim);
    if header.parameter_count != expected || params.len() != expected {
        return Err(Error::Validation(format!(
            "{file}: header declares D = {}, H = {}, P = {} ({expected} parameters) but the file holds {}",
            header.input_dim,
            header.hidden,
            header.output_dim,
            params.len()
        )));
    }
    let model = MlpModel::from_parameters(
        header.input_dim,
        header.hidden,
        header.output_dim,
        header.activation,
        params,
    )?;
    Ok((model, header.provenance))
}
