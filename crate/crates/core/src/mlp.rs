//! Feed-forward classifier: ReLU hidden layers, softmax output, inverted
//! dropout during training, mini-batch gradient descent with early stopping.
//!
//! The standard shape is [10, 64, 32, 16, 2] (3412 parameters). Evaluation
//! needs no dropout rescaling because training already scales kept units by
//! 1/(1-p). A model carries the standardization statistics frozen from its
//! training set, so `predict` accepts raw (unstandardized) selected features.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::ClassLabel;
use crate::matrix::{Matrix, Standardizer};

pub const STANDARD_LAYERS: [usize; 5] = [10, 64, 32, 16, 2];

/// Output unit convention: index 0 is NotDDoS, index 1 is DDoS.
pub const DDOS_UNIT: usize = 1;

const SCHEMA: &str = "twinguard-mlp";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has {got} features, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training diverged at epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("failed to access `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file corrupt: {0}")]
    CorruptFile(String),
    #[error("model schema mismatch: {0}")]
    SchemaMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: ClassLabel,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    /// weights[l] is row-major (out x in) for the map from layer l to l+1.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    dropout_rate: f64,
    version: u64,
    standardizer: Option<Standardizer>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            learning_rate: 0.01,
            dropout: 0.2,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Full-set loss after each epoch, evaluated with dropout disabled.
    pub losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub stopped_at_epoch: Option<usize>,
    pub epochs_run: usize,
    pub train_rows: usize,
}

impl MlpModel {
    pub fn init(seed: u64) -> Self {
        Self::with_layer_sizes(&STANDARD_LAYERS, seed)
    }

    /// He-initialized weights, zero biases. Same seed, same parameters.
    pub fn with_layer_sizes(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2, "need input and output layers");
        assert_eq!(*sizes.last().unwrap(), 2, "binary classifier has 2 outputs");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (2.0 / fan_in as f64).sqrt();
            let mut layer = Vec::with_capacity(fan_out * fan_in);
            for _ in 0..fan_out * fan_in {
                let z: f64 = StandardNormal.sample(&mut rng);
                layer.push(z * scale);
            }
            weights.push(layer);
            biases.push(vec![0.0; fan_out]);
        }
        MlpModel {
            layer_sizes: sizes.to_vec(),
            weights,
            biases,
            dropout_rate: 0.2,
            version: 1,
            standardizer: None,
        }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn set_version(&mut self, v: u64) {
        self.version = v;
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn standardizer(&self) -> Option<&Standardizer> {
        self.standardizer.as_ref()
    }

    pub fn set_standardizer(&mut self, s: Option<Standardizer>) {
        self.standardizer = s;
    }

    /// Evaluation-mode forward pass on already-standardized input.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.layer_sizes[0], "input width");
        let mut a = x.to_vec();
        for l in 0..self.weights.len() {
            a = self.layer_forward(l, &a, None);
        }
        softmax_in_place(&mut a);
        a
    }

    /// One affine layer; ReLU unless it's the output layer. `mask` carries
    /// pre-scaled dropout multipliers for the layer's output units.
    fn layer_forward(&self, l: usize, a: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = &self.weights[l];
        let b = &self.biases[l];
        let last = l == self.weights.len() - 1;
        let mut out = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut z = b[o];
            for i in 0..n_in {
                z += row[i] * a[i];
            }
            let mut v = if last { z } else { z.max(0.0) };
            if let Some(m) = mask {
                v *= m[o];
            }
            out.push(v);
        }
        out
    }

    /// Applies the stored standardizer, runs the network, picks the argmax.
    /// An exact 0.5/0.5 tie resolves to DDoS: missing an attack costs more
    /// than a false alarm.
    pub fn predict(&self, features: &[f64]) -> Result<Prediction, MlpError> {
        if features.len() != self.layer_sizes[0] {
            return Err(MlpError::ShapeMismatch {
                expected: self.layer_sizes[0],
                got: features.len(),
            });
        }
        let probs = match &self.standardizer {
            Some(s) => {
                let mut z = vec![0.0; features.len()];
                s.apply_row(features, &mut z);
                self.forward(&z)
            }
            None => self.forward(features),
        };
        let p_ddos = probs[DDOS_UNIT];
        if p_ddos >= probs[1 - DDOS_UNIT] {
            Ok(Prediction { class: ClassLabel::Ddos, confidence: p_ddos })
        } else {
            Ok(Prediction { class: ClassLabel::NotDdos, confidence: probs[1 - DDOS_UNIT] })
        }
    }

    fn params_finite(&self) -> bool {
        self.weights.iter().chain(self.biases.iter()).all(|v| v.iter().all(|x| x.is_finite()))
    }
}

pub fn class_to_unit(label: ClassLabel) -> usize {
    match label {
        ClassLabel::NotDdos => 0,
        ClassLabel::Ddos => DDOS_UNIT,
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy of the network on `(x, y)` with dropout disabled.
/// Inputs are used as-is; the stored standardizer is not applied.
pub fn eval_loss(model: &MlpModel, x: &Matrix, y: &[ClassLabel]) -> f64 {
    let mut total = 0.0;
    for i in 0..x.rows() {
        let p = model.forward(x.row(i));
        total += -(p[class_to_unit(y[i])].max(1e-15)).ln();
    }
    total / x.rows() as f64
}

/// Forward pass with caches and dropout masks, then backprop, accumulating
/// parameter gradients (not yet divided by batch size).
struct Workspace {
    /// Activations per layer including input (post-dropout where applied).
    acts: Vec<Vec<f64>>,
    /// Pre-activations per non-input layer.
    zs: Vec<Vec<f64>>,
    /// Dropout multipliers (0 or 1/(1-p)) per hidden layer.
    masks: Vec<Vec<f64>>,
}

fn forward_train(
    model: &MlpModel,
    x: &[f64],
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Workspace {
    let layers = model.weights.len();
    let mut acts = Vec::with_capacity(layers + 1);
    let mut zs = Vec::with_capacity(layers);
    let mut masks = Vec::with_capacity(layers.saturating_sub(1));
    acts.push(x.to_vec());
    let mut rng = rng;
    for l in 0..layers {
        let (n_in, n_out) = (model.layer_sizes[l], model.layer_sizes[l + 1]);
        let w = &model.weights[l];
        let b = &model.biases[l];
        let a_prev = &acts[l];
        let mut z = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut s = b[o];
            for i in 0..n_in {
                s += row[i] * a_prev[i];
            }
            z.push(s);
        }
        let last = l == layers - 1;
        let mut a: Vec<f64> = if last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
        if !last {
            let keep = 1.0 - dropout;
            let mask: Vec<f64> = if dropout > 0.0 {
                let rng = rng.as_deref_mut().expect("rng required when dropout > 0");
                (0..n_out)
                    .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect()
            } else {
                vec![1.0; n_out]
            };
            for (v, m) in a.iter_mut().zip(&mask) {
                *v *= m;
            }
            masks.push(mask);
        }
        zs.push(z);
        if last {
            softmax_in_place(&mut a);
        }
        acts.push(a);
    }
    Workspace { acts, zs, masks }
}

fn backward(
    model: &MlpModel,
    ws: &Workspace,
    target_unit: usize,
    grad_w: &mut [Vec<f64>],
    grad_b: &mut [Vec<f64>],
) {
    let layers = model.weights.len();
    // Softmax + cross-entropy: delta at the output is (p - onehot).
    let mut delta: Vec<f64> = ws.acts[layers].clone();
    delta[target_unit] -= 1.0;
    for l in (0..layers).rev() {
        let (n_in, n_out) = (model.layer_sizes[l], model.layer_sizes[l + 1]);
        let a_prev = &ws.acts[l];
        for o in 0..n_out {
            let d = delta[o];
            if d != 0.0 {
                let grow = &mut grad_w[l][o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * a_prev[i];
                }
                grad_b[l][o] += d;
            }
        }
        if l > 0 {
            let w = &model.weights[l];
            let z_prev = &ws.zs[l - 1];
            let mask_prev = &ws.masks[l - 1];
            let mut next = vec![0.0; n_in];
            for (i, nx) in next.iter_mut().enumerate() {
                if z_prev[i] > 0.0 && mask_prev[i] != 0.0 {
                    let mut s = 0.0;
                    for o in 0..n_out {
                        s += w[o * n_in + i] * delta[o];
                    }
                    *nx = s * mask_prev[i];
                }
            }
            delta = next;
        }
    }
}

/// Trains a copy of `model` on `(x, y)` (raw features; standardization is
/// fitted here and frozen into the returned model). The input model is left
/// untouched, so a caller keeps its current model if training diverges.
pub fn train(
    model: &MlpModel,
    x: &Matrix,
    y: &[ClassLabel],
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainHistory), MlpError> {
    if x.rows() == 0 {
        return Err(MlpError::EmptyTrainingSet);
    }
    if x.cols() != model.layer_sizes[0] {
        return Err(MlpError::ShapeMismatch { expected: model.layer_sizes[0], got: x.cols() });
    }
    assert_eq!(x.rows(), y.len(), "one label per row");

    let standardizer = Standardizer::fit(x);
    let xs = standardizer.apply(x);

    let mut out = model.clone();
    out.dropout_rate = cfg.dropout;
    out.standardizer = Some(standardizer);
    let mut history = TrainHistory { train_rows: x.rows(), ..Default::default() };
    if cfg.epochs == 0 {
        return Ok((out, history));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Stratified 15% validation split for early stopping, when there is
    // enough data for one.
    let (train_idx, val_idx) = split_validation(y, &mut rng);
    let use_val = !val_idx.is_empty() && cfg.patience > 0;

    let mut grad_w: Vec<Vec<f64>> = out.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = out.biases.iter().map(|b| vec![0.0; b.len()]).collect();

    let mut order = train_idx.clone();
    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> = None;
    let mut since_improve = 0usize;
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            for g in grad_w.iter_mut().chain(grad_b.iter_mut()) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in chunk {
                let ws = forward_train(&out, xs.row(i), cfg.dropout, Some(&mut rng));
                backward(&out, &ws, class_to_unit(y[i]), &mut grad_w, &mut grad_b);
            }
            let step = cfg.learning_rate / chunk.len() as f64;
            for l in 0..out.weights.len() {
                for (w, g) in out.weights[l].iter_mut().zip(&grad_w[l]) {
                    *w -= step * g;
                }
                for (b, g) in out.biases[l].iter_mut().zip(&grad_b[l]) {
                    *b -= step * g;
                }
            }
        }
        let loss = eval_loss(&out, &xs, y);
        history.losses.push(loss);
        history.epochs_run = epoch + 1;
        if !loss.is_finite() || !out.params_finite() {
            return Err(MlpError::DivergenceDetected { epoch });
        }
        if use_val {
            let val_x = xs.select_rows(&val_idx);
            let val_y: Vec<ClassLabel> = val_idx.iter().map(|&i| y[i]).collect();
            let val_loss = eval_loss(&out, &val_x, &val_y);
            history.val_losses.push(val_loss);
            let improved = best.as_ref().map_or(true, |(b, _, _)| val_loss < *b);
            if improved {
                best = Some((val_loss, out.weights.clone(), out.biases.clone()));
                since_improve = 0;
            } else {
                since_improve += 1;
                if since_improve >= cfg.patience {
                    history.stopped_at_epoch = Some(epoch + 1);
                    break;
                }
            }
        }
    }
    if let Some((_, w, b)) = best {
        out.weights = w;
        out.biases = b;
    }
    Ok((out, history))
}

fn split_validation(y: &[ClassLabel], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n = y.len();
    let mut per_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, label) in y.iter().enumerate() {
        per_class[class_to_unit(*label)].push(i);
    }
    let enough = n >= 40 && per_class.iter().all(|c| c.is_empty() || c.len() >= 10);
    if !enough {
        return ((0..n).collect(), Vec::new());
    }
    let mut train = Vec::with_capacity(n);
    let mut val = Vec::new();
    for class in per_class.iter_mut() {
        class.shuffle(rng);
        let take = (class.len() * 15) / 100;
        val.extend_from_slice(&class[..take]);
        train.extend_from_slice(&class[take..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Maximum relative error between analytic and central-difference gradients
/// of the mean cross-entropy on `(x, y)`, dropout disabled.
pub fn grad_check(model: &MlpModel, x: &Matrix, y: &[ClassLabel], eps: f64) -> f64 {
    let mut m = model.clone();
    let n = x.rows() as f64;

    let mut grad_w: Vec<Vec<f64>> = m.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = m.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    for i in 0..x.rows() {
        let ws = forward_train(&m, x.row(i), 0.0, None);
        backward(&m, &ws, class_to_unit(y[i]), &mut grad_w, &mut grad_b);
    }
    for g in grad_w.iter_mut().chain(grad_b.iter_mut()) {
        g.iter_mut().for_each(|v| *v /= n);
    }

    let layers = m.weights.len();
    let mut max_rel: f64 = 0.0;
    for l in 0..layers {
        for is_bias in [false, true] {
            let len = if is_bias { m.biases[l].len() } else { m.weights[l].len() };
            for p in 0..len {
                let orig = if is_bias { m.biases[l][p] } else { m.weights[l][p] };
                let poke = |m: &mut MlpModel, v: f64| {
                    if is_bias {
                        m.biases[l][p] = v;
                    } else {
                        m.weights[l][p] = v;
                    }
                };
                poke(&mut m, orig + eps);
                let up = eval_loss(&m, x, y);
                poke(&mut m, orig - eps);
                let down = eval_loss(&m, x, y);
                poke(&mut m, orig);
                let numeric = (up - down) / (2.0 * eps);
                let analytic = if is_bias { grad_b[l][p] } else { grad_w[l][p] };
                let denom = (analytic.abs() + numeric.abs()).max(1e-6);
                max_rel = max_rel.max((analytic - numeric).abs() / denom);
            }
        }
    }
    max_rel
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    format_version: u32,
    layer_sizes: Vec<usize>,
    dropout_rate: f64,
    version: u64,
    standardizer: Option<StandardizerFile>,
    params: String,
}

#[derive(Serialize, Deserialize)]
struct StandardizerFile {
    mean: String,
    std: String,
}

fn encode_f64s(vals: impl Iterator<Item = f64>) -> String {
    let mut bytes = Vec::new();
    for v in vals {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_f64s(s: &str) -> Result<Vec<f64>, MlpError> {
    let bytes = B64
        .decode(s)
        .map_err(|e| MlpError::CorruptFile(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(MlpError::CorruptFile("parameter blob length not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

impl MlpModel {
    /// Container format: JSON header plus base64-encoded little-endian f64
    /// blobs. Round trips bit-exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let params = encode_f64s(
            self.weights
                .iter()
                .chain(self.biases.iter())
                .flat_map(|v| v.iter().copied()),
        );
        let file = ModelFile {
            schema: SCHEMA.into(),
            format_version: FORMAT_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            dropout_rate: self.dropout_rate,
            version: self.version,
            standardizer: self.standardizer.as_ref().map(|s| StandardizerFile {
                mean: encode_f64s(s.mean.iter().copied()),
                std: encode_f64s(s.std.iter().copied()),
            }),
            params,
        };
        let mut bytes = serde_json::to_vec_pretty(&file).expect("model serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel, MlpError> {
        let file: ModelFile = serde_json::from_slice(bytes)
            .map_err(|e| MlpError::CorruptFile(e.to_string()))?;
        if file.schema != SCHEMA {
            return Err(MlpError::SchemaMismatch(format!("schema `{}`", file.schema)));
        }
        if file.format_version != FORMAT_VERSION {
            return Err(MlpError::SchemaMismatch(format!(
                "format version {}",
                file.format_version
            )));
        }
        if file.layer_sizes.len() < 2 || *file.layer_sizes.last().unwrap() != 2 {
            return Err(MlpError::SchemaMismatch(format!(
                "layer sizes {:?}",
                file.layer_sizes
            )));
        }
        let params = decode_f64s(&file.params)?;
        let expected: usize = file.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if params.len() != expected {
            return Err(MlpError::SchemaMismatch(format!(
                "parameter count {} does not match layer sizes {:?}",
                params.len(),
                file.layer_sizes
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut cursor = 0;
        for w in file.layer_sizes.windows(2) {
            let len = w[0] * w[1];
            weights.push(params[cursor..cursor + len].to_vec());
            cursor += len;
        }
        for w in file.layer_sizes.windows(2) {
            let len = w[1];
            biases.push(params[cursor..cursor + len].to_vec());
            cursor += len;
        }
        let standardizer = match file.standardizer {
            Some(s) => {
                let mean = decode_f64s(&s.mean)?;
                let std = decode_f64s(&s.std)?;
                if mean.len() != file.layer_sizes[0] || std.len() != file.layer_sizes[0] {
                    return Err(MlpError::SchemaMismatch(
                        "standardizer width does not match input layer".into(),
                    ));
                }
                Some(Standardizer { mean, std })
            }
            None => None,
        };
        Ok(MlpModel {
            layer_sizes: file.layer_sizes,
            weights,
            biases,
            dropout_rate: file.dropout_rate,
            version: file.version,
            standardizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), MlpError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| MlpError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<MlpModel, MlpError> {
        let bytes = std::fs::read(path).map_err(|e| MlpError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::two_gaussians;

    #[test]
    fn standard_shape_parameter_count() {
        // 10*64+64 + 64*32+32 + 32*16+16 + 16*2+2
        let m = MlpModel::init(1);
        assert_eq!(m.param_count(), 3346);
        assert_eq!(m.layer_sizes(), &STANDARD_LAYERS);
    }

    #[test]
    fn init_is_seed_deterministic_with_zero_biases() {
        let a = MlpModel::init(9);
        let b = MlpModel::init(9);
        let c = MlpModel::init(10);
        assert_eq!(a, b);
        assert_ne!(a.weights[0], c.weights[0]);
        assert!(a.biases.iter().all(|b| b.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn forward_is_a_probability_vector() {
        let m = MlpModel::init(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..10).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let p = m.forward(&x);
            assert_eq!(p.len(), 2);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
            assert!(p[0] >= 0.0 && p[1] >= 0.0);
        }
    }

    #[test]
    fn exact_tie_predicts_ddos() {
        let mut m = MlpModel::init(3);
        for w in m.weights.iter_mut().chain(m.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        let p = m.predict(&[0.0; 10]).unwrap();
        assert_eq!(p.class, ClassLabel::Ddos);
        assert!((p.confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_wrong_width() {
        let m = MlpModel::init(3);
        assert!(matches!(m.predict(&[0.0; 9]), Err(MlpError::ShapeMismatch { expected: 10, got: 9 })));
    }

    #[test]
    fn trains_to_high_accuracy_on_separable_data() {
        let (x, y) = two_gaussians(400, 10, 0.5, 3.0, 21);
        let cfg = TrainConfig { epochs: 60, seed: 4, ..Default::default() };
        let (m, hist) = train(&MlpModel::init(7), &x, &y, &cfg).unwrap();
        assert!(hist.epochs_run >= 1);
        let correct = (0..x.rows())
            .filter(|&i| m.predict(x.row(i)).unwrap().class == y[i])
            .count();
        assert!(correct as f64 / x.rows() as f64 > 0.97, "accuracy {}", correct as f64 / x.rows() as f64);
        assert!(hist.losses.last().unwrap() < &0.2);
    }

    #[test]
    fn zero_epochs_changes_nothing_but_stats() {
        let (x, y) = two_gaussians(50, 10, 0.5, 3.0, 2);
        let base = MlpModel::init(7);
        let (m, hist) = train(&base, &x, &y, &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
        assert!(hist.losses.is_empty());
        assert_eq!(hist.epochs_run, 0);
        assert_eq!(m.weights, base.weights);
        assert_eq!(m.biases, base.biases);
        assert!(m.standardizer().is_some());
    }

    #[test]
    fn full_batch_small_lr_loss_is_non_increasing() {
        let (x, y) = two_gaussians(120, 10, 0.5, 2.0, 13);
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 1000,
            learning_rate: 0.001,
            dropout: 0.0,
            patience: 0,
            seed: 1,
        };
        let (_, hist) = train(&MlpModel::init(3), &x, &y, &cfg).unwrap();
        for w in hist.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "loss rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let (x, y) = two_gaussians(100, 10, 0.5, 3.0, 2);
        let cfg = TrainConfig { epochs: 50, learning_rate: 1e10, seed: 1, ..Default::default() };
        assert!(matches!(
            train(&MlpModel::init(7), &x, &y, &cfg),
            Err(MlpError::DivergenceDetected { .. })
        ));
    }

    #[test]
    fn early_stopping_restores_best_weights() {
        let (x, y) = two_gaussians(300, 10, 0.5, 1.0, 8);
        let cfg = TrainConfig { epochs: 200, patience: 5, seed: 3, ..Default::default() };
        let (_, hist) = train(&MlpModel::init(1), &x, &y, &cfg).unwrap();
        if let Some(stop) = hist.stopped_at_epoch {
            assert!(stop < 200);
            assert_eq!(hist.epochs_run, stop);
        }
        assert!(!hist.val_losses.is_empty());
    }

    #[test]
    fn gradients_match_central_differences() {
        // Fresh models have all-zero biases, so a row that kills an entire
        // hidden layer pins every downstream pre-activation to exactly 0.0,
        // the one point where relu' and a central difference legitimately
        // disagree. Jitter the biases off the kink before checking.
        let mut m = MlpModel::with_layer_sizes(&[10, 8, 6, 4, 2], 11);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for b in &mut m.biases {
            for v in b.iter_mut() {
                *v = rng.gen_range(-0.05..0.05);
            }
        }
        let (x, y) = two_gaussians(8, 10, 0.5, 2.0, 17);
        let err = grad_check(&m, &x, &y, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_survives_saturated_batches() {
        // Train to near-zero loss first; gradients become tiny but the check
        // must stay well-conditioned.
        let (x, y) = two_gaussians(40, 10, 0.5, 6.0, 5);
        let cfg = TrainConfig { epochs: 80, dropout: 0.0, seed: 2, ..Default::default() };
        let (m, _) = train(&MlpModel::with_layer_sizes(&[10, 8, 6, 4, 2], 1), &x, &y, &cfg).unwrap();
        let xs = m.standardizer().unwrap().apply(&x);
        let mut plain = m.clone();
        plain.set_standardizer(None);
        let err = grad_check(&plain, &xs, &y, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn save_load_round_trips_bit_exactly() {
        let (x, y) = two_gaussians(200, 10, 0.6, 3.0, 31);
        let cfg = TrainConfig { epochs: 20, seed: 9, ..Default::default() };
        let (mut m, _) = train(&MlpModel::init(5), &x, &y, &cfg).unwrap();
        m.set_version(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let loaded = MlpModel::load(&path).unwrap();
        assert_eq!(m, loaded);
        for i in 0..20 {
            let a = m.predict(x.row(i)).unwrap();
            let b = loaded.predict(x.row(i)).unwrap();
            assert_eq!(a.class, b.class);
            assert_eq!(a.confidence.to_bits(), b.confidence.to_bits());
        }
    }

    #[test]
    fn corrupt_and_mismatched_files_are_distinguished() {
        let m = MlpModel::init(1);
        let bytes = m.to_bytes();
        assert!(matches!(
            MlpModel::from_bytes(&bytes[..bytes.len() / 2]),
            Err(MlpError::CorruptFile(_))
        ));
        let text = String::from_utf8(bytes).unwrap();
        let tampered = text.replace("\"twinguard-mlp\"", "\"other-model\"");
        assert!(matches!(
            MlpModel::from_bytes(tampered.as_bytes()),
            Err(MlpError::SchemaMismatch(_))
        ));
        // Layer size header that disagrees with the parameter blob.
        let tampered = text.replace("64", "63");
        assert!(matches!(
            MlpModel::from_bytes(tampered.as_bytes()),
            Err(MlpError::SchemaMismatch(_))
        ));
    }
}
