//! A small in-repo differentiable classifier: a ReLU MLP with logit output,
//! softmax cross-entropy loss with input-gradient backprop, a seeded
//! mini-batch SGD trainer, and MNIST IDX ingestion.

pub mod mnist;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lincon::DenseVector;
use crate::oracles::GradientOracle;

pub use mnist::{load_mnist, Dataset};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model file version {0}")]
    BadVersion(u32),
    #[error("layer dims must chain and hold at least input and output")]
    BadArchitecture,
    #[error("model parameters contain non-finite values")]
    NonFiniteParameters,
    #[error("input dim {got} does not match model input {expected}")]
    InputDimMismatch { expected: usize, got: usize },
    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Mnist(#[from] mnist::MnistError),
}

/// Fully connected ReLU network; the last layer is linear (logits).
/// Weights are row-major `out x in` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Builds a model from explicit parameters, validating the chain.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(ModelError::BadArchitecture);
        }
        let layers = layer_dims.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(ModelError::BadArchitecture);
        }
        for l in 0..layers {
            if weights[l].len() != layer_dims[l] * layer_dims[l + 1]
                || biases[l].len() != layer_dims[l + 1]
            {
                return Err(ModelError::BadArchitecture);
            }
            if weights[l].iter().chain(&biases[l]).any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteParameters);
            }
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
        })
    }

    /// Zero-initialized model (useful as a fixture: all logits are 0).
    pub fn zeros(layer_dims: Vec<usize>) -> Result<Self, ModelError> {
        let layers = layer_dims.len().saturating_sub(1);
        let weights = (0..layers)
            .map(|l| vec![0.0; layer_dims[l] * layer_dims[l + 1]])
            .collect();
        let biases = (0..layers).map(|l| vec![0.0; layer_dims[l + 1]]).collect();
        Self::from_parts(layer_dims, weights, biases)
    }

    /// Glorot-uniform initialization from a seed.
    pub fn random_init(layer_dims: Vec<usize>, seed: u64) -> Result<Self, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims.len().saturating_sub(1);
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-scale..scale))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Self::from_parts(layer_dims, weights, biases)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Single weight `W[layer][out][in]` (row-major storage).
    pub fn weight(&self, layer: usize, out: usize, input: usize) -> f64 {
        self.weights[layer][out * self.layer_dims[layer] + input]
    }

    pub fn bias(&self, layer: usize, out: usize) -> f64 {
        self.biases[layer][out]
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn check_input(&self, x: &DenseVector) -> Result<(), ModelError> {
        if x.dim() != self.input_dim() {
            return Err(ModelError::InputDimMismatch {
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Logits for one input.
    pub fn forward(&self, x: &DenseVector) -> Result<DenseVector, ModelError> {
        self.check_input(x)?;
        let mut act = x.as_slice().to_vec();
        let layers = self.weights.len();
        for l in 0..layers {
            act = self.layer_forward(l, &act, l + 1 < layers);
        }
        Ok(DenseVector::from(act))
    }

    fn layer_forward(&self, l: usize, input: &[f64], relu: bool) -> Vec<f64> {
        let n_in = self.layer_dims[l];
        let n_out = self.layer_dims[l + 1];
        let w = &self.weights[l];
        let mut out = self.biases[l].clone();
        for (o, out_v) in out.iter_mut().enumerate().take(n_out) {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            *out_v += acc;
            if relu && *out_v < 0.0 {
                *out_v = 0.0;
            }
        }
        out
    }

    /// Forward pass keeping every layer's post-activation output;
    /// `activations[0]` is the input, the last entry is the logits.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.to_vec());
        for l in 0..layers {
            let next = self.layer_forward(l, activations.last().unwrap(), l + 1 < layers);
            activations.push(next);
        }
        activations
    }

    /// Class prediction: argmax of the logits, lowest index on ties.
    pub fn predict(&self, x: &DenseVector) -> Result<usize, ModelError> {
        let logits = self.forward(x)?;
        Ok(argmax(logits.as_slice()))
    }

    /// Fraction of the dataset classified correctly.
    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct: usize = (0..data.len())
            .into_par_iter()
            .map(|i| {
                let x = data.image(i);
                let trace = self.forward_trace(x);
                usize::from(argmax(trace.last().unwrap()) == data.label(i) as usize)
            })
            .sum();
        correct as f64 / data.len() as f64
    }

    /// Cross-entropy of softmax(logits) against `target` plus the gradient
    /// with respect to the input, by backpropagation.
    pub fn loss_and_input_grad(
        &self,
        x: &DenseVector,
        target: usize,
    ) -> Result<(f64, DenseVector), ModelError> {
        self.check_input(x)?;
        let activations = self.forward_trace(x.as_slice());
        let logits = activations.last().unwrap();
        let (loss, mut delta) = softmax_ce_backward(logits, target);
        // Backpropagate delta through each layer down to the input.
        for l in (0..self.weights.len()).rev() {
            let n_in = self.layer_dims[l];
            let n_out = self.layer_dims[l + 1];
            let w = &self.weights[l];
            let mut prev_delta = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate().take(n_out) {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (pd, wi) in prev_delta.iter_mut().zip(row) {
                    *pd += d * wi;
                }
            }
            if l > 0 {
                // ReLU mask of the producing layer's output.
                for (pd, a) in prev_delta.iter_mut().zip(&activations[l]) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
        Ok((loss, DenseVector::from(delta)))
    }

    /// Value-only attack loss (no gradient work).
    pub fn loss(&self, x: &DenseVector, target: usize) -> Result<f64, ModelError> {
        let logits = self.forward(x)?;
        Ok(cross_entropy(logits.as_slice(), target))
    }

    /// Serializes to versioned JSON with full-precision reals.
    pub fn save_json(&self, path: &Path) -> Result<(), ModelError> {
        let file = ModelFile {
            version: 1,
            layer_dims: self.layer_dims.clone(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
        };
        let mut out = serde_json::to_vec(&file)?;
        out.push(b'\n');
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        let file: ModelFile = serde_json::from_slice(&bytes)?;
        if file.version != 1 {
            return Err(ModelError::BadVersion(file.version));
        }
        Self::from_parts(file.layer_dims, file.weights, file.biases)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// log(sum exp(z)) with the max factored out.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of softmax(logits) against the target index.
fn cross_entropy(logits: &[f64], target: usize) -> f64 {
    log_sum_exp(logits) - logits[target]
}

/// Loss and d(loss)/d(logits) = softmax(logits) - one_hot(target).
fn softmax_ce_backward(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = m + sum.ln() - logits[target];
    let mut delta: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    delta[target] -= 1.0;
    (loss, delta)
}

/// Targeted attack loss `f(x) = ce(model(x), target)`; minimizing it drives
/// the prediction toward the target class.
pub struct AttackLoss<'a> {
    model: &'a MlpModel,
    target: usize,
}

impl<'a> AttackLoss<'a> {
    pub fn new(model: &'a MlpModel, target: usize) -> Self {
        debug_assert!(target < model.num_classes());
        Self { model, target }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn model(&self) -> &MlpModel {
        self.model
    }
}

impl GradientOracle for AttackLoss<'_> {
    fn dim(&self) -> usize {
        self.model.input_dim()
    }

    fn eval(&self, x: &DenseVector) -> (f64, DenseVector) {
        self.model
            .loss_and_input_grad(x, self.target)
            .expect("attack loss evaluated at wrong dimension")
    }

    fn value(&self, x: &DenseVector) -> f64 {
        self.model
            .loss(x, self.target)
            .expect("attack loss evaluated at wrong dimension")
    }
}

/// Trainer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Lands the default MLP at ~0.978 test accuracy on MNIST.
        Self {
            epochs: 8,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 42,
        }
    }
}

struct GradBuffer {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    loss: f64,
}

impl GradBuffer {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            loss: 0.0,
        }
    }

    fn merge(&mut self, other: &GradBuffer) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.loss += other.loss;
    }
}

/// Accumulates one example's parameter gradients into `buf`.
fn backprop_params(model: &MlpModel, x: &[f64], label: usize, buf: &mut GradBuffer) {
    let activations = model.forward_trace(x);
    let logits = activations.last().unwrap();
    let (loss, mut delta) = softmax_ce_backward(logits, label);
    buf.loss += loss;
    for l in (0..model.weights.len()).rev() {
        let n_in = model.layer_dims[l];
        let n_out = model.layer_dims[l + 1];
        let input = &activations[l];
        // dW[o][i] += delta[o] * input[i]; db[o] += delta[o].
        for (o, d) in delta.iter().enumerate().take(n_out) {
            if *d == 0.0 {
                continue;
            }
            let row = &mut buf.weights[l][o * n_in..(o + 1) * n_in];
            for (g, a) in row.iter_mut().zip(input) {
                *g += d * a;
            }
            buf.biases[l][o] += d;
        }
        if l > 0 {
            let w = &model.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate().take(n_out) {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (pd, wi) in prev.iter_mut().zip(row) {
                    *pd += d * wi;
                }
            }
            for (pd, a) in prev.iter_mut().zip(&activations[l]) {
                if *a <= 0.0 {
                    *pd = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Mini-batch SGD with momentum, fully deterministic from the seed: batch
/// order, initialization, and even the parallel gradient reduction (fixed
/// chunking, merged in index order).
pub fn train(
    data: &Dataset,
    layer_dims: &[usize],
    cfg: &TrainConfig,
) -> Result<MlpModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let mut model = MlpModel::random_init(layer_dims.to_vec(), cfg.seed)?;
    let mut vel_w: Vec<Vec<f64>> = model.weights.iter().map(|w| vec![0.0; w.len()]).collect();
    let mut vel_b: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5bd1_e995);
    let chunks = 4;

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let chunk_size = batch.len().div_ceil(chunks);
            let partials: Vec<GradBuffer> = batch
                .par_chunks(chunk_size.max(1))
                .map(|chunk| {
                    let mut buf = GradBuffer::zeros_like(&model);
                    for &i in chunk {
                        backprop_params(&model, data.image(i), data.label(i) as usize, &mut buf);
                    }
                    buf
                })
                .collect();
            let mut total = GradBuffer::zeros_like(&model);
            for p in &partials {
                total.merge(p);
            }
            if !total.loss.is_finite() {
                return Err(ModelError::TrainingDiverged { epoch });
            }
            let scale = 1.0 / batch.len() as f64;
            for l in 0..model.weights.len() {
                for ((w, v), g) in model.weights[l]
                    .iter_mut()
                    .zip(&mut vel_w[l])
                    .zip(&total.weights[l])
                {
                    *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                    *w += *v;
                }
                for ((b, v), g) in model.biases[l]
                    .iter_mut()
                    .zip(&mut vel_b[l])
                    .zip(&total.biases[l])
                {
                    *v = cfg.momentum * *v - cfg.learning_rate * g * scale;
                    *b += *v;
                }
            }
        }
    }
    Ok(model)
}

/// Fisher-Yates with our seeded stream (stable across rand versions).
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}
