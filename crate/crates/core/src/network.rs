//! Fully connected feedforward classifier trained with minibatch SGD and
//! momentum on softmax cross-entropy.
//!
//! Batches are row-major: one example per row. Each layer computes
//! `z = h W + b` with `W` of shape `fan_in × fan_out`.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::activation::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::phase::PhasePoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of hidden layers.
    pub depth: usize,
    /// Neurons per hidden layer.
    pub width: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: ActivationKind,
    pub init: PhasePoint,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn mnist(depth: usize, width: usize, init: PhasePoint, seed: u64) -> Self {
        NetworkConfig {
            depth,
            width,
            input_dim: 784,
            output_dim: 10,
            activation: ActivationKind::Tanh,
            init,
            seed,
        }
    }

    pub fn with_activation(mut self, activation: ActivationKind) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config(format!(
                "network dimensions must be positive (depth {}, width {}, input {}, output {})",
                self.depth, self.width, self.input_dim, self.output_dim
            )));
        }
        PhasePoint::new(self.init.sigma_w2, self.init.sigma_b2)?;
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, readout last.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.depth + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.depth {
            shapes.push((fan_in, self.width));
            fan_in = self.width;
        }
        shapes.push((fan_in, self.output_dim));
        shapes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Hidden layers followed by the linear readout.
    pub layers: Vec<Layer>,
    pub config: NetworkConfig,
    activation: Activation,
}

/// Draw weights from `N(0, σ_w²/fan_in)` and biases from `N(0, σ_b²)`,
/// readout included.
pub fn init_network(config: NetworkConfig) -> Result<Network> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let PhasePoint { sigma_w2, sigma_b2 } = config.init;
    let layers = config
        .shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w_scale = (sigma_w2 / fan_in as f64).sqrt();
            let b_scale = sigma_b2.sqrt();
            let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                w_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            });
            let biases = Array1::from_shape_simple_fn(fan_out, || {
                b_scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            });
            Layer { weights, biases }
        })
        .collect();
    Ok(Network { layers, activation: config.activation.activation(), config })
}

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    /// Pre-activations of each hidden layer.
    pub pre: Vec<Array2<f64>>,
    /// Post-activations of each hidden layer.
    pub post: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl ForwardCache {
    /// Empirical variance of every hidden layer's pre-activations, pooled
    /// over neurons and examples.
    pub fn preactivation_variances(&self) -> Vec<f64> {
        self.pre.iter().map(|z| pooled_variance(z.view())).collect()
    }
}

pub(crate) fn pooled_variance(a: ArrayView2<f64>) -> f64 {
    let n = a.len() as f64;
    let mean = a.sum() / n;
    a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn norm(&self) -> f64 {
        let w: f64 = self.weights.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum();
        let b: f64 = self.biases.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum();
        (w + b).sqrt()
    }
}

impl Network {
    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn depth(&self) -> usize {
        self.config.depth
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, batch: ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.config.input_dim {
            return Err(Error::Dimension { expected: self.config.input_dim, found: batch.ncols() });
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(batch)?;
        let phi = self.activation.phi;
        let (hidden, readout) = self.layers.split_at(self.layers.len() - 1);
        let mut pre = Vec::with_capacity(hidden.len());
        let mut post: Vec<Array2<f64>> = Vec::with_capacity(hidden.len());
        for layer in hidden {
            let h = post.last().map(|p| p.view()).unwrap_or(batch);
            let z = h.dot(&layer.weights) + &layer.biases;
            post.push(z.mapv(phi));
            pre.push(z);
        }
        let h = post.last().map(|p| p.view()).unwrap_or(batch);
        let logits = h.dot(&readout[0].weights) + &readout[0].biases;
        Ok(ForwardCache { input: batch.to_owned(), pre, post, logits })
    }

    /// Logits only, without keeping intermediate layers.
    pub fn predict(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(batch)?;
        let phi = self.activation.phi;
        let (hidden, readout) = self.layers.split_at(self.layers.len() - 1);
        let mut h = batch.to_owned();
        for layer in hidden {
            h = (h.dot(&layer.weights) + &layer.biases).mapv_into(phi);
        }
        Ok(h.dot(&readout[0].weights) + &readout[0].biases)
    }

    /// Mean cross-entropy gradients for a cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> Result<Gradients> {
        let batch = cache.logits.nrows();
        check_labels(labels, batch, self.config.output_dim)?;
        let mut delta = softmax(cache.logits.view());
        for (row, &label) in labels.iter().enumerate() {
            delta[[row, label]] -= 1.0;
        }
        delta /= batch as f64;

        let n_layers = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n_layers];
        let mut biases = vec![Array1::zeros(0); n_layers];
        let dphi = self.activation.dphi;
        for l in (0..n_layers).rev() {
            let h = if l == 0 { cache.input.view() } else { cache.post[l - 1].view() };
            weights[l] = h.t().dot(&delta);
            biases[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].weights.t());
                Zip::from(&mut back).and(&cache.pre[l - 1]).for_each(|d, &z| *d *= dphi(z));
                delta = back;
            }
        }
        Ok(Gradients { weights, biases })
    }

    /// Mean cross-entropy loss and number of correct argmax predictions.
    pub fn loss_and_correct(&self, batch: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, usize)> {
        let logits = self.predict(batch)?;
        check_labels(labels, logits.nrows(), self.config.output_dim)?;
        Ok((cross_entropy(logits.view(), labels), count_correct(logits.view(), labels)))
    }

    pub fn accuracy(&self, data: &LabeledData) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0;
        for start in (0..data.len()).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(data.len());
            let logits = self.predict(data.features.slice(s![start..end, ..]))?;
            correct += count_correct(logits.view(), &data.labels[start..end]);
        }
        Ok(correct as f64 / data.len() as f64)
    }

    fn apply(&mut self, grads: &Gradients, velocity: &mut Gradients, lr: f64, momentum: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let vw = &mut velocity.weights[l];
            Zip::from(&mut *vw).and(&grads.weights[l]).for_each(|v, &g| *v = momentum * *v + g);
            layer.weights.scaled_add(-lr, vw);
            let vb = &mut velocity.biases[l];
            Zip::from(&mut *vb).and(&grads.biases[l]).for_each(|v, &g| *v = momentum * *v + g);
            layer.biases.scaled_add(-lr, vb);
        }
    }

    fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: self.layers.iter().map(|l| Array1::zeros(l.biases.raw_dim())).collect(),
        }
    }
}

const EVAL_CHUNK: usize = 1024;

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Dimension { expected: rows, found: labels.len() });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidLabel { label, classes });
    }
    Ok(())
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    out
}

/// `logsumexp(row) − row[label]`, with the row maximum taken out first.
fn example_loss(row: ArrayView1<f64>, label: usize) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    (max - row[label]) + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Mean softmax cross-entropy.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> f64 {
    let total: f64 = logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &label)| example_loss(row, label))
        .sum();
    total / labels.len() as f64
}

fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn count_correct(logits: ArrayView2<f64>, labels: &[usize]) -> usize {
    logits.rows().into_iter().zip(labels).filter(|(row, &label)| argmax(row.view()) == label).count()
}

/// Features (one example per row) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::CountMismatch { images: features.nrows(), labels: labels.len() });
        }
        Ok(LabeledData { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub epochs: usize,
    /// Seeds the per-epoch shuffle.
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, batch_size: 64, momentum: 0.8, epochs: 3, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!("learning rate {} must be non-negative", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy on the minibatches as they were seen during the epoch.
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Wall time is not part of a run's identity.
impl PartialEq for EpochMetrics {
    fn eq(&self, other: &Self) -> bool {
        (self.epoch, self.train_loss, self.train_accuracy, self.test_accuracy)
            == (other.epoch, other.train_loss, other.train_accuracy, other.test_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainRecord {
    pub initial_test_accuracy: f64,
    pub epochs: Vec<EpochMetrics>,
    /// Pre-activation variance of each hidden layer on the test inputs after
    /// the last completed epoch.
    pub final_preactivation_variances: Vec<f64>,
}

impl TrainRecord {
    pub fn final_test_accuracy(&self) -> f64 {
        self.epochs.last().map_or(self.initial_test_accuracy, |e| e.test_accuracy)
    }
}

pub fn train(net: &mut Network, train_data: &LabeledData, test_data: &LabeledData, tcfg: &TrainConfig) -> Result<TrainRecord> {
    tcfg.validate()?;
    check_labels(&train_data.labels, train_data.len(), net.config.output_dim)?;
    check_labels(&test_data.labels, test_data.len(), net.config.output_dim)?;
    let mut record = TrainRecord { initial_test_accuracy: net.accuracy(test_data)?, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.rng_seed);
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut velocity = net.zero_gradients();
    let dim = net.config.input_dim;

    for epoch in 0..tcfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(tcfg.batch_size) {
            let mut batch = Array2::zeros((chunk.len(), dim));
            for (row, &idx) in chunk.iter().enumerate() {
                batch.row_mut(row).assign(&train_data.features.row(idx));
            }
            let labels: Vec<usize> = chunk.iter().map(|&i| train_data.labels[i]).collect();
            let cache = net.forward(batch.view())?;
            let loss = cross_entropy(cache.logits.view(), &labels);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, partial: Box::new(record) });
            }
            loss_sum += loss * chunk.len() as f64;
            correct += count_correct(cache.logits.view(), &labels);
            let grads = net.backward(&cache, &labels)?;
            net.apply(&grads, &mut velocity, tcfg.learning_rate, tcfg.momentum);
        }
        let n = train_data.len().max(1) as f64;
        let test_accuracy = net.accuracy(test_data)?;
        record.epochs.push(EpochMetrics {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            test_accuracy,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    if !test_data.is_empty() {
        let probe = test_data.features.slice(s![..test_data.len().min(EVAL_CHUNK), ..]);
        record.final_preactivation_variances = net.forward(probe)?.preactivation_variances();
    }
    Ok(record)
}
