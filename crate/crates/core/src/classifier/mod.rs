//! A small 1-D convolutional classifier over raw I/Q windows, trained with
//! plain mini-batch gradient descent.
//!
//! Input is a `2 x W` tensor (I plane, Q plane) built from a power-normalized
//! window. The network is `C` stages of conv(F, K, same padding) + ReLU +
//! max-pool 2, then a ReLU dense layer of width `H` and a softmax over the
//! `T` transmitters. The `H` hidden activations are the exported features.

mod net;

use std::fs;
use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iq::{self, Example};
use crate::seed;

pub use net::{Architecture, Network};
use net::{Cache, GradScratch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Mini-batch gradient descent, with optional heavy-ball momentum.
    Sgd,
    /// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub window_len: usize,
    pub conv_stages: usize,
    pub filters: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Momentum for [`Optimizer::Sgd`]; 0 gives plain gradient descent.
    pub momentum: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            window_len: 512,
            conv_stages: 2,
            filters: 8,
            kernel: 15,
            hidden: 64,
            num_classes: 4,
            epochs: 16,
            batch_size: 64,
            learning_rate: 0.01,
            optimizer: Optimizer::Sgd,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn arch(&self) -> Architecture {
        Architecture {
            window_len: self.window_len,
            conv_stages: self.conv_stages,
            filters: self.filters,
            kernel: self.kernel,
            hidden: self.hidden,
            num_classes: self.num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch().validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must lie in [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub log: Vec<EpochStats>,
}

/// Power-normalized `[I..., Q...]` planes of a window.
pub fn window_planes(window: &[Complex64]) -> Vec<f64> {
    let scale = iq::unit_power_scale(window).unwrap_or(0.0);
    let mut out = Vec::with_capacity(2 * window.len());
    out.extend(window.iter().map(|s| s.re * scale));
    out.extend(window.iter().map(|s| s.im * scale));
    out
}

fn check_examples(examples: &[Example], arch: &Architecture) -> Result<()> {
    for (i, e) in examples.iter().enumerate() {
        if e.window.len() != arch.window_len {
            return Err(Error::Config(format!(
                "example {i} has window length {}, network expects {}",
                e.window.len(),
                arch.window_len
            )));
        }
        if e.label >= arch.num_classes {
            return Err(Error::Config(format!(
                "example {i} has label {} but the network has {} classes",
                e.label, arch.num_classes
            )));
        }
    }
    Ok(())
}

/// Class-balanced draw order for one epoch of `n_draws` samples.
///
/// Classes are visited round-robin in a freshly shuffled order each cycle;
/// within a class, examples are taken from a shuffled queue that is refilled
/// when exhausted. Per-class counts over an epoch differ by at most one.
struct BalancedSampler {
    by_class: Vec<Vec<usize>>,
    queues: Vec<Vec<usize>>,
}

impl BalancedSampler {
    fn new(labels: &[usize], num_classes: usize) -> Self {
        let mut by_class = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            by_class[y].push(i);
        }
        BalancedSampler {
            queues: vec![Vec::new(); num_classes],
            by_class,
        }
    }

    fn take(&mut self, class: usize, rng: &mut seed::Rng) -> usize {
        if self.queues[class].is_empty() {
            let mut q = self.by_class[class].clone();
            q.shuffle(rng);
            self.queues[class] = q;
        }
        self.queues[class].pop().expect("class has examples")
    }

    fn epoch(&mut self, n_draws: usize, rng: &mut seed::Rng) -> Vec<usize> {
        let classes = self.by_class.len();
        let mut order: Vec<usize> = (0..classes).collect();
        let mut out = Vec::with_capacity(n_draws);
        while out.len() < n_draws {
            order.shuffle(rng);
            for &c in &order {
                if out.len() == n_draws {
                    break;
                }
                out.push(self.take(c, rng));
            }
        }
        out
    }
}

/// Per-class draw indices for one epoch; exposed for testing the sampler.
pub fn balanced_epoch(labels: &[usize], num_classes: usize, n_draws: usize, seed_value: u64) -> Vec<usize> {
    let mut rng = seed::rng(seed_value);
    BalancedSampler::new(labels, num_classes).epoch(n_draws, &mut rng)
}

const INIT_STREAM: u64 = 0;
const SAMPLER_STREAM: u64 = 1;

/// Trains a fresh network on `train_set`.
///
/// Each epoch draws `len(train_set)` examples class-balanced, in batches of
/// `batch_size`, and takes one gradient step per batch.
pub fn train(train_set: &[Example], cfg: &NetConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let arch = cfg.arch();
    check_examples(train_set, &arch)?;
    let labels: Vec<usize> = train_set.iter().map(|e| e.label).collect();
    for c in 0..arch.num_classes {
        if !labels.contains(&c) {
            return Err(Error::Config(format!("class {c} has no training examples")));
        }
    }
    let inputs: Vec<Vec<f64>> = train_set.iter().map(|e| window_planes(&e.window)).collect();

    let mut network = Network::init(arch, seed::mix(cfg.seed, INIT_STREAM))?;
    let mut rng = seed::rng(seed::mix(cfg.seed, SAMPLER_STREAM));
    let mut sampler = BalancedSampler::new(&labels, arch.num_classes);
    let mut cache = Cache::new(&arch);
    let mut scratch = GradScratch::new(&arch);
    let mut grad = vec![0.0; arch.num_params()];
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut state = OptimizerState::new(cfg, arch.num_params());

    for epoch in 0..cfg.epochs {
        let order = sampler.epoch(train_set.len(), &mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                network.forward(&inputs[i], &mut cache);
                if argmax(&cache.probs) == labels[i] {
                    correct += 1;
                }
                loss_sum += network.backward(&cache, labels[i], &mut grad, &mut scratch);
            }
            let n = batch.len() as f64;
            grad.iter_mut().for_each(|g| *g /= n);
            state.step(network.params_mut(), &grad);
        }
        if network.params().iter().any(|w| !w.is_finite()) {
            return Err(Error::Degenerate(format!("training diverged in epoch {}", epoch + 1)));
        }
        log.push(EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / order.len() as f64,
            accuracy: correct as f64 / order.len() as f64,
        });
    }
    Ok(TrainedModel { network, log })
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    momentum: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(cfg: &NetConfig, n: usize) -> Self {
        let v = match cfg.optimizer {
            Optimizer::Adam => vec![0.0; n],
            Optimizer::Sgd => Vec::new(),
        };
        OptimizerState {
            kind: cfg.optimizer,
            lr: cfg.learning_rate,
            momentum: cfg.momentum,
            m: vec![0.0; n],
            v,
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f64], g: &[f64]) {
        match self.kind {
            Optimizer::Sgd if self.momentum == 0.0 => {
                for (w, g) in w.iter_mut().zip(g) {
                    *w -= self.lr * g;
                }
            }
            Optimizer::Sgd => {
                for ((w, g), m) in w.iter_mut().zip(g).zip(&mut self.m) {
                    *m = self.momentum * *m + g;
                    *w -= self.lr * *m;
                }
            }
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for (((w, g), m), v) in w.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *w -= self.lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// `None` for classes absent from the test set.
    pub per_class: Vec<Option<f64>>,
}

impl EvalReport {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], num_classes: usize) -> Self {
        let mut confusion = vec![vec![0; num_classes]; num_classes];
        for (&y, &p) in labels.iter().zip(predicted) {
            confusion[y][p] += 1;
        }
        let total: usize = labels.len();
        let trace: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
        let per_class = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        EvalReport {
            accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            confusion,
            per_class,
        }
    }
}

pub fn predict(network: &Network, examples: &[Example]) -> Result<Vec<usize>> {
    check_examples(examples, network.arch())?;
    let mut cache = Cache::new(network.arch());
    Ok(examples
        .iter()
        .map(|e| {
            network.forward(&window_planes(&e.window), &mut cache);
            argmax(&cache.probs)
        })
        .collect())
}

pub fn evaluate(network: &Network, test_set: &[Example]) -> Result<EvalReport> {
    if test_set.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    let predicted = predict(network, test_set)?;
    let labels: Vec<usize> = test_set.iter().map(|e| e.label).collect();
    Ok(EvalReport::from_predictions(&labels, &predicted, network.arch().num_classes))
}

/// Penultimate (hidden dense) activations for each example.
pub fn features(network: &Network, examples: &[Example]) -> Result<Vec<Vec<f64>>> {
    check_examples(examples, network.arch())?;
    let mut cache = Cache::new(network.arch());
    Ok(examples
        .iter()
        .map(|e| {
            network.forward(&window_planes(&e.window), &mut cache);
            cache.hidden.clone()
        })
        .collect())
}

/// Writes `label,waveform,day,f0..f{H-1}`, one row per example.
pub fn export_features(network: &Network, examples: &[Example], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let feats = features(network, examples)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Error::Validation(format!("{}: {e}", path.display()));
    let mut header = vec!["label".to_string(), "waveform".into(), "day".into()];
    header.extend((0..network.arch().hidden).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (e, f) in examples.iter().zip(&feats) {
        let mut row = vec![
            e.label.to_string(),
            e.meta.waveform.to_string(),
            e.meta.day.to_string(),
        ];
        row.extend(f.iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Result of [`gradient_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    /// Maximum relative error over the checked parameters.
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose finite-difference stencil crosses a ReLU or max-pool
    /// switch for some probe input; the loss is not differentiable there.
    pub skipped_kinks: usize,
}

/// Compares analytic and central-difference gradients.
///
/// Checks up to `max_params` parameters sampled (without replacement) with
/// `seed`, using step `1e-4`. Relative error is `|a - n| / max(|a| + |n|, 1e-8)`.
pub fn gradient_check(network: &Network, probe_batch: &[(&[f64], usize)], max_params: usize, seed_value: u64) -> GradientCheck {
    const STEP: f64 = 1e-4;
    let (_, analytic) = network.loss_and_gradient(probe_batch);
    let mut idx: Vec<usize> = (0..analytic.len()).collect();
    let mut rng = seed::rng(seed_value);
    idx.shuffle(&mut rng);
    idx.truncate(max_params);
    idx.sort_unstable();

    let pattern = |net: &Network| -> Vec<Vec<u32>> { probe_batch.iter().map(|(x, _)| net.activation_pattern(x)).collect() };
    let base = pattern(network);
    let mut probe = network.clone();
    let mut out = GradientCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
    };
    for i in idx {
        let w = probe.params()[i];
        probe.params_mut()[i] = w + STEP;
        let up = probe.loss(probe_batch);
        let smooth_up = pattern(&probe) == base;
        probe.params_mut()[i] = w - STEP;
        let down = probe.loss(probe_batch);
        let smooth_down = pattern(&probe) == base;
        probe.params_mut()[i] = w;
        if !(smooth_up && smooth_down) {
            out.skipped_kinks += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic[i];
        out.checked += 1;
        out.max_rel_error = out.max_rel_error.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8));
    }
    out
}

/// Random probe batch for [`gradient_check`]: standard normal inputs, random labels.
pub fn probe_batch(arch: &Architecture, size: usize, seed_value: u64) -> Vec<(Vec<f64>, usize)> {
    let mut rng = seed::rng(seed_value);
    let normal = rand_distr::StandardNormal;
    (0..size)
        .map(|_| {
            let x = (0..2 * arch.window_len)
                .map(|_| rand_distr::Distribution::<f64>::sample(&normal, &mut rng))
                .collect();
            (x, rng.gen_range(0..arch.num_classes))
        })
        .collect()
}

const MODEL_MAGIC: &[u8; 8] = b"RFAUGNET";
const MODEL_VERSION: u32 = 1;

/// Serializes a network: magic, version, six `u32` architecture fields, a
/// `u64` parameter count, then `f32` little-endian parameters.
pub fn model_to_bytes(network: &Network) -> Vec<u8> {
    let a = network.arch();
    let mut out = Vec::with_capacity(40 + 4 * network.params().len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for v in [a.window_len, a.conv_stages, a.filters, a.kernel, a.hidden, a.num_classes] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(network.params().len() as u64).to_le_bytes());
    for &p in network.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn model_from_bytes(bytes: &[u8], path: &Path) -> Result<Network> {
    let bad = |offset: usize, reason: &str| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < 44 || &bytes[..8] != MODEL_MAGIC {
        return Err(bad(0, "not a model file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u32_at(8);
    if version != MODEL_VERSION {
        return Err(bad(8, &format!("unsupported model version {version}")));
    }
    let f: Vec<usize> = (0..6).map(|i| u32_at(12 + 4 * i) as usize).collect();
    let arch = Architecture {
        window_len: f[0],
        conv_stages: f[1],
        filters: f[2],
        kernel: f[3],
        hidden: f[4],
        num_classes: f[5],
    };
    arch.validate().map_err(|e| bad(12, &e.to_string()))?;
    let count = u64::from_le_bytes(bytes[36..44].try_into().expect("8 bytes")) as usize;
    if count != arch.num_params() {
        return Err(bad(36, &format!("parameter count {count} does not match architecture")));
    }
    let body = &bytes[44..];
    if body.len() != 4 * count {
        return Err(bad(44 + body.len().min(4 * count), "weight block length mismatch"));
    }
    let params = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Network::from_params(arch, params).map_err(|e| bad(44, &e.to_string()))
}

pub fn save_model(network: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&model_to_bytes(network)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, path)
}
