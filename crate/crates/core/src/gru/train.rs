//! Training loop: seeded initialization, shuffled mini-batches, Adam, and
//! best-validation snapshotting. Fully deterministic for a given seed.

use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Normalizer, WindowSample};
use crate::features::FeatureMode;

use super::{batch_gradients, GruError, GruGrads, GruModel, ModelDims};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Training hyperparameters. Defaults are the production configuration:
/// 35 epochs, batch 256, learning rate 5e-5, two hidden layers of 180.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping early.
    pub patience: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub window_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 35,
            batch_size: 256,
            learning_rate: 5.0e-5,
            seed: 42,
            patience: 35,
            hidden_dim: 180,
            num_classes: crate::class::CLASS_COUNT,
            window_len: crate::dataset::WINDOW_LEN,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), GruError> {
        let positive = [
            ("max_epochs", self.max_epochs),
            ("batch_size", self.batch_size),
            ("patience", self.patience),
            ("hidden_dim", self.hidden_dim),
            ("num_classes", self.num_classes),
            ("window_len", self.window_len),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(GruError::BadConfig(format!("{name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(GruError::BadConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Total optimizer steps a run will take: `epochs * ceil(windows / batch)`.
pub fn planned_iterations(windows: usize, batch_size: usize, epochs: usize) -> usize {
    epochs * windows.div_ceil(batch_size)
}

/// Adam moment estimates, one pair of buffers per parameter block.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &GruModel) -> Self {
        let shapes: Vec<usize> = model.blocks().iter().map(|b| b.len()).collect();
        AdamState {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update over every parameter block; `t` increments once per call.
pub fn adam_step(model: &mut GruModel, grads: &GruGrads, state: &mut AdamState, lr: f64) {
    state.t += 1;
    let bias1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let grad_blocks = grads.blocks();
    for ((params, grad), (m, v)) in model
        .blocks_mut()
        .into_iter()
        .zip(grad_blocks)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        debug_assert_eq!(params.len(), grad.len());
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Per-epoch training metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Writes the metrics log as `epoch,train_loss,train_acc,val_acc`.
pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "epoch,train_loss,train_acc,val_acc")?;
    for m in metrics {
        writeln!(file, "{},{},{},{}", m.epoch, m.train_loss, m.train_acc, m.val_acc)?;
    }
    Ok(())
}

/// Fresh model with weights drawn from `U(-1/sqrt(fan_in), +1/sqrt(fan_in))`
/// per block (biases use the hidden size), in a fixed draw order.
pub fn init_model(mode: FeatureMode, input_dim: usize, cfg: &TrainConfig) -> GruModel {
    let dims = ModelDims { input: input_dim, hidden: cfg.hidden_dim, classes: cfg.num_classes };
    let mut model = GruModel::zeros(mode, dims, cfg.window_len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fan_ins: Vec<usize> = {
        let layer = |input: usize| {
            vec![input, input, input, cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim,
                 cfg.hidden_dim, cfg.hidden_dim, cfg.hidden_dim]
        };
        let mut v = layer(input_dim);
        v.extend(layer(cfg.hidden_dim));
        v.push(cfg.hidden_dim); // head weight
        v.push(cfg.hidden_dim); // head bias
        v
    };
    for (block, fan_in) in model.blocks_mut().into_iter().zip(fan_ins) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for w in block.iter_mut() {
            *w = rng.gen_range(-bound..bound);
        }
    }
    model
}

/// Trains a model on `train` windows, tracking accuracy on `val` after
/// every epoch and returning the best-validation snapshot together with
/// the per-epoch metrics log. With an empty `val`, the running training
/// accuracy drives snapshotting instead.
pub fn train(
    train: &[WindowSample],
    val: &[WindowSample],
    cfg: &TrainConfig,
) -> Result<(GruModel, Vec<EpochMetrics>), GruError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(GruError::EmptyDataset);
    }
    let mode = train[0].features[0].mode;
    let input_dim = train[0].features[0].dim();
    for sample in train.iter().chain(val) {
        if sample.features.len() != cfg.window_len {
            return Err(GruError::ShapeMismatch(format!(
                "window of {} epochs, expected {}",
                sample.features.len(),
                cfg.window_len
            )));
        }
        if sample.features.iter().any(|f| f.dim() != input_dim || f.mode != mode) {
            return Err(GruError::ShapeMismatch(
                "all windows must share one feature mode and dimension".into(),
            ));
        }
        if sample.label >= cfg.num_classes {
            return Err(GruError::LabelOutOfRange {
                label: sample.label,
                classes: cfg.num_classes,
            });
        }
    }

    let mut model = init_model(mode, input_dim, cfg);
    model.normalizer =
        Normalizer::fit(train.iter().flat_map(|s| s.features.iter())).expect("non-empty");

    let mut optimizer = AdamState::new(&model);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut best_model = model.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut epochs_since_best = 0usize;
    let mut metrics = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch_ids in order.chunks(cfg.batch_size) {
            let batch: Vec<&WindowSample> = batch_ids.iter().map(|&i| &train[i]).collect();
            let (grads, batch_loss_sum, batch_correct) = batch_gradients(&model, &batch)?;
            loss_sum += batch_loss_sum;
            correct += batch_correct;
            adam_step(&mut model, &grads, &mut optimizer, cfg.learning_rate);
        }
        let train_loss = loss_sum / train.len() as f64;
        let train_acc = correct as f64 / train.len() as f64;
        let val_acc = if val.is_empty() { train_acc } else { model.accuracy(val)? };
        metrics.push(EpochMetrics { epoch, train_loss, train_acc, val_acc });

        if val_acc > best_val {
            best_val = val_acc;
            best_model = model.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best_model, metrics))
}
