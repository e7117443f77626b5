//! Comparison baseline: linear one-vs-rest SVM on single-epoch feature
//! vectors, plus a 6-sample majority temporal filter ("SVM-TF").
//!
//! Each binary machine minimizes L2-regularized hinge loss by seeded
//! stochastic subgradient descent; the one-vs-rest machines are independent
//! and train in parallel when the feature is enabled.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::batch;
use crate::dataset::Normalizer;
use crate::features::{FeatureMode, FeatureVector};
use crate::linalg::dot;

pub const SVM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training data is empty")]
    EmptyDataset,
    #[error("training data contains a single class; need at least two")]
    SingleClass,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("feature dim {found} does not match model dim {expected}")]
    DimMismatch { found: usize, expected: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("model file is truncated or not valid JSON: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported SVM model version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
}

/// One binary one-vs-rest machine: score = w.x + b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMachine {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Trained multiclass model; machine k scores class k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub version: u32,
    pub mode: FeatureMode,
    pub machines: Vec<LinearMachine>,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone)]
pub struct SvmTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Hinge-loss weight; 0 leaves only the regularizer, driving w to 0.
    pub c: f64,
    pub seed: u64,
    pub num_classes: usize,
}

impl Default for SvmTrainConfig {
    fn default() -> Self {
        SvmTrainConfig {
            epochs: 60,
            learning_rate: 3.0e-4,
            c: 100.0,
            seed: 42,
            num_classes: crate::class::CLASS_COUNT,
        }
    }
}

/// Trains one-vs-rest machines on per-epoch feature vectors.
///
/// Per-sample subgradient step on `0.5 ||w||^2 + C * hinge(y (w.x + b))`:
/// the weight decays by `lr` every step and moves along `C y x` when the
/// margin is violated. The bias is not regularized. Deterministic for a
/// given seed; each machine shuffles with its own derived stream.
pub fn train_svm(
    features: &[FeatureVector],
    labels: &[usize],
    cfg: &SvmTrainConfig,
) -> Result<SvmModel, SvmError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(SvmError::EmptyDataset);
    }
    if cfg.epochs == 0 || !(cfg.learning_rate > 0.0) || !(cfg.c >= 0.0) {
        return Err(SvmError::BadConfig(
            "epochs, learning_rate must be positive and C non-negative".into(),
        ));
    }
    for &label in labels {
        if label >= cfg.num_classes {
            return Err(SvmError::LabelOutOfRange { label, classes: cfg.num_classes });
        }
    }
    let distinct = {
        let mut seen = vec![false; cfg.num_classes];
        for &l in labels {
            seen[l] = true;
        }
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(SvmError::SingleClass);
    }

    let mode = features[0].mode;
    let dim = features[0].dim();
    let normalizer = Normalizer::fit(features.iter()).expect("non-empty");
    let rows: Vec<Vec<f64>> = features.iter().map(|f| normalizer.apply_vec(&f.values)).collect();

    let classes: Vec<usize> = (0..cfg.num_classes).collect();
    let machines: Vec<LinearMachine> = batch::map(&classes, |&class| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(class as u64 + 1));
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut order: Vec<usize> = (0..rows.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let y = if labels[i] == class { 1.0 } else { -1.0 };
                let margin = y * (dot(&w, &rows[i]) + b);
                // L2 shrink, then hinge subgradient when the margin is violated
                for wj in w.iter_mut() {
                    *wj *= 1.0 - cfg.learning_rate;
                }
                if margin < 1.0 {
                    let step = cfg.learning_rate * cfg.c * y;
                    for (wj, xj) in w.iter_mut().zip(&rows[i]) {
                        *wj += step * xj;
                    }
                    b += step;
                }
            }
        }
        LinearMachine { weights: w, bias: b }
    });

    Ok(SvmModel { version: SVM_FORMAT_VERSION, mode, machines, normalizer })
}

impl SvmModel {
    /// Raw machine scores for a feature vector (normalized internally).
    pub fn scores(&self, features: &FeatureVector) -> Result<Vec<f64>, SvmError> {
        if features.dim() != self.normalizer.dim() {
            return Err(SvmError::DimMismatch {
                found: features.dim(),
                expected: self.normalizer.dim(),
            });
        }
        let x = self.normalizer.apply_vec(&features.values);
        Ok(self.machines.iter().map(|m| dot(&m.weights, &x) + m.bias).collect())
    }

    /// Predicted label: argmax of the machine scores, ties toward the
    /// lowest class index.
    pub fn predict(&self, features: &FeatureVector) -> Result<usize, SvmError> {
        Ok(crate::gru::argmax_lowest(&self.scores(features)?))
    }

    /// Per-epoch raw predictions over a feature series.
    pub fn predict_series(&self, features: &[FeatureVector]) -> Result<Vec<usize>, SvmError> {
        batch::map(features, |f| self.predict(f)).into_iter().collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), SvmError> {
        let out = File::create(path)?;
        serde_json::to_writer(BufWriter::new(out), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SvmError> {
        let mut text = String::new();
        BufReader::new(File::open(path)?).read_to_string(&mut text)?;
        let value: Value = serde_json::from_str(&text)?;
        let found = value.get("version").and_then(Value::as_u64).unwrap_or(0);
        if found != SVM_FORMAT_VERSION as u64 {
            return Err(SvmError::Version { found, expected: SVM_FORMAT_VERSION });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Causal majority filter over the trailing `window` raw labels.
///
/// `output[t]` is the most common label among `raw[max(0, t+1-window)..=t]`;
/// a tied vote keeps the previous output when it is among the leaders and
/// otherwise takes the lowest tied label. `output[0]` is `raw[0]`.
pub fn temporal_filter(raw: &[usize], window: usize) -> Vec<usize> {
    assert!(window >= 1, "filter window must be at least 1");
    let mut out = Vec::with_capacity(raw.len());
    let mut prev: Option<usize> = None;
    for t in 0..raw.len() {
        let start = (t + 1).saturating_sub(window);
        let mut counts = std::collections::BTreeMap::new();
        for &label in &raw[start..=t] {
            *counts.entry(label).or_insert(0usize) += 1;
        }
        let best_count = counts.values().copied().max().expect("non-empty window");
        let leaders: Vec<usize> =
            counts.iter().filter(|(_, &c)| c == best_count).map(|(&l, _)| l).collect();
        // unique winner, or the previous output when it is among the tied
        // leaders; a tie the previous output is not part of goes to the
        // lowest label. At t=0 the window is the single raw label.
        let choice = match prev {
            Some(p) if leaders.contains(&p) => p,
            _ => leaders[0],
        };
        out.push(choice);
        prev = Some(choice);
    }
    out
}
