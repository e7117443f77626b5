//! From-scratch stacked GRU sequence classifier.
//!
//! Two GRU layers over a 6-epoch feature window, a dense head over the
//! final hidden state, and softmax over the context classes. Training is
//! plain backpropagation through time with Adam; everything is `f64` so the
//! analytic gradients can be checked against central finite differences.

mod backward;
mod io;
mod train;

pub use backward::{backward, batch_gradients, batch_gradients_seq, GruGrads};
pub use io::{load_model, save_model, ModelIoError, MODEL_FORMAT_VERSION};
pub use train::{
    adam_step, init_model, planned_iterations, train, write_metrics_csv, AdamState, EpochMetrics,
    TrainConfig,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch;
use crate::class::ContextClass;
use crate::dataset::{Normalizer, WindowSample};
use crate::features::{FeatureMode, FeatureVector};
use crate::linalg::{dot, sigmoid, softmax, Mat};

/// Probabilities are floored at this value inside the log loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Number of stacked GRU layers.
pub const LAYER_COUNT: usize = 2;

#[derive(Debug, Error)]
pub enum GruError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("non-finite activation in {block}")]
    NonFinite { block: &'static str },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    BadConfig(String),
}

/// Weights of one GRU layer. `w_*` are input-to-hidden (hidden x input),
/// `u_*` hidden-to-hidden (hidden x hidden), `b_*` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayerParams {
    pub w_update: Mat,
    pub w_reset: Mat,
    pub w_cand: Mat,
    pub u_update: Mat,
    pub u_reset: Mat,
    pub u_cand: Mat,
    pub b_update: Vec<f64>,
    pub b_reset: Vec<f64>,
    pub b_cand: Vec<f64>,
}

impl GruLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruLayerParams {
            w_update: Mat::zeros(hidden, input),
            w_reset: Mat::zeros(hidden, input),
            w_cand: Mat::zeros(hidden, input),
            u_update: Mat::zeros(hidden, hidden),
            u_reset: Mat::zeros(hidden, hidden),
            u_cand: Mat::zeros(hidden, hidden),
            b_update: vec![0.0; hidden],
            b_reset: vec![0.0; hidden],
            b_cand: vec![0.0; hidden],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_update.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_update.rows()
    }

    /// Parameter blocks in the canonical order used by initialization,
    /// gradients, and the optimizer.
    pub(crate) fn blocks(&self) -> [&[f64]; 9] {
        [
            self.w_update.data(),
            self.w_reset.data(),
            self.w_cand.data(),
            self.u_update.data(),
            self.u_reset.data(),
            self.u_cand.data(),
            &self.b_update,
            &self.b_reset,
            &self.b_cand,
        ]
    }

    pub(crate) fn blocks_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.w_update.data_mut(),
            self.w_reset.data_mut(),
            self.w_cand.data_mut(),
            self.u_update.data_mut(),
            self.u_reset.data_mut(),
            self.u_cand.data_mut(),
            &mut self.b_update,
            &mut self.b_reset,
            &mut self.b_cand,
        ]
    }
}

/// Dense classification head over the final hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weight: Mat,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        DenseParams { weight: Mat::zeros(output, input), bias: vec![0.0; output] }
    }
}

/// Layer sizes of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// Trained classifier: stacked GRU parameters, dense head, the normalizer
/// fitted on the training data, and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    pub mode: FeatureMode,
    pub dims: ModelDims,
    pub window_len: usize,
    pub class_names: Vec<String>,
    pub normalizer: Normalizer,
    pub layers: [GruLayerParams; LAYER_COUNT],
    pub head: DenseParams,
}

impl GruModel {
    /// All-zero model of the given shape; class names default to the
    /// canonical seven when `classes == 7`.
    pub fn zeros(mode: FeatureMode, dims: ModelDims, window_len: usize) -> Self {
        let class_names = if dims.classes == crate::class::CLASS_COUNT {
            ContextClass::names()
        } else {
            (0..dims.classes).map(|i| format!("class_{i}")).collect()
        };
        GruModel {
            mode,
            dims,
            window_len,
            class_names,
            normalizer: Normalizer { mean: vec![0.0; dims.input], std: vec![1.0; dims.input] },
            layers: [
                GruLayerParams::zeros(dims.input, dims.hidden),
                GruLayerParams::zeros(dims.hidden, dims.hidden),
            ],
            head: DenseParams::zeros(dims.hidden, dims.classes),
        }
    }

    /// Flat views of every parameter block in the canonical order used by
    /// initialization, gradients, and the optimizer (see [`block_names`]).
    ///
    /// [`block_names`]: GruModel::block_names
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(LAYER_COUNT * 9 + 2);
        for layer in &self.layers {
            v.extend(layer.blocks());
        }
        v.push(self.head.weight.data());
        v.push(&self.head.bias);
        v
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let [l0, l1] = &mut self.layers;
        let mut v: Vec<&mut [f64]> = Vec::with_capacity(LAYER_COUNT * 9 + 2);
        v.extend(l0.blocks_mut());
        v.extend(l1.blocks_mut());
        v.push(self.head.weight.data_mut());
        v.push(&mut self.head.bias);
        v
    }

    /// Names of the parameter blocks, aligned with [`blocks`].
    ///
    /// [`blocks`]: GruModel::blocks
    pub fn block_names() -> Vec<String> {
        let mut names = Vec::with_capacity(LAYER_COUNT * 9 + 2);
        for layer in 1..=LAYER_COUNT {
            for gate in [
                "w_update", "w_reset", "w_cand", "u_update", "u_reset", "u_cand", "b_update",
                "b_reset", "b_cand",
            ] {
                names.push(format!("layer{layer}.{gate}"));
            }
        }
        names.push("head.weight".to_string());
        names.push("head.bias".to_string());
        names
    }

    fn check_window(&self, window: &[FeatureVector]) -> Result<(), GruError> {
        if window.len() != self.window_len {
            return Err(GruError::ShapeMismatch(format!(
                "window length {} does not match model window length {}",
                window.len(),
                self.window_len
            )));
        }
        for v in window {
            if v.dim() != self.dims.input {
                return Err(GruError::ShapeMismatch(format!(
                    "feature dim {} does not match model input dim {}",
                    v.dim(),
                    self.dims.input
                )));
            }
        }
        Ok(())
    }

    /// Class probabilities for one window.
    pub fn forward(&self, window: &[FeatureVector]) -> Result<Vec<f64>, GruError> {
        Ok(self.forward_cached(window)?.probs)
    }

    /// Predicted label and class probabilities; ties break toward the
    /// lowest class index.
    pub fn predict(&self, window: &[FeatureVector]) -> Result<(usize, Vec<f64>), GruError> {
        let probs = self.forward(window)?;
        Ok((argmax_lowest(&probs), probs))
    }

    /// Fraction of windows predicted correctly (parallel when enabled).
    pub fn accuracy(&self, samples: &[WindowSample]) -> Result<f64, GruError> {
        if samples.is_empty() {
            return Err(GruError::EmptyDataset);
        }
        let results = batch::map(samples, |s| {
            self.predict(&s.features).map(|(label, _)| (label == s.label) as u64)
        });
        let mut correct = 0u64;
        for r in results {
            correct += r?;
        }
        Ok(correct as f64 / samples.len() as f64)
    }

    /// Per-window predicted labels in input order.
    pub fn predict_series(&self, windows: &[WindowSample]) -> Result<Vec<usize>, GruError> {
        batch::map(windows, |s| self.predict(&s.features).map(|(l, _)| l))
            .into_iter()
            .collect()
    }

    pub(crate) fn forward_cached(&self, window: &[FeatureVector]) -> Result<ForwardCache, GruError> {
        self.check_window(window)?;
        let steps = self.window_len;

        let inputs: Vec<Vec<f64>> =
            window.iter().map(|v| self.normalizer.apply_vec(&v.values)).collect();

        let mut layer_caches: Vec<LayerCache> = Vec::with_capacity(LAYER_COUNT);
        let mut layer_inputs = inputs;
        for (i, layer) in self.layers.iter().enumerate() {
            let cache = run_layer(layer, layer_inputs);
            if cache.hidden.iter().flatten().any(|v| !v.is_finite()) {
                return Err(GruError::NonFinite {
                    block: if i == 0 { "layer 1 hidden state" } else { "layer 2 hidden state" },
                });
            }
            layer_inputs = cache.hidden[1..=steps].to_vec();
            layer_caches.push(cache);
        }

        let final_hidden = layer_caches[LAYER_COUNT - 1].hidden.last().expect("steps >= 1");
        let mut logits = self.head.bias.clone();
        self.head.weight.matvec_add(final_hidden, &mut logits);
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(GruError::NonFinite { block: "head logits" });
        }
        let probs = softmax(&logits);
        let [l0, l1] = <[LayerCache; 2]>::try_from(layer_caches).expect("two layers");
        Ok(ForwardCache { layers: [l0, l1], probs })
    }
}

/// One GRU cell step: update gate `z`, reset gate `r`, candidate state,
/// and the convex combination `h = (1 - z) h_prev + z h_cand`.
pub fn cell_forward(
    params: &GruLayerParams,
    x: &[f64],
    h_prev: &[f64],
) -> Result<Vec<f64>, GruError> {
    if x.len() != params.input_dim() || h_prev.len() != params.hidden_dim() {
        return Err(GruError::ShapeMismatch(format!(
            "cell expects input {} and hidden {}, got {} and {}",
            params.input_dim(),
            params.hidden_dim(),
            x.len(),
            h_prev.len()
        )));
    }
    let (h, _, _, _) = cell_step(params, x, h_prev);
    Ok(h)
}

/// Unchecked cell step returning `(h, update, reset, cand)`.
fn cell_step(
    params: &GruLayerParams,
    x: &[f64],
    h_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = params.hidden_dim();
    let mut update = vec![0.0; hidden];
    let mut reset = vec![0.0; hidden];
    for i in 0..hidden {
        update[i] = sigmoid(
            dot(params.w_update.row(i), x) + dot(params.u_update.row(i), h_prev) + params.b_update[i],
        );
        reset[i] = sigmoid(
            dot(params.w_reset.row(i), x) + dot(params.u_reset.row(i), h_prev) + params.b_reset[i],
        );
    }
    let gated: Vec<f64> = reset.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let mut cand = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for i in 0..hidden {
        cand[i] = (dot(params.w_cand.row(i), x) + dot(params.u_cand.row(i), &gated) + params.b_cand[i])
            .tanh();
        h[i] = (1.0 - update[i]) * h_prev[i] + update[i] * cand[i];
    }
    (h, update, reset, cand)
}

/// Cached activations of one layer across the window.
/// `hidden[0]` is the zero initial state; `hidden[t + 1]` is the output of
/// step `t`.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub inputs: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
    pub update: Vec<Vec<f64>>,
    pub reset: Vec<Vec<f64>>,
    pub cand: Vec<Vec<f64>>,
}

fn run_layer(params: &GruLayerParams, inputs: Vec<Vec<f64>>) -> LayerCache {
    let steps = inputs.len();
    let hidden_dim = params.hidden_dim();
    let mut cache = LayerCache {
        inputs,
        hidden: Vec::with_capacity(steps + 1),
        update: Vec::with_capacity(steps),
        reset: Vec::with_capacity(steps),
        cand: Vec::with_capacity(steps),
    };
    cache.hidden.push(vec![0.0; hidden_dim]);
    for t in 0..steps {
        let (h, update, reset, cand) =
            cell_step(params, &cache.inputs[t], &cache.hidden[t]);
        cache.hidden.push(h);
        cache.update.push(update);
        cache.reset.push(reset);
        cache.cand.push(cand);
    }
    cache
}

/// Forward activations cached for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub layers: [LayerCache; LAYER_COUNT],
    pub probs: Vec<f64>,
}

/// Cross-entropy `-ln(probs[label])` with the probability floored at
/// [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64, GruError> {
    if label >= probs.len() {
        return Err(GruError::LabelOutOfRange { label, classes: probs.len() });
    }
    Ok(-probs[label].max(PROB_FLOOR).ln())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window_of(model: &GruModel, fill: f64) -> Vec<FeatureVector> {
        (0..model.window_len)
            .map(|_| FeatureVector { mode: model.mode, values: vec![fill; model.dims.input] })
            .collect()
    }

    #[test]
    fn zero_cell_halves_previous_state() {
        let params = GruLayerParams::zeros(3, 4);
        let h_prev = vec![0.8, -0.4, 0.2, 1.0];
        let h = cell_forward(&params, &[1.0, 2.0, 3.0], &h_prev).unwrap();
        for (o, p) in h.iter().zip(&h_prev) {
            assert!((o - 0.5 * p).abs() < 1e-15);
        }
        let h = cell_forward(&params, &[1.0, 2.0, 3.0], &[0.0; 4]).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cell_output_has_hidden_length() {
        let params = GruLayerParams::zeros(10, 180);
        let h = cell_forward(&params, &vec![0.1; 10], &vec![0.0; 180]).unwrap();
        assert_eq!(h.len(), 180);
    }

    #[test]
    fn cell_rejects_shape_mismatch() {
        let params = GruLayerParams::zeros(3, 4);
        assert!(matches!(
            cell_forward(&params, &[1.0, 2.0], &[0.0; 4]),
            Err(GruError::ShapeMismatch(_))
        ));
        assert!(matches!(
            cell_forward(&params, &[1.0, 2.0, 3.0], &[0.0; 5]),
            Err(GruError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn zero_model_is_uniform_over_seven_classes() {
        let model = GruModel::zeros(
            FeatureMode::Zt,
            ModelDims { input: 10, hidden: 8, classes: 7 },
            6,
        );
        let probs = model.forward(&window_of(&model, 1.5)).unwrap();
        assert_eq!(probs.len(), 7);
        for p in &probs {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
        // uniform tie resolves to class 0
        let (label, _) = model.predict(&window_of(&model, 1.5)).unwrap();
        assert_eq!(label, 0);
    }

    #[test]
    fn forward_checks_dimensions() {
        let model = GruModel::zeros(
            FeatureMode::Yt,
            ModelDims { input: 9, hidden: 4, classes: 7 },
            6,
        );
        let short: Vec<FeatureVector> = window_of(&model, 0.0)[..5].to_vec();
        assert!(matches!(model.forward(&short), Err(GruError::ShapeMismatch(_))));
        let mut wrong = window_of(&model, 0.0);
        wrong[3].values.pop();
        assert!(matches!(model.forward(&wrong), Err(GruError::ShapeMismatch(_))));
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[1.0, 0.0], 0).unwrap(), 0.0);
        let uniform = vec![1.0 / 7.0; 7];
        assert!((cross_entropy(&uniform, 3).unwrap() - (7.0f64).ln()).abs() < 1e-12);
        assert!((cross_entropy(&[0.5, 0.5], 1).unwrap() - 0.693147).abs() < 1e-6);
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(GruError::LabelOutOfRange { .. })
        ));
        // floored, not infinite
        assert!(cross_entropy(&[0.0, 1.0], 0).unwrap().is_finite());
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax_lowest(&[0.1, 0.6, 0.3]), 1);
        assert_eq!(argmax_lowest(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax_lowest(&[0.0]), 0);
    }

    #[test]
    fn hidden_states_stay_in_open_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut params = GruLayerParams::zeros(5, 6);
        for block in params.blocks_mut() {
            for v in block.iter_mut() {
                *v = rng.gen_range(-2.0..2.0);
            }
        }
        let mut h = vec![0.0; 6];
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-5.0..5.0)).collect();
            h = cell_forward(&params, &x, &h).unwrap();
            assert!(h.iter().all(|&v| v > -1.0 && v < 1.0), "h escaped (-1,1): {h:?}");
        }
    }
}
