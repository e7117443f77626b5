//! Backpropagation through time for the stacked GRU.
//!
//! Gradients are the exact derivatives of the mean cross-entropy over a
//! batch; the integration suite checks them against central finite
//! differences. Batch accumulation reduces per-sample gradients in a fixed
//! chunk order so results do not depend on thread count.

use std::borrow::Borrow;

use crate::batch;
use crate::dataset::WindowSample;
use crate::linalg::axpy;

use super::{
    cross_entropy, DenseParams, ForwardCache, GruError, GruLayerParams, GruModel, LayerCache,
    LAYER_COUNT,
};

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct GruGrads {
    pub layers: [GruLayerParams; LAYER_COUNT],
    pub head: DenseParams,
}

impl GruGrads {
    pub fn zeros_like(model: &GruModel) -> Self {
        GruGrads {
            layers: [
                GruLayerParams::zeros(model.dims.input, model.dims.hidden),
                GruLayerParams::zeros(model.dims.hidden, model.dims.hidden),
            ],
            head: DenseParams::zeros(model.dims.hidden, model.dims.classes),
        }
    }

    /// Flat views of every gradient block, aligned with
    /// [`GruModel::blocks`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::with_capacity(LAYER_COUNT * 9 + 2);
        for layer in &self.layers {
            v.extend(layer.blocks());
        }
        v.push(self.head.weight.data());
        v.push(&self.head.bias);
        v
    }

    fn add_assign(&mut self, other: &GruGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w_update.add_assign(&b.w_update);
            a.w_reset.add_assign(&b.w_reset);
            a.w_cand.add_assign(&b.w_cand);
            a.u_update.add_assign(&b.u_update);
            a.u_reset.add_assign(&b.u_reset);
            a.u_cand.add_assign(&b.u_cand);
            axpy(1.0, &b.b_update, &mut a.b_update);
            axpy(1.0, &b.b_reset, &mut a.b_reset);
            axpy(1.0, &b.b_cand, &mut a.b_cand);
        }
        self.head.weight.add_assign(&other.head.weight);
        axpy(1.0, &other.head.bias, &mut self.head.bias);
    }

    fn scale(&mut self, k: f64) {
        for layer in &mut self.layers {
            for block in layer.blocks_mut() {
                for v in block.iter_mut() {
                    *v *= k;
                }
            }
        }
        self.head.weight.scale(k);
        for v in &mut self.head.bias {
            *v *= k;
        }
    }

    fn set_zero(&mut self) {
        for layer in &mut self.layers {
            for block in layer.blocks_mut() {
                block.fill(0.0);
            }
        }
        self.head.weight.data_mut().fill(0.0);
        self.head.bias.fill(0.0);
    }
}

/// Gradients of mean cross-entropy over a batch, plus the mean loss.
pub fn backward<S>(model: &GruModel, samples: &[S]) -> Result<(GruGrads, f64), GruError>
where
    S: Borrow<WindowSample> + Sync,
{
    let (grads, loss_sum, _) = batch_gradients(model, samples)?;
    Ok((grads, loss_sum / samples.len() as f64))
}

/// Accumulated batch statistics before averaging.
struct ChunkAccum {
    grads: GruGrads,
    loss_sum: f64,
    correct: usize,
}

/// Mean gradients over `samples` with summed loss and correct-prediction
/// count. Parallel when the `parallel` feature is enabled; the reduction
/// order is fixed, so both builds produce identical bits.
pub fn batch_gradients<S>(
    model: &GruModel,
    samples: &[S],
) -> Result<(GruGrads, f64, usize), GruError>
where
    S: Borrow<WindowSample> + Sync,
{
    if samples.is_empty() {
        return Err(GruError::EmptyDataset);
    }
    let result = batch::chunked_reduce(samples, |chunk| chunk_grads(model, chunk), merge_chunks)
        .expect("non-empty");
    finish_batch(result, samples.len())
}

/// Always-sequential variant of [`batch_gradients`], for benchmarks.
pub fn batch_gradients_seq<S>(
    model: &GruModel,
    samples: &[S],
) -> Result<(GruGrads, f64, usize), GruError>
where
    S: Borrow<WindowSample> + Sync,
{
    if samples.is_empty() {
        return Err(GruError::EmptyDataset);
    }
    let result = batch::chunked_reduce_seq(samples, |chunk| chunk_grads(model, chunk), merge_chunks)
        .expect("non-empty");
    finish_batch(result, samples.len())
}

fn finish_batch(
    result: Result<ChunkAccum, GruError>,
    n: usize,
) -> Result<(GruGrads, f64, usize), GruError> {
    let mut accum = result?;
    accum.grads.scale(1.0 / n as f64);
    Ok((accum.grads, accum.loss_sum, accum.correct))
}

fn merge_chunks(
    a: Result<ChunkAccum, GruError>,
    b: Result<ChunkAccum, GruError>,
) -> Result<ChunkAccum, GruError> {
    let mut a = a?;
    let b = b?;
    a.grads.add_assign(&b.grads);
    a.loss_sum += b.loss_sum;
    a.correct += b.correct;
    Ok(a)
}

fn chunk_grads<S>(model: &GruModel, chunk: &[S]) -> Result<ChunkAccum, GruError>
where
    S: Borrow<WindowSample>,
{
    let mut accum = ChunkAccum {
        grads: GruGrads::zeros_like(model),
        loss_sum: 0.0,
        correct: 0,
    };
    // per-sample scratch so the chunk sum is a plain in-order sum of
    // whole-sample gradients: identical samples then contribute identical
    // terms, and doubling a batch halves to the same bits
    let mut scratch = GruGrads::zeros_like(model);
    for sample in chunk {
        let sample = sample.borrow();
        let cache = model.forward_cached(&sample.features)?;
        accum.loss_sum += cross_entropy(&cache.probs, sample.label)?;
        if super::argmax_lowest(&cache.probs) == sample.label {
            accum.correct += 1;
        }
        scratch.set_zero();
        accumulate_sample(model, &cache, sample.label, &mut scratch);
        accum.grads.add_assign(&scratch);
    }
    Ok(accum)
}

/// Adds one sample's gradients (of its own cross-entropy) into `grads`.
fn accumulate_sample(model: &GruModel, cache: &ForwardCache, label: usize, grads: &mut GruGrads) {
    let steps = model.window_len;

    // softmax + cross-entropy: dL/dlogits = probs - onehot(label)
    let mut dlogits = cache.probs.clone();
    dlogits[label] -= 1.0;

    let final_hidden = cache.layers[LAYER_COUNT - 1].hidden.last().expect("ran");
    grads.head.weight.add_outer(&dlogits, final_hidden);
    axpy(1.0, &dlogits, &mut grads.head.bias);

    let mut dh_final = vec![0.0; model.dims.hidden];
    model.head.weight.matvec_t_add(&dlogits, &mut dh_final);

    // top layer: loss reaches only the final step from the head
    let mut dh_out: Vec<Vec<f64>> = vec![vec![0.0; model.dims.hidden]; steps];
    dh_out[steps - 1] = dh_final;
    let dx = backward_layer(&model.layers[1], &cache.layers[1], &dh_out, &mut grads.layers[1], true)
        .expect("dx requested");
    // bottom layer: receives the top layer's input gradients at every step
    backward_layer(&model.layers[0], &cache.layers[0], &dx, &mut grads.layers[0], false);
}

/// Backpropagates one layer through time.
///
/// `dh_out[t]` is the downstream gradient on this layer's step-`t` output.
/// Returns the gradients w.r.t. the layer inputs when `want_dx` is set.
fn backward_layer(
    params: &GruLayerParams,
    cache: &LayerCache,
    dh_out: &[Vec<f64>],
    grads: &mut GruLayerParams,
    want_dx: bool,
) -> Option<Vec<Vec<f64>>> {
    let steps = cache.inputs.len();
    let hidden = params.hidden_dim();
    let input = params.input_dim();
    let mut dx = if want_dx { Some(vec![vec![0.0; input]; steps]) } else { None };

    let mut dh_carry = vec![0.0; hidden];
    for t in (0..steps).rev() {
        let h_prev = &cache.hidden[t];
        let update = &cache.update[t];
        let reset = &cache.reset[t];
        let cand = &cache.cand[t];
        let x = &cache.inputs[t];

        // dL/dh_t from downstream plus the recurrent carry
        let dh: Vec<f64> = dh_out[t].iter().zip(&dh_carry).map(|(a, b)| a + b).collect();

        // h = (1 - z) h_prev + z cand
        let mut dh_prev: Vec<f64> =
            dh.iter().zip(update).map(|(dhi, z)| dhi * (1.0 - z)).collect();
        let da_cand: Vec<f64> = dh
            .iter()
            .zip(update)
            .zip(cand)
            .map(|((dhi, z), c)| dhi * z * (1.0 - c * c))
            .collect();
        let dz: Vec<f64> = dh
            .iter()
            .zip(cand.iter().zip(h_prev))
            .map(|(dhi, (c, hp))| dhi * (c - hp))
            .collect();

        // candidate pre-activation: w_cand x + u_cand (r . h_prev) + b_cand
        let gated: Vec<f64> = reset.iter().zip(h_prev).map(|(r, hp)| r * hp).collect();
        grads.w_cand.add_outer(&da_cand, x);
        grads.u_cand.add_outer(&da_cand, &gated);
        axpy(1.0, &da_cand, &mut grads.b_cand);
        let mut d_gated = vec![0.0; hidden];
        params.u_cand.matvec_t_add(&da_cand, &mut d_gated);
        let dr: Vec<f64> = d_gated.iter().zip(h_prev).map(|(dg, hp)| dg * hp).collect();
        for ((dhp, dg), r) in dh_prev.iter_mut().zip(&d_gated).zip(reset) {
            *dhp += dg * r;
        }

        // update gate pre-activation
        let da_update: Vec<f64> = dz.iter().zip(update).map(|(d, z)| d * z * (1.0 - z)).collect();
        grads.w_update.add_outer(&da_update, x);
        grads.u_update.add_outer(&da_update, h_prev);
        axpy(1.0, &da_update, &mut grads.b_update);
        params.u_update.matvec_t_add(&da_update, &mut dh_prev);

        // reset gate pre-activation
        let da_reset: Vec<f64> = dr.iter().zip(reset).map(|(d, r)| d * r * (1.0 - r)).collect();
        grads.w_reset.add_outer(&da_reset, x);
        grads.u_reset.add_outer(&da_reset, h_prev);
        axpy(1.0, &da_reset, &mut grads.b_reset);
        params.u_reset.matvec_t_add(&da_reset, &mut dh_prev);

        if let Some(dx) = dx.as_mut() {
            let slot = &mut dx[t];
            params.w_update.matvec_t_add(&da_update, slot);
            params.w_reset.matvec_t_add(&da_reset, slot);
            params.w_cand.matvec_t_add(&da_cand, slot);
        }
        dh_carry = dh_prev;
    }
    dx
}
