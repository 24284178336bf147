//! Mini-batch training loop over whole sequences.
//!
//! A batch is cut into fixed-size chunks; chunks are evaluated through
//! [`Execution`] and their gradients summed in chunk order, so a step is
//! bit-identical no matter how many threads run it.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::TaskMask;
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::gru::EffectiveWeights;
use crate::nn::loss::mse_loss;
use crate::nn::params::{Gradients, ParameterStore};
use crate::nn::tensor::Tensor2;
use crate::parallel::Execution;

/// Paths per evaluated chunk inside a batch.
pub const CHUNK_PATHS: usize = 32;

/// Paired input/target sequences (already scaled).
#[derive(Debug, Clone, Default)]
pub struct SequenceSet {
    pub inputs: Vec<Tensor2>,
    pub targets: Vec<Tensor2>,
}

impl SequenceSet {
    pub fn new(inputs: Vec<Tensor2>, targets: Vec<Tensor2>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::shape(format!(
                "{} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Sub-set with the given path indices, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub epochs: usize,
    pub steps: u64,
    /// Mean training loss per epoch (scaled units).
    pub loss_history: Vec<f64>,
}

impl FitReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }
}

/// Mean per-path MSE over `inputs`/`targets` and its gradient.
pub fn loss_and_gradient(
    eff: &EffectiveWeights,
    inputs: &[&Tensor2],
    targets: &[&Tensor2],
    exec: Execution,
) -> Result<(f64, Gradients)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::shape(format!(
            "batch has {} inputs and {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let inv_batch = 1.0 / inputs.len() as f64;
    let n_chunks = inputs.len().div_ceil(CHUNK_PATHS);
    let parts = exec.map_range(n_chunks, |c| -> Result<(f64, Gradients)> {
        let lo = c * CHUNK_PATHS;
        let hi = (lo + CHUNK_PATHS).min(inputs.len());
        let (preds, trace) = eff.forward(&inputs[lo..hi])?;
        let mut loss = 0.0;
        let mut dys = Vec::with_capacity(hi - lo);
        for (pred, target) in preds.iter().zip(&targets[lo..hi]) {
            let (l, dy) = mse_loss(pred, target)?;
            loss += l;
            dys.push(dy.map(|v| v * inv_batch));
        }
        let refs: Vec<&Tensor2> = dys.iter().collect();
        Ok((loss, eff.backward(&trace, &refs)?))
    });
    let mut total = Gradients::zeros(eff.arch());
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    Ok((loss * inv_batch, total))
}

/// Predictions for many sequences, evaluated chunk by chunk.
pub fn predict_many(eff: &EffectiveWeights, inputs: &[Tensor2], exec: Execution) -> Result<Vec<Tensor2>> {
    let n_chunks = inputs.len().div_ceil(CHUNK_PATHS);
    let parts = exec.map_range(n_chunks, |c| {
        let lo = c * CHUNK_PATHS;
        let hi = (lo + CHUNK_PATHS).min(inputs.len());
        let refs: Vec<&Tensor2> = inputs[lo..hi].iter().collect();
        eff.predict(&refs)
    });
    let mut out = Vec::with_capacity(inputs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Mean per-path MSE of the masked network on `data`.
pub fn evaluate_loss(params: &ParameterStore, mask: &TaskMask, data: &SequenceSet, exec: Execution) -> Result<f64> {
    let eff = EffectiveWeights::new(params, mask)?;
    let preds = predict_many(&eff, &data.inputs, exec)?;
    let mut sum = 0.0;
    for (p, t) in preds.iter().zip(&data.targets) {
        sum += mse_loss(p, t)?.0;
    }
    Ok(sum / data.len().max(1) as f64)
}

/// Train the entries of `trainable` with the forward pass running through
/// `forward_mask`. Adam state starts fresh.
///
/// `trainable` is intersected with `forward_mask`: an inactive connection can
/// never be updated, not even by weight decay.
pub fn fit<R: Rng + ?Sized>(
    params: &mut ParameterStore,
    forward_mask: &TaskMask,
    trainable: &TaskMask,
    data: &SequenceSet,
    config: &FitConfig,
    rng: &mut R,
    exec: Execution,
) -> Result<FitReport> {
    if data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    let trainable = trainable.intersection(forward_mask)?;
    let mut adam = AdamState::new(config.adam, params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let eff = EffectiveWeights::new(params, forward_mask)?;
            let inputs: Vec<&Tensor2> = batch.iter().map(|&i| &data.inputs[i]).collect();
            let targets: Vec<&Tensor2> = batch.iter().map(|&i| &data.targets[i]).collect();
            let (loss, grads) = loss_and_gradient(&eff, &inputs, &targets, exec)?;
            if !loss.is_finite() {
                return Err(Error::config(format!("training diverged at epoch {epoch}")));
            }
            epoch_loss += loss * batch.len() as f64;
            adam.step(params, &grads, &trainable);
        }
        history.push(epoch_loss / data.len() as f64);
        if epoch % 50 == 0 || epoch + 1 == config.epochs {
            log::debug!("epoch {epoch}: loss {:.6e}", epoch_loss / data.len() as f64);
        }
    }
    Ok(FitReport {
        epochs: config.epochs,
        steps: adam.steps_taken(),
        loss_history: history,
    })
}
