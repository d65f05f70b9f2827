use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::HmmDataset;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

use super::GruClassifier;

/// Optimizer and architecture settings for [`train_gru`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub hidden_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 80,
            weight_decay: 0.0,
            batch_size: 100,
            hidden_size: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.adam_beta1)
            && (0.0..1.0).contains(&self.adam_beta2)
            && self.adam_epsilon > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size > 0
            && self.hidden_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }
}

/// First and second moment estimates for Adam.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update (L2 weight decay folded into the gradient).
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, cfg: &TrainConfig) {
    state.step += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(state.step);
    let c2 = 1.0 - b2.powi(state.step);
    for k in 0..params.len() {
        let g = grad[k] + cfg.weight_decay * params[k];
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub final_train_loss: f64,
    pub final_train_accuracy: f64,
    pub final_validation_loss: Option<f64>,
    pub final_validation_accuracy: Option<f64>,
}

/// Mean per-step cross-entropy and accuracy over a dataset.
pub fn evaluate_dataset(model: &GruClassifier, data: &HmmDataset) -> Result<(f64, f64)> {
    let per_series = data
        .inputs
        .par_iter()
        .zip(&data.labels)
        .map(|(x, y)| model.evaluate(x, y).map(|(ce, acc)| (ce, acc, y.len())))
        .collect::<Result<Vec<_>>>()?;
    let steps: usize = per_series.iter().map(|s| s.2).sum();
    let ce = per_series.iter().map(|s| s.0 * s.2 as f64).sum::<f64>() / steps as f64;
    let acc = per_series.iter().map(|s| s.1 * s.2 as f64).sum::<f64>() / steps as f64;
    Ok((ce, acc))
}

/// Trains a GRU classifier with Adam on shuffled mini-batches, minimizing the
/// mean per-step binary cross-entropy. With `epochs = 0` the seeded
/// initialization is returned unchanged.
pub fn train_gru(
    train: &HmmDataset,
    validation: Option<&HmmDataset>,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<(GruClassifier, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidRequest("training set is empty".into()));
    }
    let input_size = train.inputs[0].cols();
    let mut model = GruClassifier::init(input_size, cfg.hidden_size, rng)?;
    let mut adam = AdamState::new(model.params().len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let grads = batch
                .par_iter()
                .map(|&k| model.param_gradients(&train.inputs[k], &train.labels[k]).map(|(_, g)| g))
                .collect::<Result<Vec<_>>>()?;
            // Summed in batch order so results do not depend on thread count.
            let mut total = vec![0.0; model.params().len()];
            for g in &grads {
                for (t, v) in total.iter_mut().zip(g) {
                    *t += v;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            total.iter_mut().for_each(|v| *v *= scale);
            adam_step(model.params_mut(), &total, &mut adam, cfg);
        }
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("GRU parameters after epoch {}", epoch + 1)));
        }
        let (train_loss, train_accuracy) = evaluate_dataset(&model, train)?;
        let val = validation.map(|v| evaluate_dataset(&model, v)).transpose()?;
        records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            train_accuracy,
            validation_loss: val.map(|v| v.0),
            validation_accuracy: val.map(|v| v.1),
        });
    }

    let (final_train_loss, final_train_accuracy) = evaluate_dataset(&model, train)?;
    let val = validation.map(|v| evaluate_dataset(&model, v)).transpose()?;
    Ok((
        model,
        TrainReport {
            epochs: records,
            final_train_loss,
            final_train_accuracy,
            final_validation_loss: val.map(|v| v.0),
            final_validation_accuracy: val.map(|v| v.1),
        },
    ))
}
