use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ConvNetModel, Example, ModelCfg};
use super::{ModelError, STREAM_DROPOUT, STREAM_SHUFFLE};
use crate::log_model::ApiCallRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainCfg {
    pub minibatch: usize,
    pub momentum: f64,
    pub initial_lr: f64,
    pub lr_halvings: u32,
    pub epochs_per_halving: usize,
    /// Overrides the model's init std when set.
    pub init_std: Option<f64>,
    pub seed: u64,
    /// Number of epochs to run; defaults to the full decay horizon.
    pub epochs: Option<usize>,
}

impl Default for TrainCfg {
    fn default() -> Self {
        TrainCfg {
            minibatch: 128,
            momentum: 0.9,
            initial_lr: 0.01,
            lr_halvings: 10,
            epochs_per_halving: 3,
            init_std: None,
            seed: 0,
            epochs: None,
        }
    }
}

impl TrainCfg {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.minibatch > 0
            && self.momentum >= 0.0
            && self.momentum < 1.0
            && self.initial_lr > 0.0
            && self.epochs_per_halving > 0
            && self.init_std.is_none_or(|s| s > 0.0);
        if ok {
            Ok(())
        } else {
            Err(ModelError::Config("invalid training configuration".into()))
        }
    }

    /// Epoch count covering every halving.
    pub fn horizon(&self) -> usize {
        self.lr_halvings as usize * self.epochs_per_halving
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.horizon())
    }

    /// Step size for `epoch` (0-based): halved every `epochs_per_halving`
    /// epochs, at most `lr_halvings` times.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let halvings = (epoch / self.epochs_per_halving).min(self.lr_halvings as usize);
        self.initial_lr / (1u64 << halvings) as f64
    }

    /// Step size once all halvings have happened.
    pub fn final_lr(&self) -> f64 {
        self.lr_at(self.horizon())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    /// Fraction of training examples whose train-mode argmax was correct
    /// before that minibatch's update.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: ConvNetModel,
    pub epochs: Vec<EpochMetrics>,
}

/// One step of momentum SGD: `v = mu * v - lr * g; w = w + v`.
pub fn sgd_momentum_step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    for ((w, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v - lr * g;
        *w += *v;
    }
}

pub fn train(examples: &[Example], model_cfg: ModelCfg, cfg: &TrainCfg) -> Result<Trained, ModelError> {
    train_with(examples, model_cfg, cfg, |_| {})
}

/// Trains from scratch; `on_epoch` sees each epoch's metrics as they land.
/// Fully deterministic for a given seed: initialization, shuffling and
/// dropout draw from separate streams of one seeded generator.
pub fn train_with(
    examples: &[Example],
    mut model_cfg: ModelCfg,
    cfg: &TrainCfg,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Trained, ModelError> {
    cfg.validate()?;
    let classes: BTreeSet<usize> = examples.iter().map(|e| e.label).collect();
    if classes.len() < 2 {
        return Err(ModelError::InsufficientData(format!(
            "need at least 2 classes, found {}",
            classes.len()
        )));
    }
    if let Some(std) = cfg.init_std {
        model_cfg.init_std = std;
    }
    let mut model = ConvNetModel::initialized(model_cfg, cfg.seed)?;
    let mut velocity = vec![0.0; model.num_params()];
    let mut grad = vec![0.0; model.num_params()];

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(STREAM_SHUFFLE);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(STREAM_DROPOUT);

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::new();
    for epoch in 0..cfg.total_epochs() {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(cfg.minibatch) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            let (loss, hits) = model.loss_and_backward_counted(&batch, Some(&mut dropout_rng), &mut grad)?;
            loss_sum += loss * batch.len() as f64;
            correct += hits;
            sgd_momentum_step(model.params_mut(), &mut velocity, &grad, lr, cfg.momentum);
        }
        let metrics = EpochMetrics {
            epoch,
            lr,
            mean_loss: loss_sum / examples.len() as f64,
            train_accuracy: correct as f64 / examples.len() as f64,
        };
        on_epoch(&metrics);
        history.push(metrics);
    }
    Ok(Trained { model, epochs: history })
}

/// Label list from the records, then quantized examples.
pub fn examples_from_records(model_cfg: &mut ModelCfg, records: &[ApiCallRecord]) -> Result<Vec<Example>, ModelError> {
    model_cfg.labels = ModelCfg::canonical_labels(records.iter().map(|r| &r.outcome));
    let shell = ConvNetModel::zeroed(model_cfg.clone())?;
    records.iter().map(|r| shell.example(r)).collect()
}

/// Deterministic split: every `k`-th record (by a seeded permutation)
/// goes to the holdout set.
pub fn split_holdout(records: &[ApiCallRecord], holdout_fraction: f64, seed: u64) -> (Vec<ApiCallRecord>, Vec<ApiCallRecord>) {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SHUFFLE + 100);
    idx.shuffle(&mut rng);
    let n_hold = ((records.len() as f64) * holdout_fraction).round() as usize;
    let mut hold: Vec<usize> = idx[..n_hold].to_vec();
    let mut train: Vec<usize> = idx[n_hold..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    (
        train.into_iter().map(|i| records[i].clone()).collect(),
        hold.into_iter().map(|i| records[i].clone()).collect(),
    )
}
