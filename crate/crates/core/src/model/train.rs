use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Example, LossWeights, Model, ModelError};
use crate::fusion::FusionError;
use crate::numcore::{Graph, NumError, Session};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    /// Shuffling and dropout streams.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            learning_rate: 1e-3,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(ModelError::Config(format!("invalid Adam settings {a:?}")));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss of each mini-batch, measured before its update.
    pub step_losses: Vec<f64>,
    /// Mean per-example loss over each epoch.
    pub epoch_losses: Vec<f64>,
}

struct Adam {
    cfg: AdamConfig,
    lr: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    fn new(model: &Model, lr: f64, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Self {
            cfg,
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn update(&mut self, model: &mut Model, grads: &[Vec<f64>]) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let ids: Vec<_> = model.store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let value = model.store.get_mut(id).data_mut();
            for (i, x) in value.iter_mut().enumerate() {
                let g = grads[k][i];
                let m = &mut self.m[k][i];
                let v = &mut self.v[k][i];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *x -= self.lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
    }
}

fn is_non_finite(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::Num(NumError::NonFinite { .. })
            | ModelError::Fusion(FusionError::Numerical { .. })
            | ModelError::Fusion(FusionError::Num(NumError::NonFinite { .. }))
            | ModelError::Encoder(crate::encoders::EncoderError::Num(NumError::NonFinite { .. }))
    )
}

/// Mini-batch Adam on the variant's objective. Each example gets its own
/// graph; batch gradients are averaged in example order, so results do not
/// depend on scheduling. Epoch and batch numbers in errors are 1-based.
pub fn train(model: &mut Model, examples: &[Example], cfg: &TrainConfig) -> Result<TrainReport, ModelError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(ModelError::EmptySplit("training"));
    }
    let mut adam = Adam::new(model, cfg.learning_rate, cfg.adam);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grads: Vec<Vec<f64>> = model.store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[epoch as u64]));
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let abort = || ModelError::NonFiniteLoss {
                epoch: epoch + 1,
                batch: batch + 1,
            };
            grads.iter_mut().for_each(|g| g.fill(0.0));
            let mut batch_total = 0.0;
            for &idx in chunk {
                let ex = &examples[idx];
                let mut g = Graph::new();
                let dropout_seed = seed::derive(cfg.seed, &[epoch as u64, idx as u64, 1]);
                let mut s = Session::train(&mut g, &model.store, dropout_seed);
                let out = model
                    .forward(&mut s, &ex.waveform, &ex.english, ex.label, &cfg.weights)
                    .map_err(|e| if is_non_finite(&e) { abort() } else { e })?;
                let loss = s.graph.value(out.loss).item();
                if !loss.is_finite() {
                    return Err(abort());
                }
                batch_total += loss;
                let tape = s.graph.backward(out.loss)?;
                for (acc, g) in grads.iter_mut().zip(s.param_grads(&tape)) {
                    if let Some(g) = g {
                        acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            if grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(abort());
            }
            adam.update(model, &grads);
            report.step_losses.push(batch_total * scale);
            epoch_total += batch_total;
        }
        report.epoch_losses.push(epoch_total / examples.len() as f64);
    }
    Ok(report)
}
