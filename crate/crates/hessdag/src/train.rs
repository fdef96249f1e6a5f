//! Minibatch training with global-norm clipping: SGD with heavy-ball
//! momentum, or Adam.

use hessdag_core::calculus::{backward, forward, param_gradient, Sample};
use hessdag_core::linalg::norm;
use hessdag_core::zoo::rescale_spectral;
use hessdag_core::Graph;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Sgd,
    /// `β₁ = 0.9, β₂ = 0.999, ε = 1e-8`; `momentum` is ignored.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    /// Re-rescale every weight matrix to this spectral norm after each epoch.
    pub spectral_target: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { optimizer: Optimizer::Sgd, epochs: 20, lr: 0.01, momentum: 0.9, clip_norm: 1.0, batch_size: 16, spectral_target: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointTag {
    Init,
    Mid,
    Final,
}

impl CheckpointTag {
    pub const ALL: [CheckpointTag; 3] = [CheckpointTag::Init, CheckpointTag::Mid, CheckpointTag::Final];

    pub fn name(self) -> &'static str {
        match self {
            CheckpointTag::Init => "init",
            CheckpointTag::Mid => "mid",
            CheckpointTag::Final => "final",
        }
    }

    pub fn epoch(self, epochs: usize) -> usize {
        match self {
            CheckpointTag::Init => 0,
            CheckpointTag::Mid => epochs.div_ceil(2),
            CheckpointTag::Final => epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tag: CheckpointTag,
    pub epoch: usize,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub checkpoints: Vec<Checkpoint>,
    /// Mean training loss at the start of training and after each epoch.
    pub losses: Vec<f64>,
    /// Epoch during which the loss became non-finite.
    pub diverged: Option<usize>,
}

fn mean_loss(g: &Graph, theta: &[f64], data: &[Sample]) -> f64 {
    let mut acc = 0.0;
    for s in data {
        match forward(g, theta, s) {
            Ok(fs) => acc += fs.loss(),
            Err(_) => return f64::NAN,
        }
    }
    acc / data.len().max(1) as f64
}

/// Mean loss and gradient over `batch`; `None` if anything is non-finite.
fn batch_gradient(g: &Graph, theta: &[f64], batch: &[&Sample]) -> Option<Vec<f64>> {
    let mut grad = vec![0.0; theta.len()];
    for s in batch {
        let fs = forward(g, theta, s).ok()?;
        if !fs.loss().is_finite() {
            return None;
        }
        let bs = backward(g, &fs);
        for (acc, x) in grad.iter_mut().zip(param_gradient(g, &fs, &bs)) {
            *acc += x;
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|x| *x /= n);
    grad.iter().all(|x| x.is_finite()).then_some(grad)
}

pub fn train_sgd(g: &Graph, theta0: &[f64], data: &[Sample], cfg: &TrainConfig, seed: u64) -> TrainResult {
    let mut theta = theta0.to_vec();
    let mut velocity = vec![0.0; theta.len()];
    let mut second = vec![0.0; theta.len()];
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut checkpoints = vec![];
    let mut losses = vec![mean_loss(g, &theta, data)];
    let snapshot = |epoch: usize, theta: &[f64], out: &mut Vec<Checkpoint>| {
        for tag in CheckpointTag::ALL {
            if tag.epoch(cfg.epochs) == epoch {
                out.push(Checkpoint { tag, epoch, theta: theta.to_vec() });
            }
        }
    };
    if !losses[0].is_finite() {
        return TrainResult { checkpoints, losses, diverged: Some(0) };
    }
    snapshot(0, &theta, &mut checkpoints);
    let batch_size = cfg.batch_size.max(1);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let Some(mut grad) = batch_gradient(g, &theta, &batch) else {
                return TrainResult { checkpoints, losses, diverged: Some(epoch) };
            };
            let gn = norm(&grad);
            if gn > cfg.clip_norm {
                let s = cfg.clip_norm / gn;
                grad.iter_mut().for_each(|x| *x *= s);
            }
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for ((t, v), d) in theta.iter_mut().zip(&mut velocity).zip(&grad) {
                        *v = cfg.momentum * *v + d;
                        *t -= cfg.lr * *v;
                    }
                }
                Optimizer::Adam => {
                    let (b1, b2) = (0.9f64, 0.999f64);
                    let (c1, c2) = (1.0 - b1.powi(step), 1.0 - b2.powi(step));
                    for (((t, m), s), d) in theta.iter_mut().zip(&mut velocity).zip(&mut second).zip(&grad) {
                        *m = b1 * *m + (1.0 - b1) * d;
                        *s = b2 * *s + (1.0 - b2) * d * d;
                        *t -= cfg.lr * (*m / c1) / ((*s / c2).sqrt() + 1e-8);
                    }
                }
            }
        }
        if let Some(target) = cfg.spectral_target {
            rescale_spectral(g, &mut theta, target);
        }
        let loss = mean_loss(g, &theta, data);
        losses.push(loss);
        if !loss.is_finite() {
            return TrainResult { checkpoints, losses, diverged: Some(epoch) };
        }
        snapshot(epoch, &theta, &mut checkpoints);
    }
    TrainResult { checkpoints, losses, diverged: None }
}
