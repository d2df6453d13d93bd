use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::PairNet;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Compute per-pair gradients of a batch on the rayon pool. The reduction
    /// still runs in ascending pair order, so results are identical either way.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 8,
            batch_size: 16,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.batch_size > 0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::invalid(format!(
                "invalid training hyperparameters: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Prepared inputs and `(index_a, index_b, label)` triples into them.
#[derive(Debug, Clone, Copy)]
pub struct PairSet<'a, T> {
    pub inputs: &'a [Vec<T>],
    pub pairs: &'a [(usize, usize, u8)],
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLog>,
}

/// Adam state over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        self.step += 1;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::lit(1.0 - self.beta1.powi(self.step));
        let c2 = T::lit(1.0 - self.beta2.powi(self.step));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.epsilon));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Mean BCE over a pair set without touching gradients.
pub fn mean_loss<T: Scalar>(net: &PairNet<T>, set: PairSet<'_, T>) -> Result<f64> {
    if set.pairs.is_empty() {
        return Err(Error::invalid("empty pair set"));
    }
    let embeddings = set
        .inputs
        .iter()
        .map(|x| net.encode(x))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = set
        .pairs
        .iter()
        .map(|&(a, b, y)| {
            super::model::bce_from_logit(
                net.logit_from_embeddings(&embeddings[a], &embeddings[b]),
                y,
            )
            .to_f64_lossy()
        })
        .sum();
    Ok(total / set.pairs.len() as f64)
}

fn batch_gradient<T: Scalar>(
    net: &PairNet<T>,
    set: PairSet<'_, T>,
    batch: &[usize],
    parallel: bool,
) -> (Vec<T>, T) {
    let n = net.num_params();
    let scale = T::one() / T::from_usize(batch.len()).expect("batch size");
    let one = |&i: &usize| {
        let (a, b, y) = set.pairs[i];
        let mut g = vec![T::zero(); n];
        let loss = net.pair_backward(&set.inputs[a], &set.inputs[b], y, scale, &mut g);
        (g, loss)
    };
    let parts: Vec<(Vec<T>, T)> = if parallel {
        batch.par_iter().map(one).collect()
    } else {
        batch.iter().map(one).collect()
    };
    let mut grad = vec![T::zero(); n];
    let mut loss = T::zero();
    for (g, l) in parts {
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += *v;
        }
        loss += l;
    }
    (grad, loss)
}

/// Adam over seeded-shuffled minibatches. Epoch `e` shuffles the pair indices
/// with the stream seeded by `derive_seed(cfg.seed, e)`.
pub fn train<T: Scalar>(
    net: &mut PairNet<T>,
    set: PairSet<'_, T>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainHistory> {
    cfg.validate()?;
    if set.pairs.is_empty() {
        return Err(Error::invalid("training set has no pairs"));
    }
    for x in set.inputs {
        if x.len() != net.config().input_len() {
            return Err(Error::Shape {
                layer: "encoder input".into(),
                expected: vec![net.config().input_len()],
                found: vec![x.len()],
            });
        }
    }
    if let Some(&(a, b, _)) = set
        .pairs
        .iter()
        .find(|&&(a, b, _)| a >= set.inputs.len() || b >= set.inputs.len())
    {
        return Err(Error::invalid(format!(
            "pair ({a}, {b}) indexes past {} inputs",
            set.inputs.len()
        )));
    }
    let mut adam = Adam::new(net.num_params(), cfg);
    let mut history = TrainHistory::default();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..set.pairs.len()).collect();
        SplitMix64::new(derive_seed(cfg.seed, epoch as u64)).shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (grad, loss) = batch_gradient(net, set, batch, cfg.parallel);
            epoch_loss += loss.to_f64_lossy();
            adam.step(net.params_mut(), &grad);
        }
        let log = EpochLog {
            epoch,
            mean_loss: epoch_loss / set.pairs.len() as f64,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        log::info!(
            "epoch {epoch}: mean loss {:.5} ({} ms)",
            log.mean_loss,
            log.wall_ms
        );
        on_epoch(&log);
        history.epochs.push(log);
    }
    Ok(history)
}
