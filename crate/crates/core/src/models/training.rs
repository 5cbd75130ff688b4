//! Mini-batch training with Adam, early stopping on validation loss and
//! seeded fold assignment.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, TrainConfig};
use crate::nn::{Adam, ParamGrads, ParamStore};

/// A model bound to its training data, addressed by row index.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Mean cross-entropy over `rows` and its gradients, with dropout
    /// driven by `rng`.
    fn loss_and_grads(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> (f64, ParamGrads);
    /// Mean cross-entropy over `rows` without dropout.
    fn eval_loss(&self, rows: &[usize]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn best(&self) -> Option<EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch).copied()
    }

    /// `epoch,train_loss,val_loss` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss);
        }
        out
    }
}

/// Seeded RNG for job `stream` (a fold or ensemble member) under `seed`.
pub fn job_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `k` disjoint validation folds over `0..n` after a seeded shuffle. With
/// `k == 1` a fifth of the rows is held out instead.
pub fn fold_splits(n: usize, k: usize, seed: u64) -> Vec<(Vec<usize>, Vec<usize>)> {
    assert!(k >= 1, "at least one fold");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut job_rng(seed, u64::MAX));
    let parts = if k == 1 { 5 } else { k };
    let chunk_of = |pos: usize| pos * parts / n.max(1);
    (0..k)
        .map(|f| {
            let (mut train, mut val) = (Vec::new(), Vec::new());
            for (pos, &row) in order.iter().enumerate() {
                if chunk_of(pos) == f {
                    val.push(row);
                } else {
                    train.push(row);
                }
            }
            train.sort_unstable();
            val.sort_unstable();
            (train, val)
        })
        .collect()
}

/// Trains until `cfg.epochs` or until validation loss has not improved for
/// `cfg.patience` epochs, then restores the best weights.
pub fn fit<M: Trainable>(
    model: &mut M,
    train: &[usize],
    val: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainingLog, ModelError> {
    cfg.validate()?;
    let train_set: HashSet<usize> = train.iter().copied().collect();
    let overlap = val.iter().filter(|r| train_set.contains(r)).count();
    if overlap > 0 {
        return Err(ModelError::SplitOverlap(overlap));
    }
    if train.is_empty() {
        return Err(ModelError::Spec("empty training split".into()));
    }
    let mut opt = Adam::new(model.params(), cfg.learning_rate);
    let mut order = train.to_vec();
    let mut log = TrainingLog::default();
    let mut best = (f64::INFINITY, model.params().clone());
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = model.loss_and_grads(batch, rng);
            if !loss.is_finite() || !grads.all_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    detail: format!("batch {b}: loss {loss}, finite gradients {}", grads.all_finite()),
                });
            }
            opt.step(model.params_mut(), &grads);
        }
        let train_loss = model.eval_loss(train);
        let val_loss = if val.is_empty() { train_loss } else { model.eval_loss(val) };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                detail: format!("train {train_loss}, validation {val_loss}"),
            });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, model.params().clone());
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = epoch < cfg.epochs;
                break;
            }
        }
    }
    *model.params_mut() = best.1;
    Ok(log)
}
