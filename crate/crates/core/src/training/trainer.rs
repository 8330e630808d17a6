use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::loss::{bmh_loss, masked_mse, LossKind};
use crate::autodiff::{ParameterStore, Tape, Var};
use crate::data::{Batch, WindowSample};
use crate::error::{Error, Result};
use crate::models::{ForecastOutput, Model, Pass};
use crate::nn::{DropoutMode, DropoutSpec};
use crate::rng::{self, StreamRng};

/// Samples per forward pass when evaluating.
const EVAL_CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Clip-by-global-norm threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Plateau: best validation MSE improves by less than this fraction...
    pub plateau_tolerance: f64,
    /// ...over this many epochs.
    pub plateau_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 25,
            seed: 0,
            loss: LossKind::MaskedMse,
            clip_norm: None,
            plateau_tolerance: 0.01,
            plateau_window: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max epochs must be at least 1"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::config("clip norm must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation masked MSE in scaled units, whatever the training loss.
    pub val_mse: f64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Parameters at the best validation loss.
    pub best: ParameterStore,
    pub loss: LossKind,
    /// Optimizer updates performed, partial batches included.
    pub steps: u64,
}

impl TrainOutcome {
    pub fn plateau_epoch(&self, tolerance: f64, window: usize) -> Option<usize> {
        plateau_epoch(&self.history, tolerance, window)
    }

    pub fn write_history_csv(&self, path: &Path) -> Result<()> {
        write_history_csv(path, &self.history, self.loss)
    }
}

/// First epoch `e` whose best-so-far validation MSE improved on the value
/// `window` epochs earlier by less than `tolerance` (relative).
pub fn plateau_epoch(history: &[EpochRecord], tolerance: f64, window: usize) -> Option<usize> {
    let mut best = Vec::with_capacity(history.len());
    for r in history {
        let prev = best.last().copied().unwrap_or(f64::INFINITY);
        best.push(r.val_mse.min(prev));
    }
    (window..best.len())
        .find(|&e| {
            let before = best[e - window];
            (before - best[e]) < tolerance * before.abs()
        })
        .map(|e| history[e].epoch)
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord], loss: LossKind) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let name = loss.column_name();
    writeln!(w, "epoch,train_{name},val_{name},val_mse,wall_time_s")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch, r.train_loss, r.val_loss, r.val_mse, r.wall_time_s
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Loss of one forward output.
pub fn batch_loss(tape: &mut Tape, out: &ForecastOutput, batch: &Batch, loss: LossKind) -> Result<Var> {
    match (loss, out.s) {
        (LossKind::MaskedMse, _) => masked_mse(tape, out.y_hat, &batch.future_y, &batch.future_mask, &batch.n_valid),
        (LossKind::Bmh, Some(s)) => bmh_loss(tape, out.y_hat, s, &batch.future_y, &batch.future_mask, &batch.n_valid),
        (LossKind::Bmh, None) => Err(Error::config("bmh loss needs a model with a log-variance head")),
    }
}

/// Predictions of every sample in sample order, in scaled units.
pub fn predict_samples(
    model: &Model,
    store: &ParameterStore,
    samples: &[WindowSample],
    dropout: DropoutSpec,
    rng: &mut StreamRng,
) -> Result<(Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
    let layout = model.spec.layout;
    let mut means = Vec::with_capacity(samples.len());
    let mut log_vars = model.spec.kind.is_bayesian().then(Vec::new);
    for chunk in samples.chunks(EVAL_CHUNK) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        let batch = Batch::from_samples(&refs, layout)?;
        let mut pass = Pass { dropout, rng: &mut *rng };
        let (y, s) = model.predict(store, &batch, &mut pass)?;
        means.extend((0..y.rows()).map(|i| y.row(i).to_vec()));
        if let (Some(lv), Some(s)) = (log_vars.as_mut(), s) {
            lv.extend((0..s.rows()).map(|i| s.row(i).to_vec()));
        }
    }
    Ok((means, log_vars))
}

/// `(loss, masked mse)` over `samples` with dropout off, averaged per sample.
pub fn evaluate_loss(model: &Model, store: &ParameterStore, samples: &[WindowSample], loss: LossKind) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::input("cannot evaluate on an empty split"));
    }
    let mut rng = rng::stream(0, rng::DROPOUT, 0);
    let (mut total, mut total_mse) = (0.0, 0.0);
    for chunk in samples.chunks(EVAL_CHUNK) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        let batch = Batch::from_samples(&refs, model.spec.layout)?;
        let mut tape = Tape::new();
        let mut pass = Pass { dropout: DropoutSpec::off(), rng: &mut rng };
        let out = model.forward(&mut tape, store, &batch, &mut pass)?;
        let l = batch_loss(&mut tape, &out, &batch, loss)?;
        let m = masked_mse(&mut tape, out.y_hat, &batch.future_y, &batch.future_mask, &batch.n_valid)?;
        // chunk means re-weighted by chunk size
        let w = chunk.len() as f64;
        total += tape.value(l).item() * w;
        total_mse += tape.value(m).item() * w;
    }
    let n = samples.len() as f64;
    Ok((total / n, total_mse / n))
}

fn clip_gradients(store: &mut ParameterStore, max_norm: f64) {
    let norm = store.grad_norm();
    if norm > max_norm {
        store.scale_grads(max_norm / norm);
    }
}

/// Mini-batch Adam over `train`, shuffled per epoch, keeping the parameters
/// with the lowest validation loss.
pub fn train(
    model: &Model,
    store: &mut ParameterStore,
    train: &[WindowSample],
    validation: &[WindowSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::input("training and validation splits must be non-empty"));
    }
    if config.loss == LossKind::Bmh && !model.spec.kind.is_bayesian() {
        return Err(Error::config(format!("{} has no log-variance head for the bmh loss", model.spec.kind)));
    }
    let dropout = DropoutSpec::new(model.spec.dropout, DropoutMode::Train)?;
    let mut adam = AdamState::new(store);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.max_epochs);
    let mut best = (f64::INFINITY, 0usize, store.clone());
    let start = Instant::now();
    store.zero_grads();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng::stream(config.seed, rng::SHUFFLE, epoch as u64));
        let mut drop_rng = rng::stream(config.seed, rng::DROPOUT, epoch as u64);
        let (mut sum, mut count) = (0.0, 0usize);
        for idx in order.chunks(config.batch_size) {
            let refs: Vec<&WindowSample> = idx.iter().map(|&i| &train[i]).collect();
            let batch = Batch::from_samples(&refs, model.spec.layout)?;
            let mut tape = Tape::new();
            let mut pass = Pass { dropout, rng: &mut drop_rng };
            let out = model.forward(&mut tape, store, &batch, &mut pass)?;
            let loss = batch_loss(&mut tape, &out, &batch, config.loss)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            tape.backward(loss, store)?;
            if let Some(c) = config.clip_norm {
                clip_gradients(store, c);
            }
            adam.step(store, config.learning_rate)?;
            sum += value * idx.len() as f64;
            count += idx.len();
        }
        let train_loss = sum / count as f64;
        let (val_loss, val_mse) = evaluate_loss(model, store, validation, config.loss)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        if val_loss < best.0 {
            best = (val_loss, epoch, store.clone());
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_mse,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome {
        history,
        best_epoch: best.1,
        best: best.2,
        loss: config.loss,
        steps: adam.step,
    })
}

/// Fresh parameters for `model`'s spec from the init stream of `seed`.
pub fn init_rng(seed: u64) -> StreamRng {
    rng::stream(seed, rng::INIT, 0)
}
