//! Adam, the warmup + cosine schedule and the per-station training loop.

mod adam;
mod schedule;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use schedule::lr_at;

use crate::data::{GridSpec, NormStats, Sample, StationMeta, HORIZON};
use crate::error::{Error, Result};
use crate::loss::{combined_loss_tape, fit_tail_threshold, LossBreakdown, LossConfig};
use crate::model::{Batch, Checkpoint, Model, CHECKPOINT_FORMAT};
use crate::numerics::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    /// Apply weight decay to the update rather than adding it to the gradient.
    pub decoupled_weight_decay: bool,
    pub seed: u64,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            peak_lr: 0.005,
            min_lr: 1e-6,
            epochs: 50,
            warmup_epochs: 5,
            weight_decay: 1e-5,
            decoupled_weight_decay: false,
            seed: 0,
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and epochs must be positive".into()));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::InvalidConfig(format!(
                "warmup_epochs {} must be below epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.peak_lr && self.peak_lr.is_finite()) {
            return Err(Error::InvalidConfig("need 0 <= min_lr <= peak_lr".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("weight_decay must be non-negative".into()));
        }
        self.loss.validate()
    }
}

/// One completed epoch. Loss terms are sample-weighted means over the
/// epoch's batches; `tail_count` is summed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub tail: f64,
    pub slope: f64,
    pub total: f64,
    pub tail_count: usize,
    pub val_rmse: f64,
    pub val_mae: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Validation RMSE of the untrained model.
    pub initial_val_rmse: f64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        for r in &self.epochs {
            w.serialize(r).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e.into(),
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation RMSE.
    pub best: Model,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    /// Parameters after the last epoch.
    pub last: Model,
    pub tau_tail: f64,
    pub history: TrainHistory,
}

impl TrainOutcome {
    /// Checkpoint of the best model with the data context it was trained in.
    pub fn checkpoint(&self, station: StationMeta, grid: GridSpec, center_pressure: bool, norm: NormStats) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            kind: self.best.kind,
            config: self.best.config.clone(),
            station,
            grid,
            center_pressure,
            norm,
            tau_tail: Some(self.tau_tail),
            epoch: self.best_epoch,
            val_rmse: self.best_val_rmse,
            params: self.best.params.clone(),
        }
    }
}

/// RMSE and MAE in meters over every horizon value of `samples`, eval mode.
pub fn evaluate_samples(model: &Model, samples: &[Sample], batch_size: usize) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to evaluate".into()));
    }
    let pred = model.predict(samples, batch_size)?;
    let (mut se, mut ae) = (0.0, 0.0);
    for (p, s) in pred.iter().zip(samples) {
        for h in 0..HORIZON {
            let e = p[h] - s.target[h];
            se += e * e;
            ae += e.abs();
        }
    }
    let n = (samples.len() * HORIZON) as f64;
    Ok(((se / n).sqrt(), ae / n))
}

/// Generator for epoch `epoch`: drives the shuffle, then dropout masks.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// One optimizer step on `batch`; returns the loss breakdown before the update.
pub fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    batch: &Batch,
    loss: &LossConfig,
    tau_tail: Option<f64>,
    lr: f64,
    weight_decay: f64,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let mut t = Tape::new();
    let p = model.params.bind(&mut t);
    let y = model.forward(&mut t, &p, batch, Some(rng))?;
    let (root, breakdown) = combined_loss_tape(&mut t, y, &batch.target, &batch.peak, loss, tau_tail)?;
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite(format!("training loss {}", breakdown.total)));
    }
    let g = t.backward(root)?;
    let grads = p.grads(&t, &g);
    adam.update(&mut model.params, &grads, lr, weight_decay)?;
    Ok(breakdown)
}

/// Trains `model` on `train`, selecting the epoch with the best validation
/// RMSE. `τ_tail` is fitted once from the training peaks before epoch 0.
/// `on_epoch` sees every record as it completes.
pub fn train(
    mut model: Model,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::InvalidConfig("validation split is empty".into()));
    }
    let peaks: Vec<f64> = train.iter().map(|s| s.peak).collect();
    let tau = fit_tail_threshold(&peaks, cfg.loss.tail_fraction)?;
    let eval_batch = cfg.batch_size.max(256);

    let mut adam = Adam::new(&model.params);
    adam.decoupled = cfg.decoupled_weight_decay;
    let (initial_val_rmse, _) = evaluate_samples(&model, val, eval_batch)?;
    let mut history = TrainHistory {
        initial_val_rmse,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut best = (model.clone(), usize::MAX, f64::INFINITY);

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = lr_at(cfg, epoch)?;
        let mut rng = epoch_rng(cfg.seed, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut sums = [0.0; 4];
        let mut tail_count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = Batch::new(&refs)?;
            let b = train_step(&mut model, &mut adam, &batch, &cfg.loss, Some(tau), lr, cfg.weight_decay, &mut rng)?;
            let w = chunk.len() as f64;
            for (s, v) in sums.iter_mut().zip([b.mse, b.tail, b.slope, b.total]) {
                *s += w * v;
            }
            tail_count += b.tail_count;
        }
        let n = train.len() as f64;
        let (val_rmse, val_mae) = evaluate_samples(&model, val, eval_batch)?;
        if !val_rmse.is_finite() {
            return Err(Error::NonFinite(format!("validation RMSE at epoch {epoch}")));
        }
        if val_rmse < best.2 {
            best = (model.clone(), epoch, val_rmse);
        }
        let record = EpochRecord {
            epoch,
            mse: sums[0] / n,
            tail: sums[1] / n,
            slope: sums[2] / n,
            total: sums[3] / n,
            tail_count,
            val_rmse,
            val_mae,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok(TrainOutcome {
        best: best.0,
        best_epoch: best.1,
        best_val_rmse: best.2,
        last: model,
        tau_tail: tau,
        history,
    })
}
