use rand::Rng;

use super::{masked_mse_loss, SrnBatch, SrnModel};
use crate::error::{Error, Result};
use crate::link::{batch_from_observations, Link};
use crate::rng::{stream, substream};

/// Online training schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    /// Fresh transmissions simulated per epoch.
    pub frames_per_epoch: usize,
    /// Transmissions per Adam step; each contributes one example per user.
    pub batch_size: usize,
    /// Transmissions in the held-out set used for the before/after check.
    pub holdout_frames: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 1e-3,
            frames_per_epoch: 128,
            batch_size: 8,
            holdout_frames: 64,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.frames_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::param(
                "epochs, frames per epoch and batch size must be positive",
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::param(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.frames_per_epoch.div_ceil(self.batch_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
    pub initial_holdout_mse: f64,
    pub final_holdout_mse: f64,
    /// Zero-forcing MSE on the same held-out set.
    pub baseline_holdout_mse: f64,
    pub steps: u64,
}

impl TrainReport {
    /// Refined output no worse than zero-forcing on held-out data.
    pub fn beats_baseline(&self) -> bool {
        self.final_holdout_mse <= self.baseline_holdout_mse
    }

    pub fn improved(&self) -> bool {
        self.final_holdout_mse <= self.initial_holdout_mse
    }

    pub fn trend_ok(&self) -> bool {
        moving_average_non_increasing(&self.loss_history, 5)
    }
}

/// True when every `window`-epoch moving average is no larger than the one
/// before it. Histories shorter than `window + 1` pass trivially.
pub fn moving_average_non_increasing(history: &[f64], window: usize) -> bool {
    if window == 0 || history.len() <= window {
        return true;
    }
    let avgs: Vec<f64> = history
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    avgs.windows(2).all(|p| p[1] <= p[0])
}

fn simulate_batch(link: &Link, seed: u64, tag: u64, first: u64, count: usize) -> Result<SrnBatch> {
    let mut obs = Vec::with_capacity(count * link.users());
    for i in 0..count as u64 {
        let index = first + i;
        let mut rng = substream(seed, &[tag, index]);
        obs.extend(link.simulate(index, &mut rng)?);
    }
    Ok(batch_from_observations(&obs))
}

/// Payload MSE of the refiner and of zero-forcing on `batch`, evaluated in
/// chunks to bound memory.
pub(crate) fn evaluate(model: &SrnModel, batch: &SrnBatch, chunk: usize) -> Result<(f64, f64)> {
    let mut refined = Vec::with_capacity(batch.len());
    for start in (0..batch.len()).step_by(chunk.max(1)) {
        let end = (start + chunk.max(1)).min(batch.len());
        let part = SrnBatch {
            r_eq: batch.r_eq[start..end].to_vec(),
            residual: batch.residual[start..end].to_vec(),
            target: batch.target[start..end].to_vec(),
            pilot_mask: batch.pilot_mask[start..end].to_vec(),
        };
        refined.extend(model.forward(&part)?);
    }
    let srn = masked_mse_loss(&refined, &batch.target, &batch.pilot_mask)?;
    let zf = masked_mse_loss(&batch.r_eq, &batch.target, &batch.pilot_mask)?;
    Ok((srn, zf))
}

/// Trains `model` online on freshly simulated transmissions of `link`.
///
/// One base seed is drawn from `rng`; every batch and the held-out set come
/// from sub-streams of it, so the run is reproducible bit for bit.
pub fn train<R: Rng + ?Sized>(
    model: &mut SrnModel,
    link: &Link,
    settings: &TrainSettings,
    rng: &mut R,
) -> Result<TrainReport> {
    settings.validate()?;
    link.validate()?;
    if model.config.sf != link.sf() || model.config.seq_len != link.k {
        return Err(Error::config(format!(
            "refiner built for SF={} K={}, link has SF={} K={}",
            model.config.sf,
            model.config.seq_len,
            link.sf(),
            link.k
        )));
    }
    let seed: u64 = rng.random();
    let holdout = simulate_batch(link, seed, stream::HOLDOUT, 0, settings.holdout_frames)?;
    let (initial, baseline) = evaluate(model, &holdout, 16)?;

    let as_training = |epoch: usize| {
        move |e: Error| match e {
            Error::Numeric { tensor, msg } => Error::Training {
                epoch,
                msg: format!("{tensor}: {msg}"),
            },
            other => other,
        }
    };

    let steps = settings.steps_per_epoch();
    let mut history = Vec::with_capacity(settings.epochs);
    let mut frame_index = 0u64;
    for epoch in 0..settings.epochs {
        let mut total = 0.0;
        let mut remaining = settings.frames_per_epoch;
        for _ in 0..steps {
            let n = remaining.min(settings.batch_size);
            remaining -= n;
            let batch = simulate_batch(link, seed, stream::TRAIN, frame_index, n)?;
            frame_index += n as u64;
            let (loss, grads) = model.loss_and_grad(&batch).map_err(as_training(epoch))?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    msg: "training loss is not finite".into(),
                });
            }
            model
                .adam_step(&grads, settings.lr)
                .map_err(as_training(epoch))?;
            total += loss;
        }
        history.push(total / steps as f64);
    }

    let (fin, _) = evaluate(model, &holdout, 16)?;
    Ok(TrainReport {
        loss_history: history,
        initial_holdout_mse: initial,
        final_holdout_mse: fin,
        baseline_holdout_mse: baseline,
        steps: model.adam.step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_check() {
        assert!(moving_average_non_increasing(
            &[5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.4],
            5
        ));
        assert!(!moving_average_non_increasing(
            &[1.0, 1.0, 1.0, 1.0, 1.0, 9.0],
            5
        ));
        assert!(moving_average_non_increasing(&[1.0, 2.0], 5));
    }

    #[test]
    fn settings_validation() {
        assert!(TrainSettings::default().validate().is_ok());
        let bad = TrainSettings {
            lr: 0.0,
            ..TrainSettings::default()
        };
        assert!(bad.validate().is_err());
        let s = TrainSettings {
            frames_per_epoch: 10,
            batch_size: 4,
            ..TrainSettings::default()
        };
        assert_eq!(s.steps_per_epoch(), 3);
    }
}
