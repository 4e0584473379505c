pub mod adam;
pub mod checkpoint;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::Trajectory;
use crate::eval::{evaluate_model, EvalError};
use crate::models::{ModelError, StepModel};
use crate::numerics::{NodeId, NumericsError, Scalar, Tape, Tensor};
use crate::rollout::{
    e_schedule, rollout, DecayVariant, RolloutError, RolloutOptions, ScheduleState, Scheme,
};
use crate::seeds;

pub use adam::{adam_step, collect_grads, AdamHyper, AdamState, FlatGrads};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CKPT_MAGIC};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("sequence loss: {preds} predictions vs {targets} targets")]
    LengthMismatch { preds: usize, targets: usize },
    #[error("sequence loss: empty sequence")]
    EmptySequence,
    #[error("non-finite gradient in parameter {name:?}")]
    NonFiniteGrad { name: String },
    #[error("non-finite loss on sample {sample_id}")]
    NonFiniteLoss { sample_id: u64 },
    #[error("training split is empty")]
    EmptyTrainSet,
    #[error("train config: {0}")]
    Config(String),
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error("resume checkpoint was written by a different training config")]
    ResumeMismatch,
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    /// Learning rate halves every this many epochs (floor division).
    pub lr_halving_period: usize,
    pub batch_size: usize,
    pub t_in: usize,
    pub t_out: usize,
    pub scheme: Scheme,
    pub decay: DecayVariant,
    /// Root seed of this run's training streams (shuffling, schedule coins).
    pub seed: u64,
    /// Optional global L2 gradient-norm clip.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.lr_halving_period == 0 {
            return Err(TrainError::Config("lr_halving_period must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.t_in == 0 || self.t_out == 0 {
            return Err(TrainError::Config("t_in and t_out must be >= 1".into()));
        }
        if !(self.lr0 > 0.0) || !self.lr0.is_finite() {
            return Err(TrainError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        Ok(())
    }
}

/// Step-decayed learning rate: lr0 * 0.5^floor(epoch / period).
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.lr0 * 0.5f64.powi((epoch / cfg.lr_halving_period) as i32)
}

/// Ground-truth ratio for an epoch of this run. Curriculum maps the 0-based
/// epoch index over `epochs - 1` so the first epoch trains at e = 1 (pure
/// teacher forcing) and the last at (near) zero; the frozen schemes pin e to
/// their fixed point and a single-epoch curriculum run stays at e = 1.
pub fn epoch_mix_ratio(cfg: &TrainConfig, epoch: usize) -> Result<f64, RolloutError> {
    match cfg.scheme {
        Scheme::FreeRollout => Ok(0.0),
        Scheme::TeacherForcing => Ok(1.0),
        Scheme::Curriculum => e_schedule(epoch, cfg.epochs.saturating_sub(1), cfg.decay),
    }
}

/// Mean over steps of per-frame MSE, built on the tape so it backpropagates:
/// L = (1/K) sum_k mean((pred_k - target_k)^2).
pub fn sequence_mse<T: Scalar>(
    tape: &mut Tape<T>,
    preds: &[NodeId],
    targets: &[Tensor<T>],
) -> Result<NodeId, TrainError> {
    if preds.len() != targets.len() {
        return Err(TrainError::LengthMismatch {
            preds: preds.len(),
            targets: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(TrainError::EmptySequence);
    }
    let mut acc: Option<NodeId> = None;
    for (p, t) in preds.iter().zip(targets) {
        let c = tape.constant(t.clone());
        let d = tape.sub(*p, c)?;
        let sq = tape.mul(d, d)?;
        let m = tape.mean(sq)?;
        acc = Some(match acc {
            None => m,
            Some(a) => tape.add(a, m)?,
        });
    }
    let inv = T::from_f64(1.0 / preds.len() as f64).unwrap();
    Ok(tape.scalar_mul(acc.unwrap(), inv)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub e: f64,
    pub lr: f64,
    pub train_loss: f64,
    pub val_rel_l2: f64,
}

/// Log rows as CSV: epoch, e, lr, train_loss, val_rel_l2.
pub fn write_log_csv(path: &std::path::Path, log: &[EpochRecord]) -> std::io::Result<()> {
    let mut out = String::from("epoch,e,lr,train_loss,val_rel_l2\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.e, r.lr, r.train_loss, r.val_rel_l2
        ));
    }
    std::fs::write(path, out)
}

#[derive(Clone, Debug)]
pub struct BestState<T: Scalar> {
    pub epoch: usize,
    pub val_rel_l2: f64,
    pub store: crate::numerics::ParameterStore<T>,
    pub adam: AdamState<T>,
}

pub struct TrainRun<T: Scalar> {
    pub log: Vec<EpochRecord>,
    /// Completed epochs (== config epochs unless the run diverged).
    pub epochs_done: usize,
    pub adam: AdamState<T>,
    /// Lowest-validation state seen during *this* call, if any epoch improved
    /// on the resume point.
    pub best: Option<BestState<T>>,
    /// Set when a non-finite loss or gradient cut the run short; the model is
    /// rolled back to the last completed epoch.
    pub diverged: Option<String>,
}

/// Train in place. The gradient of each batch is the average of per-sample
/// sequence-MSE gradients; per-sample work runs in parallel but accumulation
/// is in sample order, so results are identical at any thread count.
pub fn train<T: Scalar>(
    model: &mut StepModel<T>,
    train_set: &[Trajectory<T>],
    val_set: &[Trajectory<T>],
    cfg: &TrainConfig,
    resume: Option<Checkpoint<T>>,
    verbose: bool,
) -> Result<TrainRun<T>, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let needed = cfg.t_in + cfg.t_out;
    for traj in train_set.iter().chain(val_set) {
        if traj.frames.len() < needed {
            return Err(TrainError::Rollout(RolloutError::InsufficientFrames {
                required: needed,
                available: traj.frames.len(),
            }));
        }
    }
    if model.config.history_len != cfg.t_in {
        return Err(TrainError::Config(format!(
            "model history_len {} must equal t_in {}",
            model.config.history_len, cfg.t_in
        )));
    }

    let hyper = AdamHyper::default();
    let mut adam = AdamState::new(&model.params);
    let mut start_epoch = 0usize;
    let mut best: Option<BestState<T>> = None;
    let mut resume_best: Option<(usize, f64)> = None;
    if let Some(ck) = resume {
        if ck.train != *cfg {
            return Err(TrainError::ResumeMismatch);
        }
        model.params = ck.store;
        adam = ck.adam;
        start_epoch = ck.epoch;
        if let (Some(be), Some(bv)) = (ck.best_epoch, ck.best_val) {
            resume_best = Some((be, bv));
        }
    }

    let mut log = Vec::new();
    let mut diverged = None;
    let mut epochs_done = start_epoch;

    'epochs: for epoch in start_epoch..cfg.epochs {
        let t0 = std::time::Instant::now();
        let e = epoch_mix_ratio(cfg, epoch)?;
        let lr = lr_at(cfg, epoch);
        let last_good = (model.params.clone(), adam.clone());

        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut seeds::rng(&[cfg.seed, seeds::DOM_SHUF, epoch as u64]));

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, FlatGrads<T>), TrainError>> = batch
                .par_iter()
                .map(|&idx| {
                    let traj = &train_set[idx];
                    let mut tape = Tape::new();
                    let binding = model.params.bind(&mut tape);
                    let mut state = ScheduleState::new(
                        cfg.scheme,
                        e,
                        seeds::mix(&[cfg.seed, epoch as u64, traj.sample_id]),
                    )?;
                    let out = rollout(
                        &mut tape,
                        |tape, _k, win| model.forward(tape, &binding, win),
                        &traj.frames,
                        cfg.t_in,
                        cfg.t_out,
                        &mut state,
                        &RolloutOptions::default(),
                    )?;
                    let targets = &traj.frames[cfg.t_in..cfg.t_in + cfg.t_out];
                    let loss = sequence_mse(&mut tape, &out.predictions, targets)?;
                    let loss_val = tape.real(loss).data()[0].to_f64().unwrap();
                    if !loss_val.is_finite() {
                        return Err(TrainError::NonFiniteLoss {
                            sample_id: traj.sample_id,
                        });
                    }
                    tape.backward(loss)?;
                    let grads = collect_grads(&tape, &binding, &model.params)?;
                    Ok((loss_val, grads))
                })
                .collect();

            let mut batch_grads = FlatGrads::zeros_like(&model.params);
            let scale = T::from_f64(1.0 / batch.len() as f64).unwrap();
            let mut failed: Option<TrainError> = None;
            for r in results {
                match r {
                    Ok((lv, g)) => {
                        loss_sum += lv;
                        batch_grads.add_scaled(&g, scale);
                    }
                    Err(e) => {
                        failed = Some(e);
                        break;
                    }
                }
            }
            if let Some(err) = failed {
                match err {
                    TrainError::NonFiniteLoss { .. } | TrainError::NonFiniteGrad { .. } => {
                        model.params = last_good.0;
                        adam = last_good.1;
                        diverged = Some(format!("epoch {epoch}: {err}"));
                        break 'epochs;
                    }
                    other => return Err(other),
                }
            }

            if let Some(clip) = cfg.grad_clip {
                let norm = batch_grads.l2_norm();
                if norm > clip {
                    batch_grads.scale(T::from_f64(clip / norm).unwrap());
                }
            }
            adam_step(&mut model.params, &batch_grads, &mut adam, lr, &hyper);
        }

        let train_loss = loss_sum / train_set.len() as f64;
        let val_rel_l2 = if val_set.is_empty() {
            f64::NAN
        } else {
            evaluate_model(model, val_set, cfg.t_in, cfg.t_out)?.mean_rel_l2
        };
        if !train_loss.is_finite() || (!val_set.is_empty() && !val_rel_l2.is_finite()) {
            model.params = last_good.0;
            adam = last_good.1;
            diverged = Some(format!(
                "epoch {epoch}: non-finite epoch metrics (train {train_loss}, val {val_rel_l2})"
            ));
            break 'epochs;
        }

        log.push(EpochRecord {
            epoch,
            e,
            lr,
            train_loss,
            val_rel_l2,
        });
        epochs_done = epoch + 1;

        let prior_best = best
            .as_ref()
            .map(|b| b.val_rel_l2)
            .or(resume_best.map(|(_, v)| v))
            .unwrap_or(f64::INFINITY);
        if val_rel_l2.is_finite() && val_rel_l2 < prior_best {
            best = Some(BestState {
                epoch,
                val_rel_l2,
                store: model.params.clone(),
                adam: adam.clone(),
            });
        }

        if verbose {
            eprintln!(
                "epoch {epoch:4}  e={e:.3}  lr={lr:.3e}  train={train_loss:.4e}  val={val_rel_l2:.4}  ({:.1}s)",
                t0.elapsed().as_secs_f64()
            );
        }
    }

    Ok(TrainRun {
        log,
        epochs_done,
        adam,
        best,
        diverged,
    })
}
