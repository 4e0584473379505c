//! Autoregressive rollout with a per-step choice of what enters the history
//! window: the model's own prediction or the recorded ground-truth frame.
//!
//! The three schemes differ only in that choice. Free rollout always keeps
//! the prediction (matching inference), teacher forcing always substitutes
//! ground truth, and curriculum mode draws a Bernoulli(e) per generated step
//! where e is the ground-truth probability. Because the draw is `u < e` with
//! `u` uniform in [0,1), e = 1 reproduces teacher forcing and e = 0 free
//! rollout bit for bit.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

use crate::models::ModelError;
use crate::numerics::{NodeId, Scalar, Tape, Tensor};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FreeRollout,
    TeacherForcing,
    Curriculum,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::FreeRollout => "free_rollout",
            Scheme::TeacherForcing => "teacher_forcing",
            Scheme::Curriculum => "curriculum",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotChoice {
    GroundTruth,
    Prediction,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayVariant {
    Linear,
    Exponential,
    InverseSigmoid,
}

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("mix ratio e = {0} must be finite and in [0, 1]")]
    InvalidMixRatio(f64),
    #[error("schedule epoch {epoch} is beyond total {total}")]
    EpochOutOfRange { epoch: usize, total: usize },
    #[error("rollout needs {required} recorded frames but the trajectory has {available}")]
    InsufficientFrames { required: usize, available: usize },
    #[error("rollout needs t_in >= 1 and t_out >= 1")]
    EmptyHorizon,
    #[error("frame {index} has shape {got:?}, expected {expected:?}")]
    FrameShape {
        index: usize,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Ground-truth usage ratio for a given epoch of a training run.
///
/// All variants start at or above 0.9 and decay monotonically to (near) zero
/// at `epoch == total`:
///   linear:          1 - epoch/total
///   exponential:     0.01^(epoch/total)
///   inverse_sigmoid: k / (k + exp(epoch/k)), k = max(total/10, 9)
///
/// The k floor keeps the starting ratio k/(k+1) at or above 0.9 for short
/// runs, where total/10 alone would start the schedule nearly mixed.
/// `total == 0` (a single-epoch run) returns 1.0.
pub fn e_schedule(epoch: usize, total: usize, variant: DecayVariant) -> Result<f64, RolloutError> {
    if epoch > total {
        return Err(RolloutError::EpochOutOfRange { epoch, total });
    }
    if total == 0 {
        return Ok(1.0);
    }
    let frac = epoch as f64 / total as f64;
    Ok(match variant {
        DecayVariant::Linear => 1.0 - frac,
        DecayVariant::Exponential => 0.01f64.powf(frac),
        DecayVariant::InverseSigmoid => {
            let k = (total as f64 / 10.0).max(9.0);
            k / (k + (epoch as f64 / k).exp())
        }
    })
}

/// Per-rollout sampling state: the scheme, the current ground-truth ratio,
/// and the coin-flip stream (only consumed by the curriculum scheme).
pub struct ScheduleState {
    scheme: Scheme,
    e: f64,
    rng: ChaCha8Rng,
}

impl ScheduleState {
    pub fn new(scheme: Scheme, e: f64, seed: u64) -> Result<Self, RolloutError> {
        if !e.is_finite() || !(0.0..=1.0).contains(&e) {
            return Err(RolloutError::InvalidMixRatio(e));
        }
        Ok(ScheduleState {
            scheme,
            e,
            rng: seeds::rng(&[seed, seeds::DOM_SCHED]),
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    /// Decide what fills the next window slot.
    pub fn step_choice(&mut self) -> SlotChoice {
        match self.scheme {
            Scheme::FreeRollout => SlotChoice::Prediction,
            Scheme::TeacherForcing => SlotChoice::GroundTruth,
            Scheme::Curriculum => {
                let u: f64 = self.rng.random();
                if u < self.e {
                    SlotChoice::GroundTruth
                } else {
                    SlotChoice::Prediction
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RolloutOptions {
    /// Re-enter predictions as constants, cutting gradient flow through the
    /// window (the gradient still reaches each step's own output). Off by
    /// default: full backprop through time.
    pub detach_predictions: bool,
}

#[derive(Debug)]
pub struct RolloutOutput {
    /// predictions[k] is the node predicting absolute frame t_in + k.
    pub predictions: Vec<NodeId>,
    /// choices[k] is what was pushed into the window after predictions[k];
    /// logged for every generated step, including the last.
    pub choices: Vec<SlotChoice>,
}

/// Run `t_out` autoregressive steps from a window of the first `t_in`
/// recorded frames. `step` maps (tape, step index from 1, window node) to the
/// next-frame node; the window node stacks the history oldest-to-newest as
/// channels. Ground truth beyond t_in is only required (and only touched)
/// when the scheme can substitute it.
pub fn rollout<T, F>(
    tape: &mut Tape<T>,
    mut step: F,
    frames: &[Tensor<T>],
    t_in: usize,
    t_out: usize,
    state: &mut ScheduleState,
    opts: &RolloutOptions,
) -> Result<RolloutOutput, RolloutError>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, usize, NodeId) -> Result<NodeId, ModelError>,
{
    if t_in == 0 || t_out == 0 {
        return Err(RolloutError::EmptyHorizon);
    }
    let required = match state.scheme {
        Scheme::FreeRollout => t_in,
        Scheme::TeacherForcing | Scheme::Curriculum => t_in + t_out,
    };
    if frames.len() < required {
        return Err(RolloutError::InsufficientFrames {
            required,
            available: frames.len(),
        });
    }
    let expected = frames[0].shape().to_vec();
    if expected.len() != 3 || expected[0] != 1 {
        return Err(RolloutError::FrameShape {
            index: 0,
            got: expected,
            expected: vec![1, 0, 0],
        });
    }
    for (i, f) in frames.iter().enumerate().take(required) {
        if f.shape() != expected.as_slice() {
            return Err(RolloutError::FrameShape {
                index: i,
                got: f.shape().to_vec(),
                expected,
            });
        }
    }

    let mut window: VecDeque<NodeId> = (0..t_in)
        .map(|i| tape.constant(frames[i].clone()))
        .collect();
    let mut predictions = Vec::with_capacity(t_out);
    let mut choices = Vec::with_capacity(t_out);

    for k in 1..=t_out {
        let ids: Vec<NodeId> = window.iter().copied().collect();
        let win = tape.concat_chan(&ids).map_err(ModelError::from)?;
        let pred = step(tape, k, win)?;
        predictions.push(pred);

        let choice = state.step_choice();
        choices.push(choice);
        let slot = match choice {
            SlotChoice::GroundTruth => tape.constant(frames[t_in + k - 1].clone()),
            SlotChoice::Prediction => {
                if opts.detach_predictions {
                    let v = tape.real(pred).clone();
                    tape.constant(v)
                } else {
                    pred
                }
            }
        };
        window.pop_front();
        window.push_back(slot);
    }
    Ok(RolloutOutput { predictions, choices })
}
