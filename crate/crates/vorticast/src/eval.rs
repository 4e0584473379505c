//! Inference-condition evaluation: free rollout from the initial window, then
//! relative L2 error against the recorded frames, per sample and per step.
//! Norm accumulation always happens in f64 regardless of model precision.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::datagen::Trajectory;
use crate::models::{ModelError, StepModel};
use crate::numerics::{Scalar, Tape, Tensor};
use crate::rollout::{rollout, RolloutError, RolloutOptions, ScheduleState, Scheme};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("relative_l2: sequence lengths differ ({preds} vs {targets})")]
    LengthMismatch { preds: usize, targets: usize },
    #[error("relative_l2: empty sequence")]
    Empty,
    #[error("relative_l2: shape mismatch at step {step}: {pred:?} vs {target:?}")]
    ShapeMismatch {
        step: usize,
        pred: Vec<usize>,
        target: Vec<usize>,
    },
    #[error("evaluation horizon {horizon} exceeds recorded frames ({available} after the {t_in}-frame window)")]
    HorizonTooLong {
        horizon: usize,
        t_in: usize,
        available: usize,
    },
    #[error("snapshot step {step} outside predicted range [{lo}, {hi})")]
    SnapshotOutOfRange { step: usize, lo: usize, hi: usize },
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// || pred - target ||_2 / || target ||_2 over a whole sequence jointly.
/// Returns None when the target norm is zero (the caller excludes the sample
/// rather than dividing by zero).
pub fn relative_l2_seq<T: Scalar>(
    preds: &[Tensor<T>],
    targets: &[Tensor<T>],
) -> Result<Option<f64>, EvalError> {
    if preds.len() != targets.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            targets: targets.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (step, (p, t)) in preds.iter().zip(targets).enumerate() {
        if p.shape() != t.shape() {
            return Err(EvalError::ShapeMismatch {
                step,
                pred: p.shape().to_vec(),
                target: t.shape().to_vec(),
            });
        }
        for (&pv, &tv) in p.data().iter().zip(t.data()) {
            let (pf, tf) = (pv.to_f64().unwrap(), tv.to_f64().unwrap());
            num += (pf - tf) * (pf - tf);
            den += tf * tf;
        }
    }
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some((num / den).sqrt()))
}

pub fn relative_l2<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Option<f64>, EvalError> {
    relative_l2_seq(std::slice::from_ref(pred), std::slice::from_ref(target))
}

/// Free-rollout predictions for one trajectory: `horizon` frames starting at
/// absolute frame index `t_in`. Ground truth beyond the initial window is
/// never fed back.
pub fn predict_free<T: Scalar>(
    model: &StepModel<T>,
    traj: &Trajectory<T>,
    t_in: usize,
    horizon: usize,
) -> Result<Vec<Tensor<T>>, EvalError> {
    let mut tape = Tape::new();
    let binding = model.params.bind(&mut tape);
    let mut state = ScheduleState::new(Scheme::FreeRollout, 0.0, 0)?;
    let out = rollout(
        &mut tape,
        |tape, _k, win| model.forward(tape, &binding, win),
        &traj.frames,
        t_in,
        horizon,
        &mut state,
        &RolloutOptions::default(),
    )?;
    Ok(out.predictions.iter().map(|&id| tape.real(id).clone()).collect())
}

#[derive(Clone, Debug)]
pub struct SampleEval {
    pub sample_id: u64,
    /// Whole-sequence relative L2; None when the target sequence has zero norm.
    pub rel_l2: Option<f64>,
    /// Per-step relative L2, indexed by generated step (absolute frame t_in+k).
    pub per_step: Vec<Option<f64>>,
}

#[derive(Clone, Debug)]
pub struct EvalSummary {
    pub t_in: usize,
    pub horizon: usize,
    pub per_sample: Vec<SampleEval>,
    /// Mean over included samples of the whole-sequence relative L2.
    pub mean_rel_l2: f64,
    pub n_excluded: usize,
    /// Mean over included samples, per generated step.
    pub curve: Vec<f64>,
}

/// Evaluate a model over a split under inference conditions.
pub fn evaluate_model<T: Scalar>(
    model: &StepModel<T>,
    trajs: &[Trajectory<T>],
    t_in: usize,
    horizon: usize,
) -> Result<EvalSummary, EvalError> {
    let mut per_sample = Vec::with_capacity(trajs.len());
    for traj in trajs {
        if traj.frames.len() < t_in + horizon {
            return Err(EvalError::HorizonTooLong {
                horizon,
                t_in,
                available: traj.frames.len().saturating_sub(t_in),
            });
        }
        let preds = predict_free(model, traj, t_in, horizon)?;
        let targets = &traj.frames[t_in..t_in + horizon];
        let rel = relative_l2_seq(&preds, targets)?;
        let per_step = preds
            .iter()
            .zip(targets)
            .map(|(p, t)| relative_l2(p, t))
            .collect::<Result<Vec<_>, _>>()?;
        per_sample.push(SampleEval {
            sample_id: traj.sample_id,
            rel_l2: rel,
            per_step,
        });
    }

    let included: Vec<f64> = per_sample.iter().filter_map(|s| s.rel_l2).collect();
    let n_excluded = per_sample.len() - included.len();
    let mean_rel_l2 = if included.is_empty() {
        f64::NAN
    } else {
        included.iter().sum::<f64>() / included.len() as f64
    };
    let curve = (0..horizon)
        .map(|k| {
            let vals: Vec<f64> = per_sample.iter().filter_map(|s| s.per_step[k]).collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        })
        .collect();

    Ok(EvalSummary {
        t_in,
        horizon,
        per_sample,
        mean_rel_l2,
        n_excluded,
        curve,
    })
}

impl EvalSummary {
    /// Mean per-step error split at the training horizon boundary:
    /// steps predicting frames below `t_train_end` (interpolation, inside the
    /// horizon trained on) versus at or beyond it (extrapolation).
    pub fn region_means(&self, t_train_end: usize) -> (f64, f64) {
        let mean_of = |range: std::ops::Range<usize>| {
            let vals: Vec<f64> = range
                .map(|k| self.curve[k])
                .filter(|v| v.is_finite())
                .collect();
            if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        let boundary = t_train_end.saturating_sub(self.t_in).min(self.horizon);
        let interp = mean_of(0..boundary);
        let extrap = mean_of(boundary..self.horizon);
        (interp, extrap)
    }

    /// Rows: step (absolute frame index), mean_error, region. A step is
    /// "interp" when its frame index is below `t_train_end`.
    pub fn write_curve_csv(&self, path: &Path, t_train_end: usize) -> Result<(), EvalError> {
        let mut out = String::from("step,mean_error,region\n");
        for (k, v) in self.curve.iter().enumerate() {
            let step = self.t_in + k;
            let region = if step < t_train_end { "interp" } else { "extrap" };
            out.push_str(&format!("{step},{v},{region}\n"));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Rows: sample_id, rel_l2 (empty when excluded for zero target norm).
    pub fn write_report_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = String::from("sample_id,rel_l2\n");
        for s in &self.per_sample {
            match s.rel_l2 {
                Some(v) => out.push_str(&format!("{},{v}\n", s.sample_id)),
                None => out.push_str(&format!("{},\n", s.sample_id)),
            }
        }
        fs::write(path, out)?;
        Ok(())
    }
}

// ---- snapshot export ----

pub fn write_pgm(path: &Path, w: usize, h: usize, pixels: &[u8]) -> std::io::Result<()> {
    debug_assert_eq!(pixels.len(), w * h);
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{w} {h}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

pub fn write_f32_raw(path: &Path, values: &[f32]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for &v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)
}

pub fn read_f32_raw(path: &Path) -> std::io::Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Map a field to 8-bit gray over a given [lo, hi] range (flat 128 when the
/// range collapses).
fn to_gray(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    let span = hi - lo;
    values
        .iter()
        .map(|&v| {
            if span <= 0.0 {
                128
            } else {
                (255.0 * ((v - lo) / span).clamp(0.0, 1.0)).round() as u8
            }
        })
        .collect()
}

/// For each requested absolute frame index, write target / prediction /
/// signed-difference images plus raw little-endian f32 dumps of the same
/// three grids. Target and prediction share the target frame's gray scale so
/// the pair is comparable; the difference uses a symmetric scale where zero
/// error is exactly mid-gray (128).
pub fn export_snapshots<T: Scalar>(
    model: &StepModel<T>,
    traj: &Trajectory<T>,
    t_in: usize,
    steps: &[usize],
    dir: &Path,
) -> Result<(), EvalError> {
    if steps.is_empty() {
        return Ok(());
    }
    let max_step = *steps.iter().max().unwrap();
    let hi = traj.frames.len();
    for &s in steps {
        if s < t_in || s >= hi {
            return Err(EvalError::SnapshotOutOfRange { step: s, lo: t_in, hi });
        }
    }
    fs::create_dir_all(dir)?;
    let horizon = max_step - t_in + 1;
    let preds = predict_free(model, traj, t_in, horizon)?;
    let (h, w) = (traj.frames[0].shape()[1], traj.frames[0].shape()[2]);

    for &s in steps {
        let pred = &preds[s - t_in];
        let target = &traj.frames[s];
        let pf: Vec<f64> = pred.data().iter().map(|&v| v.to_f64().unwrap()).collect();
        let tf: Vec<f64> = target.data().iter().map(|&v| v.to_f64().unwrap()).collect();
        let df: Vec<f64> = pf.iter().zip(&tf).map(|(&p, &t)| p - t).collect();

        let (tlo, thi) = tf
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let dmax = df.iter().fold(0.0f64, |m, &v| m.max(v.abs()));

        write_pgm(&dir.join(format!("target_{s:03}.pgm")), w, h, &to_gray(&tf, tlo, thi))?;
        write_pgm(&dir.join(format!("pred_{s:03}.pgm")), w, h, &to_gray(&pf, tlo, thi))?;
        write_pgm(&dir.join(format!("diff_{s:03}.pgm")), w, h, &to_gray(&df, -dmax, dmax))?;

        let as_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        write_f32_raw(&dir.join(format!("target_{s:03}.f32")), &as_f32(&tf))?;
        write_f32_raw(&dir.join(format!("pred_{s:03}.f32")), &as_f32(&pf))?;
        write_f32_raw(&dir.join(format!("diff_{s:03}.f32")), &as_f32(&df))?;
    }
    Ok(())
}
