//! Run manifest: one TOML file pins everything a full experiment needs —
//! solver settings, dataset split, model presets, training hyperparameters,
//! evaluation horizon — plus a single master seed that all per-stage seeds
//! are derived from. Reruns from the same manifest are bitwise identical.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{SolverConfig, SplitSpec};
use crate::models::StepModelConfig;
use crate::rollout::{DecayVariant, Scheme};
use crate::seeds;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("manifest serialization: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("manifest: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Single,
    Double,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub n_samples: usize,
    pub split: SplitSpec,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub lr0: f64,
    pub lr_halving_period: usize,
    pub batch_size: usize,
    pub t_in: usize,
    pub t_out: usize,
    /// Sampling schemes to train, each as its own run per model.
    pub schemes: Vec<Scheme>,
    pub decay: DecayVariant,
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Rollout length scored at test time; steps past `training.t_out` probe
    /// extrapolation beyond the trained horizon.
    pub horizon: usize,
    /// Rollout steps (0-based) to render as PGM/raw snapshot pairs.
    #[serde(default)]
    pub snapshot_steps: Vec<usize>,
    /// How many test samples get snapshot exports.
    #[serde(default)]
    pub snapshot_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: u32,
    pub master_seed: u64,
    pub precision: Precision,
    pub dataset: DatasetSection,
    pub models: Vec<StepModelConfig>,
    pub training: TrainingSection,
    pub eval: EvalSection,
}

pub const MANIFEST_VERSION: u32 = 1;

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        let manifest: RunManifest = toml::from_str(&text).map_err(|source| ManifestError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let text = toml::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        let inv = |msg: String| Err(ManifestError::Invalid(msg));
        if self.version != MANIFEST_VERSION {
            return inv(format!(
                "unsupported version {} (expected {MANIFEST_VERSION})",
                self.version
            ));
        }
        self.dataset
            .solver
            .validate()
            .map_err(|e| ManifestError::Invalid(e.to_string()))?;
        let counts = self
            .dataset
            .split
            .resolve(self.dataset.n_samples)
            .map_err(|e| ManifestError::Invalid(e.to_string()))?;
        if counts.train == 0 {
            return inv("split leaves no training samples".into());
        }
        if self.models.is_empty() {
            return inv("at least one model is required".into());
        }
        let grid = self.dataset.solver.grid_size;
        for (i, m) in self.models.iter().enumerate() {
            m.validate()
                .and_then(|_| m.validate_grid(grid, grid))
                .map_err(|e| ManifestError::Invalid(format!("models[{i}]: {e}")))?;
            if m.history_len != self.training.t_in {
                return inv(format!(
                    "models[{i}]: history_len {} != training.t_in {}",
                    m.history_len, self.training.t_in
                ));
            }
        }
        // epochs = 0 is legal: it means "evaluate the untrained model".
        let t = &self.training;
        if t.batch_size == 0 || t.lr_halving_period == 0 {
            return inv("batch_size and lr_halving_period must be >= 1".into());
        }
        if !(t.lr0 > 0.0) {
            return inv(format!("lr0 must be positive, got {}", t.lr0));
        }
        if t.schemes.is_empty() {
            return inv("training.schemes must not be empty".into());
        }
        for (i, s) in t.schemes.iter().enumerate() {
            if t.schemes[..i].contains(s) {
                return inv(format!("duplicate scheme {s:?}"));
            }
        }
        let frames = self.dataset.solver.n_frames;
        if t.t_in + t.t_out > frames {
            return inv(format!(
                "t_in + t_out = {} exceeds the {frames} frames per trajectory",
                t.t_in + t.t_out
            ));
        }
        if self.eval.horizon == 0 {
            return inv("eval.horizon must be >= 1".into());
        }
        if t.t_in + self.eval.horizon > frames {
            return inv(format!(
                "t_in + eval.horizon = {} exceeds the {frames} frames per trajectory",
                t.t_in + self.eval.horizon
            ));
        }
        if let Some(bad) = self
            .eval
            .snapshot_steps
            .iter()
            .find(|&&s| s >= self.eval.horizon)
        {
            return inv(format!(
                "snapshot step {bad} is outside the eval horizon {}",
                self.eval.horizon
            ));
        }
        Ok(())
    }

    /// Weight-init seed for model `model_idx`. Deliberately independent of the
    /// scheme so every scheme of a given (seed, model) pair starts from the
    /// same weights and differences are attributable to sampling alone.
    pub fn init_seed(&self, model_idx: usize) -> u64 {
        seeds::mix(&[self.master_seed, model_idx as u64])
    }

    /// Seed for the training streams (shuffle order, schedule coins) of one
    /// (model, scheme) run.
    pub fn train_seed(&self, model_idx: usize, scheme: Scheme) -> u64 {
        seeds::mix(&[
            self.master_seed,
            seeds::DOM_TRAIN,
            model_idx as u64,
            scheme_tag(scheme),
        ])
    }

    pub fn train_config(&self, model_idx: usize, scheme: Scheme) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            lr0: t.lr0,
            lr_halving_period: t.lr_halving_period,
            batch_size: t.batch_size,
            t_in: t.t_in,
            t_out: t.t_out,
            scheme,
            decay: t.decay,
            seed: self.train_seed(model_idx, scheme),
            grad_clip: t.grad_clip,
        }
    }
}

fn scheme_tag(scheme: Scheme) -> u64 {
    match scheme {
        Scheme::TeacherForcing => 1,
        Scheme::Curriculum => 2,
        Scheme::FreeRollout => 3,
    }
}
