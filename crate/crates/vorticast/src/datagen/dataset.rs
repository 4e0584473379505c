//! Trajectory files and dataset assembly.
//!
//! One sample = one binary file: magic `NSTJ1\0`, three little-endian u32
//! (n_frames, height, width), then n_frames * height * width little-endian
//! f32 values, time-major and row-major within each frame. Frame j holds the
//! state at t = (j+1) * record_interval; the GRF initial condition itself is
//! not recorded. A JSON sidecar carries the generating config, the resolved
//! split, and the base seed, which together are enough to regenerate every
//! file bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grf::sample_grf;
use super::solver::{SolverConfig, SolverError, VorticitySolver};
use crate::numerics::{Scalar, Tensor};
use crate::seeds;

pub const TRAJ_MAGIC: &[u8; 6] = b"NSTJ1\0";
pub const DATASET_META: &str = "dataset.json";

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("sample {id} failed even after one dt/2 retry: {source}")]
    SampleFailed { id: u64, source: SolverError },
    #[error("split: {0}")]
    Split(String),
    #[error("dataset meta: {0}")]
    Meta(String),
}

/// Either explicit per-split sample counts or fractions of the total.
/// Fractions floor the validation and test counts and give the remainder to
/// train, so e.g. 5 samples at (0.6, 0.2, 0.2) resolve to (3, 1, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Counts { train: usize, val: usize, test: usize },
    Fractions { train_frac: f64, val_frac: f64, test_frac: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSpec {
    pub fn resolve(&self, n_samples: usize) -> Result<SplitCounts, DatagenError> {
        let counts = match *self {
            SplitSpec::Counts { train, val, test } => SplitCounts { train, val, test },
            SplitSpec::Fractions { train_frac, val_frac, test_frac } => {
                let fracs = [train_frac, val_frac, test_frac];
                if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
                    return Err(DatagenError::Split(format!(
                        "fractions must lie in [0,1], got {fracs:?}"
                    )));
                }
                let sum = train_frac + val_frac + test_frac;
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(DatagenError::Split(format!(
                        "fractions must sum to 1, got {sum}"
                    )));
                }
                let val = (val_frac * n_samples as f64).floor() as usize;
                let test = (test_frac * n_samples as f64).floor() as usize;
                SplitCounts { train: n_samples - val - test, val, test }
            }
        };
        if counts.train + counts.val + counts.test != n_samples {
            return Err(DatagenError::Split(format!(
                "split {}+{}+{} does not cover {n_samples} samples",
                counts.train, counts.val, counts.test
            )));
        }
        if counts.train == 0 {
            return Err(DatagenError::Split("train split is empty".into()));
        }
        Ok(counts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub solver: SolverConfig,
    pub n_samples: usize,
    pub split: SplitCounts,
    pub base_seed: u64,
    /// Sample ids that only succeeded after the single dt/2 retry.
    pub retried: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub sample_id: u64,
    /// Each frame is (1, H, W) so it can drop straight into a window slot.
    pub frames: Vec<Tensor<T>>,
}

#[derive(Debug)]
pub struct Dataset<T> {
    pub meta: DatasetMeta,
    pub train: Vec<Trajectory<T>>,
    pub val: Vec<Trajectory<T>>,
    pub test: Vec<Trajectory<T>>,
}

pub fn sample_file_name(id: u64) -> String {
    format!("sample_{id:05}.nstj")
}

pub fn write_trajectory(path: &Path, h: usize, w: usize, frames: &[Vec<f32>]) -> Result<(), DatagenError> {
    let mut buf = Vec::with_capacity(6 + 12 + frames.len() * h * w * 4);
    buf.extend_from_slice(TRAJ_MAGIC);
    buf.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    for frame in frames {
        debug_assert_eq!(frame.len(), h * w);
        for &v in frame {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<(usize, usize, usize, Vec<f32>), DatagenError> {
    let fmt = |msg: String| DatagenError::Format {
        path: path.display().to_string(),
        msg,
    };
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 18 || &bytes[..6] != TRAJ_MAGIC {
        return Err(fmt("missing NSTJ1 magic".into()));
    }
    let rd = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (n_frames, h, w) = (rd(6), rd(10), rd(14));
    let expected = 18 + n_frames * h * w * 4;
    if bytes.len() != expected {
        return Err(fmt(format!(
            "file holds {} bytes but header implies {expected}",
            bytes.len()
        )));
    }
    let data = bytes[18..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((n_frames, h, w, data))
}

/// Integrate one sample to completion, retrying once with halved dt if the
/// solver blows up. Returns the recorded frames and whether a retry was used.
fn integrate_sample(cfg: &SolverConfig, seed: u64) -> Result<(Vec<Vec<f32>>, bool), SolverError> {
    let run = |cfg: &SolverConfig| -> Result<Vec<Vec<f32>>, SolverError> {
        let ic = sample_grf::<f64>(cfg.grid_size, seed, cfg.spectral_exponent, cfg.length_scale);
        let mut solver = VorticitySolver::new(cfg, &ic)?;
        let spf = cfg.steps_per_frame();
        let mut frames = Vec::with_capacity(cfg.n_frames);
        for _ in 0..cfg.n_frames {
            solver.advance(spf)?;
            frames.push(solver.state().data().iter().map(|&v| v as f32).collect());
        }
        Ok(frames)
    };
    match run(cfg) {
        Ok(frames) => Ok((frames, false)),
        Err(SolverError::NonFinite { .. }) => {
            let mut halved = cfg.clone();
            halved.dt *= 0.5;
            run(&halved).map(|frames| (frames, true))
        }
        Err(e) => Err(e),
    }
}

/// Generate all samples into `dir`. Sample id i draws its initial condition
/// from seed mix(base_seed, DOM_DATA, i), so samples are independent of each
/// other and of execution order; rerunning with the same meta rewrites every
/// file identically. Splits are contiguous in id order: train ids first, then
/// val, then test.
pub fn generate_dataset(
    cfg: &SolverConfig,
    n_samples: usize,
    split: &SplitSpec,
    base_seed: u64,
    dir: &Path,
) -> Result<DatasetMeta, DatagenError> {
    cfg.validate()?;
    let counts = split.resolve(n_samples)?;
    fs::create_dir_all(dir)?;

    let results: Vec<Result<(u64, bool), DatagenError>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|id| {
            let seed = seeds::mix(&[base_seed, seeds::DOM_DATA, id]);
            let (frames, retried) = integrate_sample(cfg, seed)
                .map_err(|e| DatagenError::SampleFailed { id, source: e })?;
            write_trajectory(
                &dir.join(sample_file_name(id)),
                cfg.grid_size,
                cfg.grid_size,
                &frames,
            )?;
            Ok((id, retried))
        })
        .collect();

    let mut retried = Vec::new();
    for r in results {
        let (id, was_retried) = r?;
        if was_retried {
            retried.push(id);
        }
    }
    retried.sort_unstable();

    let meta = DatasetMeta {
        version: 1,
        solver: cfg.clone(),
        n_samples,
        split: counts,
        base_seed,
        retried,
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(dir.join(DATASET_META), json)?;
    Ok(meta)
}

fn load_trajectory<T: Scalar>(dir: &Path, id: u64, expect_grid: usize, expect_frames: usize) -> Result<Trajectory<T>, DatagenError> {
    let path: PathBuf = dir.join(sample_file_name(id));
    let (n_frames, h, w, data) = read_trajectory(&path)?;
    if h != expect_grid || w != expect_grid || n_frames != expect_frames {
        return Err(DatagenError::Format {
            path: path.display().to_string(),
            msg: format!(
                "dimensions ({n_frames},{h},{w}) disagree with dataset meta ({expect_frames},{expect_grid},{expect_grid})"
            ),
        });
    }
    let frames = data
        .chunks_exact(h * w)
        .map(|fr| Tensor::from_vec(&[1, h, w], fr.iter().map(|&v| T::from_f32(v).unwrap()).collect()))
        .collect();
    Ok(Trajectory { sample_id: id, frames })
}

pub fn load_meta(dir: &Path) -> Result<DatasetMeta, DatagenError> {
    let raw = fs::read_to_string(dir.join(DATASET_META))?;
    let meta: DatasetMeta = serde_json::from_str(&raw).map_err(|e| DatagenError::Meta(e.to_string()))?;
    if meta.version != 1 {
        return Err(DatagenError::Meta(format!("unsupported version {}", meta.version)));
    }
    Ok(meta)
}

pub fn load_dataset<T: Scalar>(dir: &Path) -> Result<Dataset<T>, DatagenError> {
    let meta = load_meta(dir)?;
    let load_range = |lo: usize, hi: usize| -> Result<Vec<Trajectory<T>>, DatagenError> {
        (lo..hi)
            .into_par_iter()
            .map(|id| load_trajectory::<T>(dir, id as u64, meta.solver.grid_size, meta.solver.n_frames))
            .collect()
    };
    let (tr, va) = (meta.split.train, meta.split.val);
    Ok(Dataset {
        train: load_range(0, tr)?,
        val: load_range(tr, tr + va)?,
        test: load_range(tr + va, meta.n_samples)?,
        meta,
    })
}
