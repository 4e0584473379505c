//! Checkpoint container: `CKPT1\0` magic, a little-endian u32 header length,
//! a JSON header (config, progress, entry layout), then all numeric payload
//! as little-endian f64: parameter values, Adam first moments, Adam second
//! moments, each in store-entry order with complex elements interleaved as
//! (re, im). Writing f32 state through f64 is exact, so a save/load round
//! trip reproduces single-precision training state bit for bit.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::{TrainConfig, TrainError};
use crate::numerics::{ComplexTensor, ParamValue, ParameterStore, Scalar, Tensor};
use num_complex::Complex;

pub const CKPT_MAGIC: &[u8; 6] = b"CKPT1\0";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EntryDesc {
    name: String,
    kind: String, // "real" | "complex"
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    epoch: usize,
    adam_step: u64,
    best_epoch: Option<usize>,
    best_val: Option<f64>,
    train: TrainConfig,
    entries: Vec<EntryDesc>,
}

pub struct Checkpoint<T> {
    pub store: ParameterStore<T>,
    pub adam: AdamState<T>,
    pub train: TrainConfig,
    /// Completed epochs when this checkpoint was written.
    pub epoch: usize,
    pub best_epoch: Option<usize>,
    pub best_val: Option<f64>,
}

pub fn save_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<(), TrainError> {
    let entries: Vec<EntryDesc> = ckpt
        .store
        .iter()
        .map(|(name, value)| EntryDesc {
            name: name.to_string(),
            kind: match value {
                ParamValue::Real(_) => "real".to_string(),
                ParamValue::Complex(_) => "complex".to_string(),
            },
            shape: value.shape().to_vec(),
        })
        .collect();
    let header = Header {
        version: 1,
        epoch: ckpt.epoch,
        adam_step: ckpt.adam.step,
        best_epoch: ckpt.best_epoch,
        best_val: ckpt.best_val,
        train: ckpt.train.clone(),
        entries,
    };
    let header_json = serde_json::to_vec(&header).expect("header serializes");

    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);

    let mut push_f64 = |v: f64| buf.extend_from_slice(&v.to_le_bytes());
    for v in ckpt.store.to_f64_vec() {
        push_f64(v);
    }
    for seg in &ckpt.adam.m {
        for &v in seg {
            push_f64(v.to_f64().unwrap());
        }
    }
    for seg in &ckpt.adam.v {
        for &v in seg {
            push_f64(v.to_f64().unwrap());
        }
    }

    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, TrainError> {
    let bad = |msg: String| TrainError::Checkpoint {
        path: path.display().to_string(),
        msg,
    };
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 10 || &bytes[..6] != CKPT_MAGIC {
        return Err(bad("missing CKPT1 magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if bytes.len() < 10 + hlen {
        return Err(bad("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[10..10 + hlen])
        .map_err(|e| bad(format!("header: {e}")))?;
    if header.version != 1 {
        return Err(bad(format!("unsupported version {}", header.version)));
    }

    let n_scalars: usize = header
        .entries
        .iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            if e.kind == "complex" {
                2 * n
            } else {
                n
            }
        })
        .sum();
    let payload = &bytes[10 + hlen..];
    if payload.len() != 3 * n_scalars * 8 {
        return Err(bad(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            3 * n_scalars * 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut store = ParameterStore::<T>::new();
    let mut k = 0usize;
    let mut read_entry = |e: &EntryDesc, k: &mut usize| -> Result<(), TrainError> {
        let n: usize = e.shape.iter().product();
        match e.kind.as_str() {
            "real" => {
                let data: Vec<T> = values[*k..*k + n]
                    .iter()
                    .map(|&v| T::from_f64(v).unwrap())
                    .collect();
                *k += n;
                store.insert_real(&e.name, Tensor::from_vec(&e.shape, data));
                Ok(())
            }
            "complex" => {
                let data: Vec<Complex<T>> = values[*k..*k + 2 * n]
                    .chunks_exact(2)
                    .map(|p| Complex::new(T::from_f64(p[0]).unwrap(), T::from_f64(p[1]).unwrap()))
                    .collect();
                *k += 2 * n;
                store.insert_complex(&e.name, ComplexTensor::from_vec(&e.shape, data));
                Ok(())
            }
            other => Err(bad(format!("unknown entry kind {other:?}"))),
        }
    };
    for e in &header.entries {
        read_entry(e, &mut k)?;
    }

    let mut adam = AdamState::new(&store);
    adam.step = header.adam_step;
    for seg in adam.m.iter_mut() {
        for slot in seg.iter_mut() {
            *slot = T::from_f64(values[k]).unwrap();
            k += 1;
        }
    }
    for seg in adam.v.iter_mut() {
        for slot in seg.iter_mut() {
            *slot = T::from_f64(values[k]).unwrap();
            k += 1;
        }
    }

    Ok(Checkpoint {
        store,
        adam,
        train: header.train,
        epoch: header.epoch,
        best_epoch: header.best_epoch,
        best_val: header.best_val,
    })
}
