//! Adam with bias correction. Parameters are treated as flat real vectors;
//! complex entries contribute their real and imaginary parts as independent
//! coordinates (matching the conjugate-cotangent gradients the tape emits).

use crate::numerics::{ParamBinding, ParamValue, ParameterStore, Scalar, Tape};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers, one flat vector per store entry, laid out
/// like the entry's real-scalar view.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParameterStore<T>) -> Self {
        let sizes: Vec<usize> = store.iter().map(|(_, v)| v.n_scalars()).collect();
        AdamState {
            step: 0,
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> AdamState<U> {
        let conv = |src: &Vec<Vec<T>>| {
            src.iter()
                .map(|v| v.iter().map(|&x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect())
                .collect()
        };
        AdamState {
            step: self.step,
            m: conv(&self.m),
            v: conv(&self.v),
        }
    }
}

/// Per-entry gradient vectors in the same real-scalar layout as `AdamState`.
#[derive(Clone, Debug)]
pub struct FlatGrads<T> {
    pub per_entry: Vec<Vec<T>>,
}

impl<T: Scalar> FlatGrads<T> {
    pub fn zeros_like(store: &ParameterStore<T>) -> Self {
        FlatGrads {
            per_entry: store.iter().map(|(_, v)| vec![T::zero(); v.n_scalars()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &FlatGrads<T>, scale: T) {
        for (dst, src) in self.per_entry.iter_mut().zip(&other.per_entry) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s * scale;
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for entry in &self.per_entry {
            for &g in entry {
                let gf = g.to_f64().unwrap();
                acc += gf * gf;
            }
        }
        acc.sqrt()
    }

    pub fn scale(&mut self, factor: T) {
        for entry in self.per_entry.iter_mut() {
            for g in entry.iter_mut() {
                *g = *g * factor;
            }
        }
    }
}

/// Read every bound parameter's gradient off the tape after `backward`.
/// Entries the loss never touched get zeros. Any non-finite component aborts
/// with the offending parameter's name.
pub fn collect_grads<T: Scalar>(
    tape: &Tape<T>,
    binding: &ParamBinding,
    store: &ParameterStore<T>,
) -> Result<FlatGrads<T>, TrainError> {
    let mut per_entry = Vec::with_capacity(store.len());
    for i in 0..store.len() {
        let (name, value) = store.entry(i);
        let id = binding.id(i);
        let flat: Vec<T> = if let Some(g) = tape.grad_real(id) {
            g.to_vec()
        } else if let Some(g) = tape.grad_complex(id) {
            let mut v = Vec::with_capacity(2 * g.len());
            for z in g {
                v.push(z.re);
                v.push(z.im);
            }
            v
        } else {
            vec![T::zero(); value.n_scalars()]
        };
        if flat.iter().any(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGrad { name: name.to_string() });
        }
        per_entry.push(flat);
    }
    Ok(FlatGrads { per_entry })
}

/// One Adam update in place. Bias corrections are computed in f64 and the
/// elementwise update in the working precision.
pub fn adam_step<T: Scalar>(
    store: &mut ParameterStore<T>,
    grads: &FlatGrads<T>,
    state: &mut AdamState<T>,
    lr: f64,
    hyper: &AdamHyper,
) {
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64(hyper.beta1).unwrap();
    let b2 = T::from_f64(hyper.beta2).unwrap();
    let one = T::one();
    let bc1 = T::from_f64(1.0 - hyper.beta1.powi(t)).unwrap();
    let bc2 = T::from_f64(1.0 - hyper.beta2.powi(t)).unwrap();
    let lr_t = T::from_f64(lr).unwrap();
    let eps = T::from_f64(hyper.eps).unwrap();

    for i in 0..grads.per_entry.len() {
        let gs = &grads.per_entry[i];
        let ms = &mut state.m[i];
        let vs = &mut state.v[i];
        let mut updates = Vec::with_capacity(gs.len());
        for j in 0..gs.len() {
            let g = gs[j];
            ms[j] = b1 * ms[j] + (one - b1) * g;
            vs[j] = b2 * vs[j] + (one - b2) * g * g;
            let mhat = ms[j] / bc1;
            let vhat = vs[j] / bc2;
            updates.push(lr_t * mhat / (vhat.sqrt() + eps));
        }
        match store.entry_mut(i) {
            ParamValue::Real(tsr) => {
                for (p, u) in tsr.data_mut().iter_mut().zip(&updates) {
                    *p = *p - *u;
                }
            }
            ParamValue::Complex(tsr) => {
                for (p, u) in tsr.data_mut().iter_mut().zip(updates.chunks_exact(2)) {
                    *p = Complex::new(p.re - u[0], p.im - u[1]);
                }
            }
        }
    }
}
