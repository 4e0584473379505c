use std::any::{Any, TypeId};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use super::scalar::Scalar;
use super::tensor::{batch_hw, ComplexTensor};

// One global plan cache keyed by (element type, length, direction). Plans are
// immutable and thread-safe, so sharing one Arc per key is enough; the cache
// only grows by the handful of grid sizes a run ever touches.
static PLANS: OnceLock<RwLock<HashMap<(TypeId, usize, bool), Box<dyn Any + Send + Sync>>>> =
    OnceLock::new();

fn plan<T: Scalar>(len: usize, forward: bool) -> Arc<dyn Fft<T>> {
    let cache = PLANS.get_or_init(|| RwLock::new(HashMap::new()));
    let key = (TypeId::of::<T>(), len, forward);
    if let Some(entry) = cache.read().unwrap().get(&key) {
        return entry
            .downcast_ref::<Arc<dyn Fft<T>>>()
            .expect("plan cache entry has the keyed type")
            .clone();
    }
    let mut planner = FftPlanner::<T>::new();
    let direction = if forward {
        FftDirection::Forward
    } else {
        FftDirection::Inverse
    };
    let fft = planner.plan_fft(len, direction);
    cache
        .write()
        .unwrap()
        .entry(key)
        .or_insert_with(|| Box::new(fft.clone()) as Box<dyn Any + Send + Sync>);
    fft
}

/// Transform the last two axes of `data` (shape `h` x `w` per batch slice),
/// without any normalization in either direction.
pub(crate) fn transform2_inplace<T: Scalar>(
    data: &mut [Complex<T>],
    h: usize,
    w: usize,
    forward: bool,
) {
    let row_plan = plan::<T>(w, forward);
    let col_plan = plan::<T>(h, forward);
    let scratch_len = row_plan
        .get_inplace_scratch_len()
        .max(col_plan.get_inplace_scratch_len());
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); scratch_len];
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];

    for slab in data.chunks_exact_mut(h * w) {
        for row in slab.chunks_exact_mut(w) {
            row_plan.process_with_scratch(row, &mut scratch);
        }
        for x in 0..w {
            for y in 0..h {
                col[y] = slab[y * w + x];
            }
            col_plan.process_with_scratch(&mut col, &mut scratch);
            for y in 0..h {
                slab[y * w + x] = col[y];
            }
        }
    }
}

/// Forward 2D DFT over the last two axes, unnormalized:
/// `X[ky,kx] = sum_{y,x} x[y,x] exp(-2*pi*i*(ky*y/H + kx*x/W))`.
pub fn fft2<T: Scalar>(x: &ComplexTensor<T>) -> ComplexTensor<T> {
    let (_, h, w) = batch_hw(x.shape());
    let mut out = x.clone();
    transform2_inplace(out.data_mut(), h, w, true);
    out
}

/// Inverse 2D DFT over the last two axes, normalized by `1/(H*W)` so that
/// `ifft2(fft2(x)) == x` up to roundoff.
pub fn ifft2<T: Scalar>(x: &ComplexTensor<T>) -> ComplexTensor<T> {
    let (_, h, w) = batch_hw(x.shape());
    let mut out = x.clone();
    transform2_inplace(out.data_mut(), h, w, false);
    let scale = T::one() / T::from_usize(h * w).unwrap();
    for v in out.data_mut() {
        *v = Complex::new(v.re * scale, v.im * scale);
    }
    out
}
