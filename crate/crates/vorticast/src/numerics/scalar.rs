use std::fmt;

use num_traits::{Float, FromPrimitive, NumAssignOps, Signed, ToPrimitive};

/// Element type for all grid computation: `f32` or `f64`.
///
/// The bounds are exactly what the kernels need — `Float` for arithmetic and
/// transcendentals, the conversion traits for literals and serialization, and
/// `Signed + Send + Sync + Debug + 'static` so values can flow straight into
/// rustfft's planner.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Signed
    + NumAssignOps
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    const NAME: &'static str;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
}

/// Pull an `f64` literal into the working precision.
#[inline(always)]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in target precision")
}
