pub mod conv;
pub mod fft;
pub mod gradcheck;
pub mod params;
pub mod scalar;
pub mod tape;
pub mod tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}

pub use fft::{fft2, ifft2};
pub use gradcheck::{grad_check, grad_check_params};
pub use params::{ParamBinding, ParamValue, ParameterStore};
pub use scalar::{lit, Scalar};
pub use tape::{NodeId, Tape, Value};
pub use tensor::{batch_hw, ComplexTensor, Tensor};
