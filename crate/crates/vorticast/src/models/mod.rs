pub mod fno;
pub mod unet;

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    ComplexTensor, NodeId, NumericsError, ParamBinding, ParameterStore, Scalar, Tape, Tensor,
};
use crate::seeds;
use num_complex::Complex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Fno2d,
    Unet,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Fno2d => "fno2d",
            ModelKind::Unet => "unet",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FnoSpec {
    pub modes_x: usize,
    pub modes_y: usize,
    pub width: usize,
    pub n_layers: usize,
}

impl Default for FnoSpec {
    fn default() -> Self {
        FnoSpec {
            modes_x: 8,
            modes_y: 8,
            width: 16,
            n_layers: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnetSpec {
    pub depth: usize,
    pub base_channels: usize,
}

impl Default for UnetSpec {
    fn default() -> Self {
        UnetSpec {
            depth: 3,
            base_channels: 16,
        }
    }
}

/// One autoregressive step model: consumes the last `history_len` frames as
/// channels and emits the next frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepModelConfig {
    pub kind: ModelKind,
    pub history_len: usize,
    #[serde(default)]
    pub fno: FnoSpec,
    #[serde(default)]
    pub unet: UnetSpec,
}

impl StepModelConfig {
    pub fn fno2d(history_len: usize, fno: FnoSpec) -> Self {
        StepModelConfig {
            kind: ModelKind::Fno2d,
            history_len,
            fno,
            unet: UnetSpec::default(),
        }
    }

    pub fn unet(history_len: usize, unet: UnetSpec) -> Self {
        StepModelConfig {
            kind: ModelKind::Unet,
            history_len,
            fno: FnoSpec::default(),
            unet,
        }
    }

    /// Intrinsic sanity of the config, independent of any grid.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.history_len == 0 {
            return Err(ModelError::Config("history_len must be >= 1".into()));
        }
        match self.kind {
            ModelKind::Fno2d => {
                let f = &self.fno;
                if f.modes_x == 0 || f.modes_y == 0 || f.width == 0 || f.n_layers == 0 {
                    return Err(ModelError::Config(
                        "fno modes, width and n_layers must all be >= 1".into(),
                    ));
                }
            }
            ModelKind::Unet => {
                let u = &self.unet;
                if u.depth == 0 || u.base_channels == 0 {
                    return Err(ModelError::Config(
                        "unet depth and base_channels must be >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Can this model run on an H x W grid? FNO modes must stay at or below
    /// the Hermitian half-spectrum; the UNet needs divisibility through every
    /// downsampling stage.
    pub fn validate_grid(&self, h: usize, w: usize) -> Result<(), ModelError> {
        self.validate()?;
        match self.kind {
            ModelKind::Fno2d => {
                let f = &self.fno;
                if 2 * f.modes_x > h || 2 * f.modes_y > w {
                    return Err(ModelError::ModesOutOfRange {
                        modes_x: f.modes_x,
                        modes_y: f.modes_y,
                        h,
                        w,
                    });
                }
            }
            ModelKind::Unet => {
                let required = 1usize << self.unet.depth;
                if h % required != 0 || w % required != 0 {
                    return Err(ModelError::GridNotDivisible { h, w, required });
                }
                // The bottleneck still runs 3x3 convolutions; a coarsest grid
                // below 3x3 would wrap a kernel onto itself.
                if h / required < 3 || w / required < 3 {
                    return Err(ModelError::Config(format!(
                        "grid {h}x{w} shrinks to {}x{} at depth {}, too small for 3x3 convolutions",
                        h / required,
                        w / required,
                        self.unet.depth
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("fno modes ({modes_x},{modes_y}) exceed the half-spectrum of a {h}x{w} grid")]
    ModesOutOfRange {
        modes_x: usize,
        modes_y: usize,
        h: usize,
        w: usize,
    },
    #[error("grid {h}x{w} is not divisible by 2^depth = {required}")]
    GridNotDivisible { h: usize, w: usize, required: usize },
    #[error("window shape {got:?} does not match expected ({expect_c}, H, W)")]
    WindowShape { got: Vec<usize>, expect_c: usize },
    #[error("model config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub struct StepModel<T: Scalar> {
    pub config: StepModelConfig,
    pub params: ParameterStore<T>,
}

impl<T: Scalar> StepModel<T> {
    /// Build a model with freshly initialized parameters. The same
    /// (config, seed) pair always produces bit-identical parameters.
    pub fn init(config: StepModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = seeds::rng(&[seed, seeds::DOM_INIT]);
        let params = match config.kind {
            ModelKind::Fno2d => fno::init_params(&config, &mut rng),
            ModelKind::Unet => unet::init_params(&config, &mut rng),
        };
        Ok(StepModel { config, params })
    }

    pub fn from_parts(config: StepModelConfig, params: ParameterStore<T>) -> Self {
        StepModel { config, params }
    }

    /// Total trainable scalar count (complex entries count both parts).
    pub fn param_count(&self) -> usize {
        self.params.n_scalars()
    }

    /// One step: window (history_len, H, W) -> next frame (1, H, W).
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        binding: &ParamBinding,
        window: NodeId,
    ) -> Result<NodeId, ModelError> {
        let shape = tape.shape(window).to_vec();
        if shape.len() != 3 || shape[0] != self.config.history_len {
            return Err(ModelError::WindowShape {
                got: shape,
                expect_c: self.config.history_len,
            });
        }
        let (h, w) = (shape[1], shape[2]);
        self.config.validate_grid(h, w)?;
        match self.config.kind {
            ModelKind::Fno2d => fno::forward(&self.config, tape, binding, window, h, w),
            ModelKind::Unet => unet::forward(&self.config, tape, binding, window, h, w),
        }
    }

    pub fn cast<U: Scalar>(&self) -> StepModel<U> {
        StepModel {
            config: self.config.clone(),
            params: self.params.cast::<U>(),
        }
    }
}

/// Two constant channels holding the normalized grid coordinates y/H and x/W,
/// appended to the input window so the model can break translation symmetry
/// where the (fixed-in-space) forcing demands it.
pub fn coord_channels<T: Scalar>(h: usize, w: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        let vy = T::from_usize(y).unwrap() / T::from_usize(h).unwrap();
        for _ in 0..w {
            data.push(vy);
        }
    }
    for _ in 0..h {
        for x in 0..w {
            data.push(T::from_usize(x).unwrap() / T::from_usize(w).unwrap());
        }
    }
    Tensor::from_vec(&[2, h, w], data)
}

// Init draws always sample in f64 and convert, so f32 and f64 models built
// from one seed agree to rounding.

pub(crate) fn uniform_tensor<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    bound: f64,
) -> Tensor<T> {
    Tensor::from_fn(shape, |_| {
        let u: f64 = rng.random();
        T::from_f64((2.0 * u - 1.0) * bound).unwrap()
    })
}

pub(crate) fn uniform_complex_tensor<T: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    scale: f64,
) -> ComplexTensor<T> {
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        let re: f64 = rng.random();
        let im: f64 = rng.random();
        data.push(Complex::new(
            T::from_f64(re * scale).unwrap(),
            T::from_f64(im * scale).unwrap(),
        ));
    }
    ComplexTensor::from_vec(shape, data)
}
