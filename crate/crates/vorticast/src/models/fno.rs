//! Spectral step model: lift -> N x (spectral mixing + pointwise bypass,
//! GELU) -> project.
//!
//! Each spectral layer keeps one complex weight block over the low-frequency
//! corner `[0..modes_x, 0..modes_y]` and rebuilds the full spectrum with
//! Hermitian symmetry, so layer outputs are real by construction rather than
//! by truncation. Parameter count (real scalars, complex counts twice):
//!
//! `(history_len + 2) * width + width                      (lift)`
//! `+ n_layers * (2 * width^2 * modes_x * modes_y          (spectral)`
//! `              + width^2 + width)                       (bypass)`
//! `+ width + 1                                            (projection)`

use rand_chacha::ChaCha8Rng;

use super::{coord_channels, uniform_complex_tensor, uniform_tensor, ModelError, StepModelConfig};
use crate::numerics::{NodeId, NumericsError, ParamBinding, ParameterStore, Scalar, Tape};

/// Spectral convolution as a composite of tape primitives:
/// real -> complex -> fft2 -> corner gather -> per-mode channel contraction
/// -> Hermitian scatter -> ifft2 -> real part.
pub fn spectral_conv<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    weight: NodeId,
    h: usize,
    w: usize,
    modes_x: usize,
    modes_y: usize,
) -> Result<NodeId, NumericsError> {
    let z = tape.to_complex(x)?;
    let spectrum = tape.fft2(z)?;
    let corner = tape.gather_corner(spectrum, modes_x, modes_y)?;
    let mixed = tape.spectral_contract(corner, weight)?;
    let full = tape.hermitian_scatter(mixed, h, w)?;
    let back = tape.ifft2(full)?;
    tape.real_part(back)
}

pub fn init_params<T: Scalar>(config: &StepModelConfig, rng: &mut ChaCha8Rng) -> ParameterStore<T> {
    let f = &config.fno;
    let (n, width) = (config.history_len, f.width);
    let mut store = ParameterStore::new();

    let lift_bound = 1.0 / ((n + 2) as f64).sqrt();
    store.insert_real("lift.w", uniform_tensor(rng, &[n + 2, width], lift_bound));
    store.insert_real("lift.b", uniform_tensor(rng, &[width], lift_bound));

    // Spectral blocks follow the reference convention for this layer type:
    // uniform complex parts scaled by 1/(C_in * C_out).
    let scale = 1.0 / ((width * width) as f64);
    let bypass_bound = 1.0 / (width as f64).sqrt();
    for l in 0..f.n_layers {
        store.insert_complex(
            &format!("layer{l}.spectral"),
            uniform_complex_tensor(rng, &[width, width, f.modes_x, f.modes_y], scale),
        );
        store.insert_real(
            &format!("layer{l}.bypass.w"),
            uniform_tensor(rng, &[width, width], bypass_bound),
        );
        store.insert_real(
            &format!("layer{l}.bypass.b"),
            uniform_tensor(rng, &[width], bypass_bound),
        );
    }

    let proj_bound = 1.0 / (width as f64).sqrt();
    store.insert_real("proj.w", uniform_tensor(rng, &[width, 1], proj_bound));
    store.insert_real("proj.b", uniform_tensor(rng, &[1], proj_bound));
    store
}

pub fn forward<T: Scalar>(
    config: &StepModelConfig,
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    window: NodeId,
    h: usize,
    w: usize,
) -> Result<NodeId, ModelError> {
    let f = &config.fno;
    let coords = tape.constant(coord_channels::<T>(h, w));
    let inp = tape.concat_chan(&[window, coords])?;
    let mut hidden = tape.pointwise(inp, binding.get("lift.w"), binding.get("lift.b"))?;
    for l in 0..f.n_layers {
        let spec = spectral_conv(
            tape,
            hidden,
            binding.get(&format!("layer{l}.spectral")),
            h,
            w,
            f.modes_x,
            f.modes_y,
        )?;
        let byp = tape.pointwise(
            hidden,
            binding.get(&format!("layer{l}.bypass.w")),
            binding.get(&format!("layer{l}.bypass.b")),
        )?;
        let sum = tape.add(spec, byp)?;
        hidden = tape.gelu(sum)?;
    }
    Ok(tape.pointwise(hidden, binding.get("proj.w"), binding.get("proj.b"))?)
}

/// Closed-form parameter count for a config; the store must agree exactly.
pub fn expected_param_count(config: &StepModelConfig) -> usize {
    let f = &config.fno;
    let (n, width) = (config.history_len, f.width);
    (n + 2) * width
        + width
        + f.n_layers * (2 * width * width * f.modes_x * f.modes_y + width * width + width)
        + width
        + 1
}
