//! Encoder/decoder step model on the torus. Every 3x3 convolution pads by
//! wrapping, downsampling is a stride-2 3x3 convolution that doubles the
//! channel count, upsampling is a 2x2 stride-2 transposed convolution, and
//! each decoder stage concatenates the matching encoder skip before its two
//! convolutions. With wrap padding everywhere the whole network commutes with
//! cyclic shifts that are multiples of 2^depth.

use rand_chacha::ChaCha8Rng;

use super::{uniform_tensor, ModelError, StepModelConfig};
use crate::numerics::{NodeId, ParamBinding, ParameterStore, Scalar, Tape};

fn channels(base: usize, stage: usize) -> usize {
    base << stage
}

pub fn init_params<T: Scalar>(config: &StepModelConfig, rng: &mut ChaCha8Rng) -> ParameterStore<T> {
    let u = &config.unet;
    let (n, base, depth) = (config.history_len, u.base_channels, u.depth);
    let mut store = ParameterStore::new();

    // Conv weights ~ U(+-1/sqrt(fan_in)); fan_in = Ci*kh*kw for 3x3 convs,
    // Ci for the transposed 2x2 (each output pixel receives one tap per
    // input channel).
    let conv = |store: &mut ParameterStore<T>, rng: &mut ChaCha8Rng, name: &str, co: usize, ci: usize| {
        let bound = 1.0 / ((ci * 9) as f64).sqrt();
        store.insert_real(&format!("{name}.w"), uniform_tensor(rng, &[co, ci, 3, 3], bound));
        store.insert_real(&format!("{name}.b"), uniform_tensor(rng, &[co], bound));
    };

    conv(&mut store, rng, "enc0.c1", base, n);
    conv(&mut store, rng, "enc0.c2", base, base);
    for i in 1..=depth {
        let (ci, co) = (channels(base, i - 1), channels(base, i));
        conv(&mut store, rng, &format!("down{i}"), co, ci);
        conv(&mut store, rng, &format!("enc{i}.c1"), co, co);
        conv(&mut store, rng, &format!("enc{i}.c2"), co, co);
    }
    for i in (1..=depth).rev() {
        let (ci, co) = (channels(base, i), channels(base, i - 1));
        let bound = 1.0 / (ci as f64).sqrt();
        store.insert_real(&format!("up{i}.w"), uniform_tensor(rng, &[ci, co, 2, 2], bound));
        store.insert_real(&format!("up{i}.b"), uniform_tensor(rng, &[co], bound));
        conv(&mut store, rng, &format!("dec{i}.c1"), co, 2 * co);
        conv(&mut store, rng, &format!("dec{i}.c2"), co, co);
    }
    let head_bound = 1.0 / (base as f64).sqrt();
    store.insert_real("head.w", uniform_tensor(rng, &[base, 1], head_bound));
    store.insert_real("head.b", uniform_tensor(rng, &[1], head_bound));
    store
}

fn conv_block<T: Scalar>(
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    name: &str,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let c1 = tape.conv2d(
        x,
        binding.get(&format!("{name}.c1.w")),
        binding.get(&format!("{name}.c1.b")),
        1,
    )?;
    let a1 = tape.gelu(c1)?;
    let c2 = tape.conv2d(
        a1,
        binding.get(&format!("{name}.c2.w")),
        binding.get(&format!("{name}.c2.b")),
        1,
    )?;
    Ok(tape.gelu(c2)?)
}

pub fn forward<T: Scalar>(
    config: &StepModelConfig,
    tape: &mut Tape<T>,
    binding: &ParamBinding,
    window: NodeId,
    _h: usize,
    _w: usize,
) -> Result<NodeId, ModelError> {
    let depth = config.unet.depth;
    let mut skips: Vec<NodeId> = Vec::with_capacity(depth);
    let mut cur = conv_block(tape, binding, "enc0", window)?;
    for i in 1..=depth {
        skips.push(cur);
        let down = tape.conv2d(
            cur,
            binding.get(&format!("down{i}.w")),
            binding.get(&format!("down{i}.b")),
            2,
        )?;
        let act = tape.gelu(down)?;
        cur = conv_block(tape, binding, &format!("enc{i}"), act)?;
    }
    for i in (1..=depth).rev() {
        let up = tape.conv_transpose2d(
            cur,
            binding.get(&format!("up{i}.w")),
            binding.get(&format!("up{i}.b")),
        )?;
        let cat = tape.concat_chan(&[skips[i - 1], up])?;
        cur = conv_block(tape, binding, &format!("dec{i}"), cat)?;
    }
    Ok(tape.pointwise(cur, binding.get("head.w"), binding.get("head.b"))?)
}

/// Closed-form parameter count; the built store must agree exactly.
/// Writing C_i = base * 2^i:
///   enc0:   9*C0*n + C0 + 9*C0^2 + C0
///   down i: 9*C_i*C_{i-1} + C_i
///   enc i:  2*(9*C_i^2 + C_i)
///   up i:   4*C_i*C_{i-1} + C_{i-1}
///   dec i:  9*C_{i-1}*2C_{i-1} + C_{i-1} + 9*C_{i-1}^2 + C_{i-1}
///   head:   C0 + 1
pub fn expected_param_count(config: &StepModelConfig) -> usize {
    let u = &config.unet;
    let (n, base, depth) = (config.history_len, u.base_channels, u.depth);
    let c = |i: usize| channels(base, i);
    let mut total = 9 * c(0) * n + c(0) + 9 * c(0) * c(0) + c(0);
    for i in 1..=depth {
        total += 9 * c(i) * c(i - 1) + c(i); // down
        total += 2 * (9 * c(i) * c(i) + c(i)); // enc block
        total += 4 * c(i) * c(i - 1) + c(i - 1); // up
        total += 9 * c(i - 1) * 2 * c(i - 1) + c(i - 1) + 9 * c(i - 1) * c(i - 1) + c(i - 1); // dec
    }
    total + c(0) + 1 // head
}
