//! Step-model contracts: parameter counts, the spectral mixing path against a
//! dense-DFT reference, initialization determinism and scale, gradients, and
//! the UNet's shift equivariance on the torus.

mod common;

use common::*;
use num_complex::Complex;
use vorticast::models::{
    fno, unet, FnoSpec, ModelError, ModelKind, StepModel, StepModelConfig, UnetSpec,
};
use vorticast::numerics::{grad_check, ComplexTensor, ParameterStore, Tape, Tensor};

fn fno_cfg(history: usize, modes: usize, width: usize, layers: usize) -> StepModelConfig {
    StepModelConfig::fno2d(
        history,
        FnoSpec {
            modes_x: modes,
            modes_y: modes,
            width,
            n_layers: layers,
        },
    )
}

fn unet_cfg(history: usize, depth: usize, base: usize) -> StepModelConfig {
    StepModelConfig::unet(history, UnetSpec {
        depth,
        base_channels: base,
    })
}

// ---------------------------------------------------------------------------
// parameter accounting

#[test]
fn param_count_matches_closed_form() {
    let cases = [
        fno_cfg(10, 8, 16, 4),
        fno_cfg(1, 2, 4, 1),
        fno_cfg(3, 5, 7, 2),
        unet_cfg(10, 3, 16),
        unet_cfg(1, 1, 4),
        unet_cfg(4, 2, 8),
    ];
    for cfg in cases {
        let model = StepModel::<f64>::init(cfg.clone(), 7).unwrap();
        let expect = match cfg.kind {
            ModelKind::Fno2d => fno::expected_param_count(&cfg),
            ModelKind::Unet => unet::expected_param_count(&cfg),
        };
        assert_eq!(
            model.param_count(),
            expect,
            "closed-form count mismatch for {cfg:?}"
        );
        // Independent recount straight off the store entries.
        let mut by_entries = 0;
        for i in 0..model.params.len() {
            by_entries += model.params.entry(i).1.n_scalars();
        }
        assert_eq!(by_entries, expect);
    }
}

// ---------------------------------------------------------------------------
// spectral mixing against a dense-DFT route

/// Reference spectral convolution built from naive DFT loops: transform,
/// contract channels on the low corner, rebuild a Hermitian spectrum, invert.
fn naive_spectral_conv(
    x: &Tensor<f64>,
    w: &ComplexTensor<f64>,
    mx: usize,
    my: usize,
) -> Vec<f64> {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let co = w.shape()[1];
    let spec = naive_dft2(&x.to_complex());
    let mut full = vec![Complex::new(0.0, 0.0); co * h * wd];
    for o in 0..co {
        for i in 0..mx {
            for j in 0..my {
                let mut acc = Complex::new(0.0, 0.0);
                for c in 0..ci {
                    acc += spec.data()[(c * h + i) * wd + j]
                        * w.data()[((c * co + o) * mx + i) * my + j];
                }
                if i == 0 && j == 0 {
                    full[o * h * wd] = Complex::new(acc.re, 0.0);
                } else {
                    full[(o * h + i) * wd + j] = acc;
                    full[(o * h + (h - i) % h) * wd + (wd - j) % wd] = acc.conj();
                }
            }
        }
    }
    naive_idft2(&ComplexTensor::from_vec(&[co, h, wd], full))
        .data()
        .iter()
        .map(|z| z.re)
        .collect()
}

#[test]
fn spectral_conv_matches_dense_dft_route() {
    for (h, wd, mx, my, seed) in [
        (4usize, 4usize, 2usize, 2usize, 1u64),
        (6, 8, 3, 4, 2),
        (8, 8, 4, 4, 3),
        (8, 6, 2, 3, 4),
    ] {
        let (ci, co) = (2, 2);
        let x = random_tensor(&[ci, h, wd], seed);
        let w = random_complex_tensor(&[ci, co, mx, my], seed + 50);
        let expect = naive_spectral_conv(&x, &w, mx, my);

        let mut tape = Tape::<f64>::new();
        let xn = tape.constant(x);
        let wn = tape.constant_complex(w);
        let out = fno::spectral_conv(&mut tape, xn, wn, h, wd, mx, my).unwrap();
        let err = max_abs_diff(tape.real(out).data(), &expect);
        assert!(err < 1e-10, "{h}x{wd} modes ({mx},{my}): max err {err}");
    }
}

#[test]
fn spectral_conv_zero_weight_gives_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(random_tensor(&[2, 8, 8], 9));
    let w = tape.constant_complex(ComplexTensor::zeros(&[2, 3, 2, 2]));
    let out = fno::spectral_conv(&mut tape, x, w, 8, 8, 2, 2).unwrap();
    assert!(tape.real(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn spectral_conv_constant_field_scales_by_zero_mode_weight() {
    // A constant field only populates the (0,0) mode, so a single real
    // zero-mode weight acts as a plain gain.
    let c = 0.75;
    let gain = 2.5;
    let mut w = ComplexTensor::<f64>::zeros(&[1, 1, 2, 2]);
    w.data_mut()[0] = Complex::new(gain, 0.0);

    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full(&[1, 6, 6], c));
    let wn = tape.constant_complex(w);
    let out = fno::spectral_conv(&mut tape, x, wn, 6, 6, 2, 2).unwrap();
    for &v in tape.real(out).data() {
        assert!((v - c * gain).abs() < 1e-12, "expected {}, got {v}", c * gain);
    }
}

// ---------------------------------------------------------------------------
// forward shape and degenerate-parameter behavior

#[test]
fn forward_maps_window_to_single_frame() {
    for cfg in [fno_cfg(5, 3, 6, 2), unet_cfg(5, 2, 4)] {
        let model = StepModel::<f64>::init(cfg, 11).unwrap();
        let mut tape = Tape::<f64>::new();
        let binding = model.params.bind(&mut tape);
        let win = tape.constant(random_tensor(&[5, 16, 16], 12));
        let out = model.forward(&mut tape, &binding, win).unwrap();
        assert_eq!(tape.shape(out), &[1, 16, 16]);
        assert!(tape.real(out).data().iter().all(|v| v.is_finite()));
    }
}

#[test]
fn fno_with_zeroed_params_outputs_projection_bias() {
    let mut model = StepModel::<f64>::init(fno_cfg(3, 2, 4, 2), 13).unwrap();
    let flat_len = model.params.n_scalars();
    model.params.load_f64_slice(&vec![0.0; flat_len]);
    // Only the projection bias left nonzero: the output must equal it exactly
    // everywhere, because gelu(0) = 0 keeps every hidden layer at zero.
    let bias = -0.3125;
    let mut flat = vec![0.0; flat_len];
    flat[flat_len - 1] = bias;
    model.params.load_f64_slice(&flat);

    let mut tape = Tape::<f64>::new();
    let binding = model.params.bind(&mut tape);
    let win = tape.constant(random_tensor(&[3, 8, 8], 14));
    let out = model.forward(&mut tape, &binding, win).unwrap();
    for &v in tape.real(out).data() {
        assert_eq!(v, bias);
    }
}

// ---------------------------------------------------------------------------
// initialization

#[test]
fn init_is_deterministic_and_seed_sensitive() {
    for cfg in [fno_cfg(4, 3, 8, 2), unet_cfg(4, 2, 4)] {
        let a = StepModel::<f64>::init(cfg.clone(), 42).unwrap();
        let b = StepModel::<f64>::init(cfg.clone(), 42).unwrap();
        assert_eq!(a.params.to_f64_vec(), b.params.to_f64_vec());
        let c = StepModel::<f64>::init(cfg, 43).unwrap();
        assert_ne!(a.params.to_f64_vec(), c.params.to_f64_vec());
    }
}

#[test]
fn f32_init_is_the_rounded_f64_init() {
    for cfg in [fno_cfg(4, 3, 8, 2), unet_cfg(4, 2, 4)] {
        let d = StepModel::<f64>::init(cfg.clone(), 21).unwrap();
        let s = StepModel::<f32>::init(cfg, 21).unwrap();
        let rounded: Vec<f64> = d
            .params
            .to_f64_vec()
            .iter()
            .map(|&v| v as f32 as f64)
            .collect();
        assert_eq!(s.params.to_f64_vec(), rounded);
    }
}

#[test]
fn untrained_output_scale_is_sane() {
    // Unit-RMS input through a fresh default-size model must come out
    // neither dead nor exploding; the band is generous on purpose.
    for cfg in [fno_cfg(10, 8, 16, 4), unet_cfg(10, 3, 16)] {
        let model = StepModel::<f64>::init(cfg.clone(), 31).unwrap();
        let mut x = random_tensor(&[10, 32, 32], 32);
        let rms0 = (x.data().iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        for v in x.data_mut() {
            *v /= rms0;
        }
        let mut tape = Tape::<f64>::new();
        let binding = model.params.bind(&mut tape);
        let win = tape.constant(x);
        let out = model.forward(&mut tape, &binding, win).unwrap();
        let rms = (tape.real(out).data().iter().map(|v| v * v).sum::<f64>()
            / (32.0 * 32.0))
            .sqrt();
        assert!(
            rms > 1e-4 && rms < 1e2,
            "{:?}: untrained output rms {rms} outside (1e-4, 1e2)",
            cfg.kind
        );
    }
}

// ---------------------------------------------------------------------------
// gradients through the full models

/// grad_check of the model's mean-square output with respect to the input
/// window, holding parameters fixed. Step 1e-4: the loss sits around 1e-2
/// and the smallest gradient coordinates near 1e-8, so a finer step lets
/// difference-quotient roundoff swamp those coordinates.
fn model_input_grad_check(cfg: StepModelConfig, grid: usize, seed: u64) -> f64 {
    let model = StepModel::<f64>::init(cfg, seed).unwrap();
    let window = random_tensor(&[model.config.history_len, grid, grid], seed + 1);
    grad_check(
        |tape, x| {
            let binding = model.params.bind(tape);
            let out = model.forward(tape, &binding, x).expect("forward");
            let sq = tape.mul(out, out)?;
            tape.mean(sq)
        },
        &window,
        1e-4,
    )
    .unwrap()
}

#[test]
fn fno_input_gradient_matches_finite_differences() {
    let err = model_input_grad_check(fno_cfg(3, 4, 8, 2), 16, 100);
    assert!(err < 1e-5, "rel err {err}");
}

#[test]
fn unet_input_gradient_matches_finite_differences() {
    let err = model_input_grad_check(unet_cfg(3, 2, 8), 16, 101);
    assert!(err < 1e-5, "rel err {err}");
}

/// Parameter-space probe with a scale-aware criterion. Coordinates whose true
/// gradient is ~1e-8 sit at the resolution limit of a central difference on a
/// ~1e-1 loss, so they get an absolute bound; everything of healthy size must
/// also agree in relative terms.
fn model_param_grad_check(cfg: StepModelConfig, grid: usize, seed: u64) {
    let model = StepModel::<f64>::init(cfg, seed).unwrap();
    let window = random_tensor(&[model.config.history_len, grid, grid], seed + 1);

    let loss_of = |store: &ParameterStore<f64>| -> f64 {
        let mut tape = Tape::<f64>::new();
        let b = store.bind(&mut tape);
        let win = tape.constant(window.clone());
        let out = model.forward(&mut tape, &b, win).unwrap();
        let sq = tape.mul(out, out).unwrap();
        let l = tape.mean(sq).unwrap();
        tape.real(l).data()[0]
    };

    let mut tape = Tape::<f64>::new();
    let binding = model.params.bind(&mut tape);
    let win = tape.constant(window.clone());
    let out = model.forward(&mut tape, &binding, win).unwrap();
    let sq = tape.mul(out, out).unwrap();
    let loss = tape.mean(sq).unwrap();
    tape.backward(loss).unwrap();

    let mut analytic = Vec::with_capacity(model.params.n_scalars());
    for i in 0..model.params.len() {
        let id = binding.id(i);
        if let Some(g) = tape.grad_real(id) {
            analytic.extend(g.iter().copied());
        } else if let Some(g) = tape.grad_complex(id) {
            for z in g {
                analytic.push(z.re);
                analytic.push(z.im);
            }
        } else {
            analytic.extend(std::iter::repeat(0.0).take(model.params.entry(i).1.n_scalars()));
        }
    }

    let step = 1e-5;
    let flat = model.params.to_f64_vec();
    let mut coords = flat.clone();
    let mut probe = model.params.clone();
    for i in 0..flat.len() {
        coords[i] = flat[i] + step;
        probe.load_f64_slice(&coords);
        let fp = loss_of(&probe);
        coords[i] = flat[i] - step;
        probe.load_f64_slice(&coords);
        let fm = loss_of(&probe);
        coords[i] = flat[i];
        let numeric = (fp - fm) / (2.0 * step);
        let abs = (analytic[i] - numeric).abs();
        assert!(abs < 1e-8, "coord {i}: |{} - {numeric}| = {abs}", analytic[i]);
        if analytic[i].abs() + numeric.abs() > 1e-5 {
            let rel = abs / (analytic[i].abs() + numeric.abs());
            assert!(rel < 1e-6, "coord {i}: rel err {rel}");
        }
    }
    probe.load_f64_slice(&flat);
}

#[test]
fn fno_parameter_gradients_match_finite_differences() {
    model_param_grad_check(fno_cfg(2, 2, 4, 2), 8, 100);
}

#[test]
fn unet_parameter_gradients_match_finite_differences() {
    model_param_grad_check(unet_cfg(2, 1, 4), 8, 101);
}

// ---------------------------------------------------------------------------
// symmetry

fn cyclic_shift(x: &Tensor<f64>, dy: usize, dx: usize) -> Tensor<f64> {
    let (h, w) = (x.shape()[1], x.shape()[2]);
    Tensor::from_fn(x.shape(), |idx| {
        let ch = idx / (h * w);
        let y = (idx / w) % h;
        let xx = idx % w;
        x.data()[(ch * h + (y + h - dy % h) % h) * w + (xx + w - dx % w) % w]
    })
}

#[test]
fn unet_commutes_with_coarse_cyclic_shifts() {
    // Stride-2 stages only commute with shifts that are multiples of
    // 2^depth; those must pass to within accumulation error.
    let depth = 2;
    let model = StepModel::<f64>::init(unet_cfg(3, depth, 4), 55).unwrap();
    let x = random_tensor(&[3, 16, 16], 56);
    let step = 1 << depth;

    let run = |inp: Tensor<f64>| -> Tensor<f64> {
        let mut tape = Tape::<f64>::new();
        let binding = model.params.bind(&mut tape);
        let win = tape.constant(inp);
        let out = model.forward(&mut tape, &binding, win).unwrap();
        tape.real(out).clone()
    };

    let base = run(x.clone());
    for (dy, dx) in [(step, 0), (0, step), (2 * step, 3 * step)] {
        let shifted_out = run(cyclic_shift(&x, dy, dx));
        let expected = cyclic_shift(&base, dy, dx);
        let err = max_abs_diff(shifted_out.data(), expected.data());
        assert!(err < 1e-5, "shift ({dy},{dx}): max err {err}");
    }
}

// ---------------------------------------------------------------------------
// rejection paths

#[test]
fn grid_and_window_validation() {
    // FNO modes beyond the half-spectrum of the runtime grid.
    let model = StepModel::<f64>::init(fno_cfg(2, 8, 4, 1), 60).unwrap();
    let mut tape = Tape::<f64>::new();
    let binding = model.params.bind(&mut tape);
    let win = tape.constant(Tensor::zeros(&[2, 8, 8]));
    match model.forward(&mut tape, &binding, win) {
        Err(ModelError::ModesOutOfRange { .. }) => {}
        other => panic!("expected ModesOutOfRange, got {other:?}"),
    }

    // UNet on a grid not divisible by 2^depth.
    let model = StepModel::<f64>::init(unet_cfg(2, 3, 4), 61).unwrap();
    let mut tape = Tape::<f64>::new();
    let binding = model.params.bind(&mut tape);
    let win = tape.constant(Tensor::zeros(&[2, 12, 12]));
    match model.forward(&mut tape, &binding, win) {
        Err(ModelError::GridNotDivisible { required: 8, .. }) => {}
        other => panic!("expected GridNotDivisible, got {other:?}"),
    }

    // UNet whose bottleneck would be smaller than its own kernels.
    let model = StepModel::<f64>::init(unet_cfg(2, 2, 4), 66).unwrap();
    let mut tape = Tape::<f64>::new();
    let binding = model.params.bind(&mut tape);
    let win = tape.constant(Tensor::zeros(&[2, 8, 8]));
    match model.forward(&mut tape, &binding, win) {
        Err(ModelError::Config(msg)) => assert!(msg.contains("too small")),
        other => panic!("expected Config error, got {other:?}"),
    }

    // Window with the wrong channel count.
    let model = StepModel::<f64>::init(fno_cfg(2, 2, 4, 1), 62).unwrap();
    let mut tape = Tape::<f64>::new();
    let binding = model.params.bind(&mut tape);
    let win = tape.constant(Tensor::zeros(&[3, 8, 8]));
    match model.forward(&mut tape, &binding, win) {
        Err(ModelError::WindowShape { expect_c: 2, .. }) => {}
        other => panic!("expected WindowShape, got {other:?}"),
    }

    // Nonsense configs never build.
    assert!(StepModel::<f64>::init(fno_cfg(0, 2, 4, 1), 63).is_err());
    assert!(StepModel::<f64>::init(fno_cfg(2, 2, 0, 1), 64).is_err());
    assert!(StepModel::<f64>::init(unet_cfg(2, 0, 4), 65).is_err());
}
