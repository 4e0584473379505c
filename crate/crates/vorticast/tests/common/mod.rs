#![allow(dead_code)]

use num_complex::Complex;
use vorticast::numerics::{ComplexTensor, Tensor};
use vorticast::seeds;

use rand::RngExt;

/// Direct O(N^2) 2D DFT, the independent reference for the FFT plans:
/// X[p,q] = sum_{y,x} v[y,x] * exp(-2*pi*i*(p*y/H + q*x/W)), unnormalized.
pub fn naive_dft2(x: &ComplexTensor<f64>) -> ComplexTensor<f64> {
    dft2_sign(x, -1.0, 1.0)
}

/// Direct inverse with the matching 1/(H*W) normalization.
pub fn naive_idft2(x: &ComplexTensor<f64>) -> ComplexTensor<f64> {
    let n = {
        let s = x.shape();
        (s[s.len() - 2] * s[s.len() - 1]) as f64
    };
    dft2_sign(x, 1.0, 1.0 / n)
}

fn dft2_sign(x: &ComplexTensor<f64>, sign: f64, norm: f64) -> ComplexTensor<f64> {
    let shape = x.shape().to_vec();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let batch: usize = shape[..shape.len() - 2].iter().product();
    let mut out = vec![Complex::new(0.0, 0.0); x.len()];
    let tau = std::f64::consts::TAU;
    for b in 0..batch {
        let src = &x.data()[b * h * w..(b + 1) * h * w];
        for p in 0..h {
            for q in 0..w {
                let mut acc = Complex::new(0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let phase = sign
                            * tau
                            * (p as f64 * y as f64 / h as f64 + q as f64 * xx as f64 / w as f64);
                        acc += src[y * w + xx] * Complex::new(phase.cos(), phase.sin());
                    }
                }
                out[b * h * w + p * w + q] = acc * norm;
            }
        }
    }
    ComplexTensor::from_vec(&shape, out)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff_c(a: &[Complex<f64>], b: &[Complex<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Uniform values in [-1, 1), deterministic in the seed.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = seeds::rng(&[seed]);
    Tensor::from_fn(shape, |_| 2.0 * rng.random::<f64>() - 1.0)
}

pub fn random_complex_tensor(shape: &[usize], seed: u64) -> ComplexTensor<f64> {
    let mut rng = seeds::rng(&[seed]);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            Complex::new(
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
            )
        })
        .collect();
    ComplexTensor::from_vec(shape, data)
}
