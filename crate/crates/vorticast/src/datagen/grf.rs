//! Gaussian random fields on the periodic unit square, sampled in spectral
//! space with a Matern-like power spectrum and exact Hermitian symmetry.

use num_complex::Complex;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{ifft2, ComplexTensor, Scalar, Tensor};

/// Signed integer frequency for index k of an n-point axis.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Spectral coefficients of one field draw. Per-mode standard deviation
/// follows sigma_k = N^2 * sqrt(2) * tau^(a-1) * (4 pi^2 |k|^2 + tau^2)^(-a/2)
/// with a the spectral exponent and tau = 1/length_scale; the N^2 factor
/// cancels the 1/N^2 of the normalized inverse transform. The zero mode is
/// forced to 0 (zero-mean field), conjugate mode pairs are drawn once and
/// mirrored, and self-conjugate modes get a purely real draw.
///
/// All draws happen in f64 in a fixed row-major canonical-mode order, so one
/// seed always yields the same field.
pub fn grf_spectrum(grid_size: usize, rng: &mut ChaCha8Rng, spectral_exponent: f64, length_scale: f64) -> ComplexTensor<f64> {
    let n = grid_size;
    let tau = 1.0 / length_scale;
    let alpha = spectral_exponent;
    let amp = (n * n) as f64 * std::f64::consts::SQRT_2 * tau.powf(alpha - 1.0);
    let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

    let mut coef = vec![Complex::new(0.0f64, 0.0); n * n];
    for ky in 0..n {
        for kx in 0..n {
            if ky == 0 && kx == 0 {
                continue;
            }
            let (my, mx) = ((n - ky) % n, (n - kx) % n);
            if (ky, kx) > (my, mx) {
                continue; // filled by the canonical partner
            }
            let (fy, fx) = (signed_freq(ky, n), signed_freq(kx, n));
            let k2 = (fx * fx + fy * fy) as f64;
            let sigma = amp * (four_pi2 * k2 + tau * tau).powf(-alpha / 2.0);
            if (ky, kx) == (my, mx) {
                let a: f64 = rng.sample(StandardNormal);
                coef[ky * n + kx] = Complex::new(sigma * a, 0.0);
            } else {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let z = Complex::new(sigma * a, sigma * b);
                coef[ky * n + kx] = z;
                coef[my * n + mx] = z.conj();
            }
        }
    }
    ComplexTensor::from_vec(&[n, n], coef)
}

/// One real field draw on an n x n grid, deterministic in the seed.
pub fn sample_grf<T: Scalar>(
    grid_size: usize,
    seed: u64,
    spectral_exponent: f64,
    length_scale: f64,
) -> Tensor<T> {
    let mut rng = crate::seeds::rng(&[seed]);
    let spectrum = grf_spectrum(grid_size, &mut rng, spectral_exponent, length_scale);
    ifft2(&spectrum).re().cast::<T>()
}
