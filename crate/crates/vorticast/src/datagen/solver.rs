//! Pseudospectral solver for the 2D vorticity equation on the periodic unit
//! square:
//!
//!   d(omega)/dt + u . grad(omega) = nu laplacian(omega) + f,  u = curl^-1(omega)
//!
//! The state lives in spectral space. Diffusion is integrated implicitly with
//! Crank-Nicolson; advection (plus forcing) explicitly with Heun's
//! predictor-corrector. The advection product is formed on the grid and
//! dealiased with the 2/3 rule, and its zero mode is zeroed explicitly, which
//! together with the forcing's zero mean makes the grid average of omega a
//! bitwise invariant of the integrator.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::fft::transform2_inplace;
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Forcing {
    None,
    /// 0.1 * (sin(2 pi (x + y)) + cos(2 pi (x + y))), fixed in time.
    FixedSinusoidal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub grid_size: usize,
    pub viscosity: f64,
    pub dt: f64,
    /// Physical time between recorded frames; must be an integer number of dt.
    pub record_interval: f64,
    pub n_frames: usize,
    pub forcing: Forcing,
    /// Power-spectrum exponent of the initial Gaussian random field.
    pub spectral_exponent: f64,
    /// Correlation length of the initial field (tau = 1/length_scale).
    pub length_scale: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_size: 64,
            viscosity: 1e-3,
            dt: 1e-3,
            record_interval: 1.0,
            n_frames: 50,
            forcing: Forcing::FixedSinusoidal,
            spectral_exponent: 2.5,
            length_scale: 1.0 / 7.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solver config: {0}")]
    Config(String),
    #[error("state became non-finite at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.grid_size < 8 || self.grid_size % 2 != 0 {
            return Err(SolverError::Config(format!(
                "grid_size must be even and >= 8, got {}",
                self.grid_size
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SolverError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.viscosity > 0.0) {
            return Err(SolverError::Config(format!(
                "viscosity must be positive, got {}",
                self.viscosity
            )));
        }
        if self.n_frames == 0 {
            return Err(SolverError::Config("n_frames must be >= 1".into()));
        }
        if !(self.record_interval > 0.0) {
            return Err(SolverError::Config(format!(
                "record_interval must be positive, got {}",
                self.record_interval
            )));
        }
        let steps = self.record_interval / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) || steps.round() < 1.0 {
            return Err(SolverError::Config(format!(
                "record_interval {} is not an integer multiple of dt {}",
                self.record_interval, self.dt
            )));
        }
        if !(self.spectral_exponent > 1.0) {
            return Err(SolverError::Config(
                "spectral_exponent must exceed 1 for a square-integrable field".into(),
            ));
        }
        if !(self.length_scale > 0.0) {
            return Err(SolverError::Config("length_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_per_frame(&self) -> usize {
        (self.record_interval / self.dt).round() as usize
    }
}

pub struct VorticitySolver {
    n: usize,
    dt: f64,
    /// 4 pi^2 |k|^2 per mode (flattened row-major), 0 at the zero mode.
    k2: Vec<f64>,
    /// 2 pi * signed integer frequency along each axis.
    two_pi_fy: Vec<f64>,
    two_pi_fx: Vec<f64>,
    dealias: Vec<bool>,
    /// Crank-Nicolson factors: numer = 1 - dt/2 nu k^2, denom = 1 + dt/2 nu k^2.
    cn_numer: Vec<f64>,
    cn_denom: Vec<f64>,
    forcing_hat: Vec<Complex<f64>>,
    omega_hat: Vec<Complex<f64>>,
    steps_taken: usize,
    // scratch buffers reused across steps
    buf_u: Vec<Complex<f64>>,
    buf_v: Vec<Complex<f64>>,
    buf_wx: Vec<Complex<f64>>,
    buf_wy: Vec<Complex<f64>>,
}

impl VorticitySolver {
    pub fn new(cfg: &SolverConfig, omega0: &Tensor<f64>) -> Result<Self, SolverError> {
        cfg.validate()?;
        let n = cfg.grid_size;
        if omega0.shape() != [n, n] {
            return Err(SolverError::Config(format!(
                "initial field shape {:?} does not match grid {n}x{n}",
                omega0.shape()
            )));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        let freq: Vec<i64> = (0..n).map(|k| super::grf::signed_freq(k, n)).collect();
        let cutoff = (n / 3) as i64; // keep |f| <= floor(n/3): the 2/3 rule

        let mut k2 = vec![0.0; n * n];
        let mut two_pi_fy = vec![0.0; n * n];
        let mut two_pi_fx = vec![0.0; n * n];
        let mut dealias = vec![false; n * n];
        let mut cn_numer = vec![0.0; n * n];
        let mut cn_denom = vec![0.0; n * n];
        for ky in 0..n {
            for kx in 0..n {
                let i = ky * n + kx;
                let (fy, fx) = (freq[ky], freq[kx]);
                let kk = two_pi * two_pi * ((fx * fx + fy * fy) as f64);
                k2[i] = kk;
                two_pi_fy[i] = two_pi * fy as f64;
                two_pi_fx[i] = two_pi * fx as f64;
                dealias[i] = fy.abs() <= cutoff && fx.abs() <= cutoff;
                let half = 0.5 * cfg.dt * cfg.viscosity * kk;
                cn_numer[i] = 1.0 - half;
                cn_denom[i] = 1.0 + half;
            }
        }

        let mut forcing_hat = vec![Complex::new(0.0, 0.0); n * n];
        if cfg.forcing == Forcing::FixedSinusoidal {
            let mut f = vec![Complex::new(0.0, 0.0); n * n];
            for y in 0..n {
                for x in 0..n {
                    let s = two_pi * (x as f64 + y as f64) / n as f64;
                    f[y * n + x] = Complex::new(0.1 * (s.sin() + s.cos()), 0.0);
                }
            }
            transform2_inplace(&mut f, n, n, true);
            forcing_hat = f;
        }

        let mut omega_hat: Vec<Complex<f64>> =
            omega0.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
        transform2_inplace(&mut omega_hat, n, n, true);

        Ok(VorticitySolver {
            n,
            dt: cfg.dt,
            k2,
            two_pi_fy,
            two_pi_fx,
            dealias,
            cn_numer,
            cn_denom,
            forcing_hat,
            omega_hat,
            steps_taken: 0,
            buf_u: vec![Complex::new(0.0, 0.0); n * n],
            buf_v: vec![Complex::new(0.0, 0.0); n * n],
            buf_wx: vec![Complex::new(0.0, 0.0); n * n],
            buf_wy: vec![Complex::new(0.0, 0.0); n * n],
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn time(&self) -> f64 {
        self.steps_taken as f64 * self.dt
    }

    /// Spectral-space vorticity: the unnormalized DFT coefficients the solver
    /// integrates. Handy for spectra diagnostics and for checking which modes
    /// the advection tendency can reach.
    pub fn spectrum(&self) -> crate::numerics::ComplexTensor<f64> {
        crate::numerics::ComplexTensor::from_vec(&[self.n, self.n], self.omega_hat.clone())
    }

    /// Physical-space vorticity field.
    pub fn state(&self) -> Tensor<f64> {
        let n = self.n;
        let mut buf = self.omega_hat.clone();
        transform2_inplace(&mut buf, n, n, false);
        let scale = 1.0 / (n * n) as f64;
        Tensor::from_vec(&[n, n], buf.iter().map(|z| z.re * scale).collect())
    }

    /// Kinetic energy up to a constant factor: sum over k != 0 of
    /// |omega_hat_k|^2 / (4 pi^2 |k|^2). Used to watch dissipation.
    pub fn kinetic_energy(&self) -> f64 {
        let mut e = 0.0;
        for (i, z) in self.omega_hat.iter().enumerate() {
            if self.k2[i] > 0.0 {
                e += z.norm_sqr() / self.k2[i];
            }
        }
        e
    }

    /// Explicit tendency at a given spectral state: dealiased, zero-mean
    /// advection plus forcing. Writes the result into `out`.
    fn nonlinear(&mut self, omega_hat: &[Complex<f64>], out: &mut Vec<Complex<f64>>) {
        let n = self.n;
        let nn = n * n;
        // Velocity from the streamfunction psi_hat = omega_hat / k^2:
        //   u = d psi / dy -> i 2pi fy psi_hat,  v = -d psi / dx -> -i 2pi fx psi_hat
        // and vorticity gradients in spectral space.
        for i in 0..nn {
            let w = omega_hat[i];
            let psi = if self.k2[i] > 0.0 { w / self.k2[i] } else { Complex::new(0.0, 0.0) };
            self.buf_u[i] = Complex::new(0.0, self.two_pi_fy[i]) * psi;
            self.buf_v[i] = Complex::new(0.0, -self.two_pi_fx[i]) * psi;
            self.buf_wx[i] = Complex::new(0.0, self.two_pi_fx[i]) * w;
            self.buf_wy[i] = Complex::new(0.0, self.two_pi_fy[i]) * w;
        }
        transform2_inplace(&mut self.buf_u, n, n, false);
        transform2_inplace(&mut self.buf_v, n, n, false);
        transform2_inplace(&mut self.buf_wx, n, n, false);
        transform2_inplace(&mut self.buf_wy, n, n, false);
        let scale = 1.0 / nn as f64;
        out.clear();
        out.extend((0..nn).map(|i| {
            let u = self.buf_u[i].re * scale;
            let v = self.buf_v[i].re * scale;
            let wx = self.buf_wx[i].re * scale;
            let wy = self.buf_wy[i].re * scale;
            Complex::new(-(u * wx + v * wy), 0.0)
        }));
        transform2_inplace(out, n, n, true);
        for i in 0..nn {
            if !self.dealias[i] {
                out[i] = Complex::new(0.0, 0.0);
            }
        }
        out[0] = Complex::new(0.0, 0.0); // advection moves no mean
        for i in 0..nn {
            out[i] += self.forcing_hat[i];
        }
    }

    /// Advance one dt with Heun (advection+forcing) / Crank-Nicolson
    /// (diffusion):
    ///   predictor: w* = (numer w^n + dt N(w^n)) / denom
    ///   corrector: w^{n+1} = (numer w^n + dt/2 (N(w^n) + N(w*))) / denom
    pub fn step(&mut self) -> Result<(), SolverError> {
        let nn = self.n * self.n;
        let omega = std::mem::take(&mut self.omega_hat);

        let mut n1 = Vec::with_capacity(nn);
        self.nonlinear(&omega, &mut n1);

        let mut pred = Vec::with_capacity(nn);
        pred.extend((0..nn).map(|i| (omega[i] * self.cn_numer[i] + n1[i] * self.dt) / self.cn_denom[i]));

        let mut n2 = Vec::with_capacity(nn);
        self.nonlinear(&pred, &mut n2);

        let half_dt = 0.5 * self.dt;
        let mut next = pred; // reuse allocation
        for i in 0..nn {
            next[i] = (omega[i] * self.cn_numer[i] + (n1[i] + n2[i]) * half_dt) / self.cn_denom[i];
        }
        self.omega_hat = next;
        self.steps_taken += 1;

        let mut max_sq = 0.0f64;
        for z in &self.omega_hat {
            max_sq = max_sq.max(z.norm_sqr());
        }
        if !max_sq.is_finite() || max_sq > 1e24 {
            return Err(SolverError::NonFinite {
                step: self.steps_taken,
                time: self.time(),
            });
        }
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<(), SolverError> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }
}
