//! Autoregressive surrogate models for 2D incompressible flow, with a
//! comparison of three ways to sample the training rollout: teacher forcing,
//! free rollout, and a curriculum that decays the ground-truth ratio over
//! training.
//!
//! The crate is self-contained: a pseudospectral vorticity solver generates
//! the data, a small reverse-mode tape differentiates the models (spectral
//! convolutions included), and a manifest-driven pipeline trains, evaluates,
//! and renders every artifact deterministically from one master seed.
//!
//! Everything numeric is generic over the scalar type through [`numerics::Scalar`];
//! `f32` runs the experiments, `f64` backs the gradient and solver checks.

pub mod datagen;
pub mod eval;
pub mod manifest;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod rollout;
pub mod seeds;
pub mod trainer;

pub use numerics::{ComplexTensor, NodeId, ParameterStore, Scalar, Tape, Tensor};

/// Single-precision aliases: the experiment configuration.
pub type Tensor32 = numerics::Tensor<f32>;
pub type ComplexTensor32 = numerics::ComplexTensor<f32>;
pub type Tape32 = numerics::Tape<f32>;
pub type ParameterStore32 = numerics::ParameterStore<f32>;
pub type StepModel32 = models::StepModel<f32>;

/// Double-precision aliases: the verification configuration.
pub type Tensor64 = numerics::Tensor<f64>;
pub type ComplexTensor64 = numerics::ComplexTensor<f64>;
pub type Tape64 = numerics::Tape<f64>;
pub type ParameterStore64 = numerics::ParameterStore<f64>;
pub type StepModel64 = models::StepModel<f64>;
