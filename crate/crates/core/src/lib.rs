//! Measure how much task information a learned decoder can pull out of each
//! layer of a small dense network, and how that amount moves over training.
//!
//! The pipeline: [`task`] generates the n-class checkerboard problem, [`nn`]
//! trains a dense network on it, [`probe`] fits decoders on frozen per-layer
//! activations to estimate `H(Y) - L_CE` in bits, [`harness`] orchestrates
//! full experiments (seed sweeps, pretraining, the coarse-label variant, and
//! an exact-MI oracle for validating the estimator), and [`report`] persists
//! runs and renders figures.
//!
//! Math kernels are generic over the scalar type (`f32` or `f64`); the
//! experiment pipeline runs at double precision via the `*64` aliases below.

pub mod config;
pub mod error;
pub mod harness;
pub mod nn;
pub mod probe;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod task;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Row-major sample-by-feature matrix used throughout.
pub type Matrix<F> = ndarray::Array2<F>;

// Concrete double-precision aliases; experiments run at f64.
pub type Matrix64 = Matrix<f64>;
pub type NetworkState64 = nn::NetworkState<f64>;
pub type ForwardTrace64 = nn::ForwardTrace<f64>;
pub type Gradients64 = nn::Gradients<f64>;
pub type Sample64 = task::Sample<f64>;
pub type Dataset64 = task::Dataset<f64>;
pub type ActivationMatrix64 = probe::ActivationMatrix<f64>;
pub type ProbeState64 = probe::ProbeState<f64>;
