//! Spectral Galerkin laboratory for the stochastic Navier-Stokes equations
//! on the 3D torus.
//!
//! The crate integrates a Fourier truncation of the velocity field driven by
//! degenerate-in-frequency Gaussian forcing, couples the cut-off system to
//! the free one through a stopping time, differentiates the flow in its
//! initial condition, and estimates Markov-semigroup gradients by both
//! probabilistic representation and common-random-number differencing. A
//! battery of numerical checks pins down the inequalities the construction
//! relies on.
//!
//! Start with [`spectral`] for the field arithmetic, [`noise`] for the
//! Stokes/Ornstein-Uhlenbeck driving process, [`dynamics`] for the pathwise
//! integrators, and [`lab`] for the verification experiments. [`harness`]
//! wires configs, manifests and file outputs for the CLI.

pub mod cutoff;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod lab;
pub mod noise;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Result, SnsError};
