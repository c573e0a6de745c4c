//! Pseudo-spectral solver for the stochastically forced, linearly damped 2D
//! Euler vorticity equation on the torus `[0, 2π)²`, with tools for the
//! long-time statistics of its solutions.
//!
//! Spectral convention: `f(x) = Σ_k f̂_k e^{ik·x}` with integer wavevectors;
//! the grid has `N` nodes per direction and keeps `|k|_∞ ≤ ⌊N/3⌋` in every
//! nonlinear product.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod dynamics;
pub mod ergodics;
pub mod error;
pub mod noise;
pub mod ou;
pub mod spectral;

pub use dynamics::{integrate, InitialCondition, Integrator, SimConfig, Trajectory, TrajectoryState};
pub use ergodics::{CesaroAccumulator, Observable, OuterMap};
pub use error::{Error, Result};
pub use noise::{NoiseSpectrum, RngStream};
pub use ou::OUState;
pub use spectral::{FourierGrid, NormKind, ScalarField, VelocityField};
