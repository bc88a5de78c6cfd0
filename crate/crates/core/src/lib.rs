//! Numerical laboratory for the planar SDE
//!
//! ```text
//! dX = (X² − Y²) dt + √(2σx) dW₁
//! dY = 2XY dt       + √(2σy) dW₂
//! ```
//!
//! The deterministic part (ż = z² in complex notation) blows up in finite
//! time along the positive real axis, yet any amount of vertical noise
//! stabilizes the system. This crate builds an explicit super-Lyapunov
//! function `V` with `LV ≤ −M V^γ + b`, `γ > 1`, certifies it on a grid, and
//! provides the simulation, ergodic and control probes that go with it.
//!
//! Module map:
//! - [`geometry`]: closed-form flow, orbit circles, scalings, regions.
//! - [`lyapunov`]: local pieces `v1`, `v2`, `v3`, the BVP for `g`, patching.
//! - [`generator`]: the operators `L`, `A`, `T_λ` acting on derivative jets.
//! - [`verifier`]: grid certification of the global function.
//! - [`sde`]: tamed integrator, exact linear process, exit times, ensembles.
//! - [`ergodics`]: moment bounds, histograms, TV decay, minorization probe.
//! - [`control`]: control synthesis, Jacobi flow and Gram matrix.

pub mod control;
pub mod ergodics;
mod error;
pub mod generator;
pub mod geometry;
pub mod lyapunov;
pub mod rng;
pub mod sde;
pub mod verifier;

pub use error::{Error, Result};
pub use geometry::Point;
