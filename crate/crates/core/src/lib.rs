//! Finite element / semi-implicit Euler–Maruyama solver for the stochastic
//! generalized Benjamin–Bona–Mahony equation on (0, 1),
//!
//! ```text
//! du - d(Δu) - (Δu - Δ²u) dt = f(u) dt + dW,    u = Δu = 0 on the boundary,
//! ```
//!
//! solved through the splitting `v = u - Δu`: a stochastic heat equation for
//! `v` driven by `f(u)` and a Q-Wiener process, plus the elliptic recovery
//! `u = (I - Δ)⁻¹ v`. Includes spectral reference solutions and a Monte Carlo
//! harness for strong convergence rates.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod noise;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
