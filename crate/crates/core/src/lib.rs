//! Accelerated gradient flow on probability distributions, implemented as an
//! interacting particle system, together with Langevin-type baselines, run
//! diagnostics and an experiment harness.
//!
//! The main entry points:
//!
//! * [`schedule::ScalingSchedule`] - time-varying coefficients of the flow.
//! * [`targets`] - Gaussian and Gaussian-mixture targets, initial laws.
//! * [`interaction`] - Gaussian, diffusion-map and density-estimation
//!   approximations of `grad log rho_t`.
//! * [`dynamics`] - the accelerated flow and the baseline samplers.
//! * [`metrics`] - KL estimates, Lyapunov energy, MSE, rate fits, timing.
//! * [`harness`] - configuration, presets, runs and sweeps with CSV output.

pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod interaction;
pub mod metrics;
pub mod rng;
pub mod schedule;
pub mod targets;

pub use ensemble::{Ensemble, Particles};
pub use error::{Error, Result};
