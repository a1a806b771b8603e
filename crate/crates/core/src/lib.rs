//! Simulation and thermodynamic bookkeeping for a pair of cavity-coupled
//! nanomechanical resonators operated as a stochastic Otto engine.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: closed-form normal-mode physics (branches, mixing matrix,
//!   Landau-Zener leakage, thermal occupancy).
//! - [`protocol`]: piecewise-linear frequency ramps and hot-bath schedules.
//! - [`dynamics`]: exact frozen-coefficient Langevin integrator in the
//!   rotating frame, plus deterministic second-moment propagation.
//! - [`thermo`]: normal-mode decomposition, work, heat and efficiency.
//! - [`spectra`]: Welch spectra and anti-crossing maps.
//! - [`ensemble`]: reproducible many-trajectory runs, sweep-time scans and
//!   the sweep-time optimizer.
//!
//! Trajectory-level work is data-parallel via rayon when the `parallel`
//! feature is enabled (the default); without it every loop runs
//! sequentially and produces identical results.

pub mod constants;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod io;
pub mod model;
pub mod protocol;
pub mod spectra;
pub mod stats;
pub mod thermo;

mod propagator;

pub use error::{Error, Result};

/// Converts a frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    std::f64::consts::TAU * f
}

/// Converts an angular frequency in rad/s to Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / std::f64::consts::TAU
}
