//! Stationary states of the one-dimensional aggregation equation with
//! quadratic diffusion
//!
//! ```text
//! d/dt rho = d/dx ( rho d/dx ( eps rho - G * rho ) )
//! ```
//!
//! for a radial, strictly decreasing, integrable attraction kernel `G`.
//!
//! * [`kernels`]: kernel profiles and normalization against `||G||_1`.
//! * [`grid`]: uniform grids, trapezoid quadrature and discrete convolution.
//! * [`energy`]: the energy `E = eps/2 int rho^2 - 1/2 int rho G*rho`, its
//!   second variation and symmetric decreasing rearrangement.
//! * [`evolution`]: explicit finite-difference time stepping with
//!   conservation and dissipation diagnostics.
//! * [`steady`]: steady states from the leading eigenpair of the integral
//!   operator acting on `u = -rho'`, and the inverse map `eps -> L`.
//! * [`verify`]: executable property checks producing pass/fail reports.
//! * [`cli`]: the `aggdiff` command line.

pub mod cli;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod kernels;
pub mod steady;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{DensityField, Grid1D};
pub use kernels::Kernel;
