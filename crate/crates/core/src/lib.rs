//! Numerical solution of Feller's diffusion equation
//!
//! ```text
//! p_t + F_x = 0,    F = -x (gamma p + eta p_x),    x in (0, +inf)
//! ```
//!
//! The equation is recast for the pseudo-inverse (quantile function) of the
//! cumulative distribution: nodes carry fixed slices of probability and move
//! with the flow, so the half-line is handled without truncation and the
//! growing support is followed automatically.
//!
//! Modules:
//!
//! - [`specfun`]: exponential integrals and the Kummer function `M`.
//! - [`analytic`]: exact solution families, point symmetries, PDE residuals
//!   and the exponential-integral conservation law.
//! - [`lagrange`]: initial conditions, mass grids and the semi-discrete
//!   node equations.
//! - [`integrate`]: forward Euler and an adaptive Dormand–Prince (4,5) pair.
//! - [`reconstruct`]: recovery of positions and densities, snapshot CSV I/O.
//! - [`oracles`]: an implicit Eulerian finite-volume solver and a Monte Carlo
//!   simulator of the square-root diffusion.
//! - [`experiment`]: run configurations, presets, experiment and diagnostic
//!   drivers used by the `feller` binary.

// `!(x > 0.0)` is used deliberately so that NaN fails domain checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod experiment;
pub mod integrate;
pub mod lagrange;
pub mod oracles;
pub mod quadrature;
pub mod reconstruct;
pub mod specfun;

pub use analytic::FellerParams;
pub use error::{FellerError, Result};
pub use integrate::{StepControl, TrajectoryRecord};
pub use lagrange::{InitialCondition, MassGrid, MeanKind, ParticleState, SamplingConfig};
pub use reconstruct::Snapshot;
