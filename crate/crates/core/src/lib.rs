//! Grid-free solvers for Hamilton-Jacobi equations
//!
//! `V_t + 0.5 <grad V, M grad V> + U(x) = 0`, `V(x, 0) = Phi(x)`,
//!
//! where `U` is a sum of two-slope piecewise affine concave potentials (after
//! an optional affine change of variables) and `Phi` is one of a few supported
//! initial costs. The value and the optimal trajectories come from a Hopf-type
//! representation built on an exact one-dimensional solution.
//!
//! - [`core1d`]: the one-dimensional value `V(x, t; p, a, b)` and trajectory.
//! - [`prox1d`]: the scalar proximal map of `p -> -V(x, t; p)`.
//! - [`initial_costs`]: supported `Phi`, conjugates and proximal maps.
//! - [`hopf_solver`]: closed-form, ADMM and min-plus solvers in any dimension.
//! - [`oracle`]: slow independent reference computations.
//! - [`batch`]: grids, benchmarks and CSV output.

pub mod batch;
pub mod core1d;
mod error;
pub mod hopf_solver;
pub mod initial_costs;
pub mod oracle;
pub mod prox1d;

pub use error::{HjError, Result};
