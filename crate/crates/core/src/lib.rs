//! Optimal control of two-dimensional Landau-Lifshitz-Gilbert magnetization
//! dynamics, with the applied magnetic field as a distributed control.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectral`]: cosine-basis transforms and differential operators on a
//!   rectangle with Neumann boundary conditions.
//! - [`fields`]: vector fields, trajectories and pointwise algebra.
//! - [`state`]: forward LLG solver.
//! - [`tangent`]: linearized (sensitivity) solver.
//! - [`adjoint`]: backward adjoint solver, with optional checkpointing.
//! - [`control`]: cost, reduced gradient, projection and optimizer.
//! - [`verify`]: machine-checkable invariants and independent oracles.
//! - [`scenario`], [`io`], [`config`], [`cli`]: problem setup, file formats and
//!   the command-line front end.

pub mod adjoint;
pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod fields;
pub mod io;
pub mod scenario;
pub mod spectral;
pub mod state;
pub mod tangent;
pub mod verify;

pub use error::{Error, Result};
pub use fields::{Trajectory, VectorField3};
pub use spectral::Grid;
pub use state::{Formulation, SolverConfig};
