//! Differentiable-physics optimal control for grid-based PDEs.
//!
//! The crate couples a small reverse-mode differentiation tape with
//! semi-Lagrangian PDE solvers (1D Burger's equation and 2D incompressible
//! flow), convolutional predictor/corrector networks, hierarchical execution
//! schemes that plan trajectories between an initial and a target
//! observation, and shooting-style baselines that optimize control forces
//! directly.

pub mod autodiff;
pub mod control;
pub mod data;
pub mod error;
pub mod fields;
pub mod nets;
pub mod optimize;
pub mod physics;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
