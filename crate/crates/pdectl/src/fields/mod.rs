//! Uniform-grid scalar and staggered vector fields with the differential,
//! interpolation, advection and blur operators the solvers are built on.
//! All operations are pure functions of their inputs.

mod advect;
mod blur;
mod diffops;
mod grid;
mod interp;

pub use advect::{advect_centered, advect_centered_vjp, advect_staggered, advect_staggered_vjp};
pub use blur::{blur, blur_transpose};
pub use diffops::{
    curl2d, curl2d_transpose, divergence, divergence_transpose, gradient, gradient_transpose,
    laplace, laplace_transpose,
};
pub use grid::{CenteredField, GridSpec, StaggeredField, MAX_RANK};
pub use interp::{
    interpolate_centered, interpolate_staggered, resample_to_faces, resample_to_faces_transpose,
};
