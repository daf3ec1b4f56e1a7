//! Time steppers for the supported PDEs: 1D Burger's equation and 2D
//! incompressible flow with pressure projection, buoyancy, obstacles and
//! force application. Every stepper exists in a plain (untaped) and a taped,
//! differentiable variant that share the same kernels and produce
//! bit-identical forward values.

mod burger;
mod domain;
mod fluid;
mod poisson;

pub use burger::{
    burger_step, burger_step_plain, natural_evolution, natural_evolution_plain, BurgerState,
};
pub use domain::{BoundaryKind, BoundaryPair, DomainSpec, PoissonConfig};
pub use fluid::{
    control_velocity_force, fluid_step, fluid_step_plain, scale_components, stream_force,
    stream_force_plain, FluidState,
};
pub use poisson::{
    masked_gradient, masked_gradient_transpose, pressure_solve, pressure_solve_plain, project,
    project_plain, taped_masked_gradient,
};
