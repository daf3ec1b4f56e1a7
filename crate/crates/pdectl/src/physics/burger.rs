//! Explicit time stepping for the 1D Burger's equation: semi-Lagrangian
//! self-advection, explicit diffusion, then additive forcing. The force is
//! applied after the transport, so a force chosen against the naturally
//! evolved state lands the step on an exact target.

use crate::autodiff::{ops, Tape, VarId};
use crate::error::{Error, Result};
use crate::fields::{advect_centered, laplace, resample_to_faces, CenteredField};

#[derive(Debug, Clone)]
pub struct BurgerState {
    pub u: CenteredField,
    pub time: usize,
}

impl BurgerState {
    pub fn new(u: CenteredField) -> Self {
        Self { u, time: 0 }
    }
}

fn validate(u: &CenteredField, force: &CenteredField, dt: f64, nu: f64) -> Result<()> {
    if u.spec().dims() != force.spec().dims() {
        return Err(Error::ShapeMismatch(
            "state and force grids differ".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let dx = u.spec().spacing()[0];
    if nu < 0.0 || nu * dt / (dx * dx) > 0.5 {
        return Err(Error::Config(format!(
            "explicit diffusion unstable: nu*dt/dx^2 = {} > 0.5",
            nu * dt / (dx * dx)
        )));
    }
    Ok(())
}

/// Advection and diffusion without forcing.
pub fn natural_evolution_plain(u: &CenteredField, dt: f64, nu: f64) -> CenteredField {
    let v = resample_to_faces(u);
    let adv = advect_centered(u, &v, dt);
    let lap = laplace(&adv);
    adv.zip(&lap, |a, l| a + nu * dt * l)
}

/// One forced step on plain values.
pub fn burger_step_plain(
    state: &BurgerState,
    force: &CenteredField,
    dt: f64,
    nu: f64,
) -> Result<BurgerState> {
    validate(&state.u, force, dt, nu)?;
    let nat = natural_evolution_plain(&state.u, dt, nu);
    let u = nat.zip(force, |a, f| a + dt * f);
    Ok(BurgerState {
        u,
        time: state.time + 1,
    })
}

/// Taped natural evolution: `Advect` then explicit diffusion.
pub fn natural_evolution(tape: &mut Tape, u: VarId, dt: f64, nu: f64) -> Result<VarId> {
    let v = ops::resample_to_faces(tape, u)?;
    let adv = ops::advect_centered(tape, u, v, dt)?;
    let lap = ops::laplace(tape, adv)?;
    ops::add_scaled(tape, adv, lap, nu * dt)
}

/// One taped, fully differentiable step.
pub fn burger_step(
    tape: &mut Tape,
    u: VarId,
    force: VarId,
    dt: f64,
    nu: f64,
) -> Result<VarId> {
    validate(
        tape.value(u).as_centered()?,
        tape.value(force).as_centered()?,
        dt,
        nu,
    )?;
    let nat = natural_evolution(tape, u, dt, nu)?;
    ops::add_scaled(tape, nat, force, dt)
}
