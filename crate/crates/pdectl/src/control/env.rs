//! The environment abstraction the execution schemes run against: a state
//! that a solver can advance, an observation projection, a midpoint
//! predictor and a force estimator. Implementations range from counting
//! stubs to full PDE reconstructions, taped or plain.

use crate::error::Result;
use crate::fields::{CenteredField, StaggeredField};
use crate::nets::{
    analytic_cfe_burger, cfe_infer_taped, op_predict, CfeMode, CfeOutput, NetSpec, OPModelBank,
    ParamSet, TapedParams,
};
use crate::physics::{
    burger_step_plain, control_velocity_force, fluid_step_plain, natural_evolution_plain,
    stream_force_plain, BurgerState, DomainSpec, FluidState, PoissonConfig,
};

pub trait ControlEnv {
    type State: Clone;
    type Obs: Clone;
    type Force: Clone;

    fn observe(&mut self, state: &Self::State) -> Result<Self::Obs>;

    /// Predict the observation halfway between `left` and `right`, which are
    /// `scale` solver steps apart; `mid_time` is the absolute index of the
    /// predicted frame.
    fn predict_midpoint(
        &mut self,
        scale: usize,
        mid_time: usize,
        left: &Self::Obs,
        right: &Self::Obs,
    ) -> Result<Self::Obs>;

    /// Estimate the control force that should steer `current` toward
    /// `target` over one step.
    fn estimate_force(
        &mut self,
        time: usize,
        current: &Self::Obs,
        target: &Self::Obs,
    ) -> Result<Self::Force>;

    /// Force for the final step. Environments with fully observable states
    /// may override this to land on the target exactly; the default
    /// falls back to the plain estimator.
    fn terminal_force(
        &mut self,
        time: usize,
        state: &Self::State,
        target: &Self::Obs,
    ) -> Result<Self::Force> {
        let obs = self.observe(state)?;
        self.estimate_force(time, &obs, target)
    }

    fn step(&mut self, time: usize, state: &Self::State, force: &Self::Force)
        -> Result<Self::State>;
}

/// No-op environment for exercising schemes and counting invocations.
pub struct StubEnv;

impl ControlEnv for StubEnv {
    type State = ();
    type Obs = ();
    type Force = ();

    fn observe(&mut self, _: &()) -> Result<()> {
        Ok(())
    }
    fn predict_midpoint(&mut self, _: usize, _: usize, _: &(), _: &()) -> Result<()> {
        Ok(())
    }
    fn estimate_force(&mut self, _: usize, _: &(), _: &()) -> Result<()> {
        Ok(())
    }
    fn step(&mut self, _: usize, _: &(), _: &()) -> Result<()> {
        Ok(())
    }
}

/// How a Burger's environment produces midpoint predictions.
pub enum BurgerPredictor<'a> {
    /// Per-scale network bank.
    Bank(&'a OPModelBank),
    /// Ground-truth states by absolute frame index (testing oracle).
    Oracle(&'a [CenteredField]),
    /// Linear interpolation between the two inputs.
    Average,
}

/// How it produces forces.
pub enum BurgerController<'a> {
    /// Closed-form estimate `(target - current) / dt`.
    Analytic,
    /// Trained network conditioned on (current, target).
    Network(&'a NetSpec, &'a ParamSet),
}

/// Plain (untaped) Burger's reconstruction environment. The final step uses
/// the exact rule: the force is chosen against the naturally evolved state,
/// so the step lands on the target to machine precision.
pub struct BurgerEnv<'a> {
    pub predictor: BurgerPredictor<'a>,
    pub controller: BurgerController<'a>,
    pub dt: f64,
    pub nu: f64,
    /// Apply the exact rule on the final step (on by default).
    pub exact_terminal: bool,
}

impl<'a> BurgerEnv<'a> {
    pub fn analytic(predictor: BurgerPredictor<'a>, dt: f64, nu: f64) -> Self {
        Self {
            predictor,
            controller: BurgerController::Analytic,
            dt,
            nu,
            exact_terminal: true,
        }
    }
}

impl ControlEnv for BurgerEnv<'_> {
    type State = BurgerState;
    type Obs = CenteredField;
    type Force = CenteredField;

    fn observe(&mut self, state: &BurgerState) -> Result<CenteredField> {
        Ok(state.u.clone())
    }

    fn predict_midpoint(
        &mut self,
        scale: usize,
        mid_time: usize,
        left: &CenteredField,
        right: &CenteredField,
    ) -> Result<CenteredField> {
        match &self.predictor {
            BurgerPredictor::Bank(bank) => op_predict(bank, scale, left, right),
            BurgerPredictor::Oracle(states) => Ok(states[mid_time].clone()),
            BurgerPredictor::Average => Ok(left.zip(right, |a, b| 0.5 * (a + b))),
        }
    }

    fn estimate_force(
        &mut self,
        _time: usize,
        current: &CenteredField,
        target: &CenteredField,
    ) -> Result<CenteredField> {
        match &self.controller {
            BurgerController::Analytic => analytic_cfe_burger(current, target, self.dt),
            BurgerController::Network(spec, params) => {
                let mut tape = crate::autodiff::Tape::new();
                let a = tape.leaf(current.clone());
                let b = tape.leaf(target.clone());
                let p = TapedParams::load(&mut tape, params);
                let CfeOutput::Force(f) =
                    cfe_infer_taped(&mut tape, spec, &p, CfeMode::DirectForce, a, b, None)?
                else {
                    unreachable!()
                };
                Ok(tape.value(f).as_centered()?.clone())
            }
        }
    }

    fn terminal_force(
        &mut self,
        time: usize,
        state: &BurgerState,
        target: &CenteredField,
    ) -> Result<CenteredField> {
        if self.exact_terminal {
            let natural = natural_evolution_plain(&state.u, self.dt, self.nu);
            analytic_cfe_burger(&natural, target, self.dt)
        } else {
            let obs = self.observe(state)?;
            self.estimate_force(time, &obs, target)
        }
    }

    fn step(
        &mut self,
        _time: usize,
        state: &BurgerState,
        force: &CenteredField,
    ) -> Result<BurgerState> {
        burger_step_plain(state, force, self.dt, self.nu)
    }
}

/// Plain 2D flow reconstruction environment: density observations, network
/// predictions and a network force estimator in stream-potential or
/// control-velocity mode.
pub struct FluidEnv<'a> {
    pub bank: &'a OPModelBank,
    pub cfe_spec: &'a NetSpec,
    pub cfe_params: &'a ParamSet,
    pub mode: CfeMode,
    pub dom: &'a DomainSpec,
    pub dt: f64,
    pub cfg: PoissonConfig,
}

impl ControlEnv for FluidEnv<'_> {
    type State = FluidState;
    type Obs = CenteredField;
    type Force = StaggeredField;

    fn observe(&mut self, state: &FluidState) -> Result<CenteredField> {
        Ok(state.density.clone())
    }

    fn predict_midpoint(
        &mut self,
        scale: usize,
        _mid_time: usize,
        left: &CenteredField,
        right: &CenteredField,
    ) -> Result<CenteredField> {
        op_predict(self.bank, scale, left, right)
    }

    fn estimate_force(
        &mut self,
        _time: usize,
        current: &CenteredField,
        target: &CenteredField,
    ) -> Result<StaggeredField> {
        let mut tape = crate::autodiff::Tape::new();
        let a = tape.leaf(current.clone());
        let b = tape.leaf(target.clone());
        let p = TapedParams::load(&mut tape, self.cfe_params);
        let mask: Option<Vec<f64>> = self.dom.control_mask().map(|m| {
            m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
        });
        let out = cfe_infer_taped(
            &mut tape,
            self.cfe_spec,
            &p,
            self.mode,
            a,
            b,
            mask.as_deref(),
        )?;
        match out {
            CfeOutput::Force(_) => Err(crate::error::Error::Config(
                "direct-force mode is not a 2D control".into(),
            )),
            CfeOutput::StreamPotential(phi) => {
                let phi = tape.value(phi).as_centered()?.clone();
                stream_force_plain(&phi)
            }
            CfeOutput::Velocity(vx, vy) => {
                let f = control_velocity_force(&mut tape, vx, vy, self.dom)?;
                Ok(tape.value(f).as_staggered()?.clone())
            }
        }
    }

    fn step(
        &mut self,
        _time: usize,
        state: &FluidState,
        force: &StaggeredField,
    ) -> Result<FluidState> {
        fluid_step_plain(state, force, self.dom, self.dt, &self.cfg)
    }
}
