//! Execution schemes that assemble predictor, force-estimator and solver
//! invocations into trajectory reconstructions, together with the
//! invocation traces and their closed-form counting laws.

mod env;
mod schemes;
mod trace;

pub use env::{BurgerController, BurgerEnv, BurgerPredictor, ControlEnv, FluidEnv, StubEnv};
pub use schemes::{
    cfe_chain, compose_multishape, count_ops, follow_predictions, hierarchical_predict,
    refine_execute, staggered_execute, EnvTrajectory, MultiTrajectory, Scheme, Trajectory,
};
pub use trace::{SchemeTrace, TraceEvent};
