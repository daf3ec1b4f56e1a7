//! Objective functions, the moment-based parameter updater, shooting
//! baselines and the supervised / end-to-end training pipelines.

mod adam;
mod loss;
mod shoot;
mod train;

pub use adam::{AdamState, NamedAdam};
pub use loss::{
    force_loss_centered, force_loss_staggered, observation_loss, taped_force_loss,
    taped_observation_loss, LossReport,
};
pub use shoot::{
    evaluate_controls, multiscale_shoot, prolong_controls2x, restrict_controls2x,
    restrict_state2x, single_shoot, standard_normal, warm_start_from_forces, ShootOutcome,
    ShootTask, ShootingProblem,
};
pub use train::{
    calibrate_alpha, train_cfe_diffphys_fluid, train_cfe_diffphys_fluid_resumable,
    train_cfe_supervised_burger, train_cfe_supervised_burger_resumable,
    train_cfe_supervised_fluid, train_diffphys_burger, train_diffphys_burger_resumable,
    train_op_supervised, train_op_supervised_resumable, Curve, DiffPhysConfig, DiffPhysResume,
    DiffPhysTarget, LrSchedule, PlannedFluidExample, TapedBurgerEnv, TapedFluidEnv,
};
