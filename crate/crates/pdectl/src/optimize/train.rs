//! Training pipelines: supervised pretraining of the predictor bank and the
//! force estimators, and end-to-end training through the differentiable
//! solver with the scheme unrolled per example.

use std::collections::BTreeMap;

use rand::RngExt;

use super::adam::NamedAdam;
use super::loss::{taped_force_loss, taped_observation_loss};
use crate::autodiff::{ops, GradientMap, Tape, Tensor, Value, VarId};
use crate::control::{cfe_chain, refine_execute, staggered_execute, ControlEnv, Scheme};
use crate::data::BurgerSample;
use crate::error::{Error, Result};
use crate::fields::CenteredField;
use crate::nets::{
    analytic_cfe_burger_taped, cfe_infer_taped, op_predict_taped, CfeMode, CfeOutput,
    NetSpec, OPModelBank, ParamSet, TapedParams,
};
use crate::physics::{
    burger_step, control_velocity_force, fluid_step, natural_evolution, FluidState,
    DomainSpec, PoissonConfig,
};

/// Geometric interpolation between a starting and final learning rate.
#[derive(Debug, Clone, Copy)]
pub struct LrSchedule {
    pub start: f64,
    pub end: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self { start: lr, end: lr }
    }

    pub fn at(&self, iter: usize, total: usize) -> f64 {
        if total <= 1 || self.start == self.end {
            return self.start;
        }
        let t = iter as f64 / (total - 1) as f64;
        self.start * (self.end / self.start).powf(t)
    }
}

/// One point of a training curve.
pub type Curve = Vec<(usize, f64)>;

fn collect_grads(
    tape: &Tape,
    map: &GradientMap,
    params: &TapedParams,
) -> BTreeMap<String, Tensor> {
    params
        .ids()
        .iter()
        .map(|(name, &id)| {
            let g = map.grad_or_zero(id, tape.value(id));
            let t = match g {
                Value::Tensor(t) => t,
                other => Tensor::new(vec![other.numel()], other.flatten()).unwrap(),
            };
            (name.clone(), t)
        })
        .collect()
}

/// Supervised pretraining of one predictor scale: match the midpoint frame
/// of ground-truth rollouts.
pub fn train_op_supervised(
    bank: &mut OPModelBank,
    scale: usize,
    data: &[BurgerSample],
    iterations: usize,
    batch: usize,
    lr: LrSchedule,
    seed: u64,
) -> Result<Curve> {
    train_op_supervised_resumable(bank, scale, data, iterations, batch, lr, seed, None).map(|r| r.0)
}

/// Same as [`train_op_supervised`], continuing from a previous optimizer
/// state when one is supplied.
#[allow(clippy::too_many_arguments)]
pub fn train_op_supervised_resumable(
    bank: &mut OPModelBank,
    scale: usize,
    data: &[BurgerSample],
    iterations: usize,
    batch: usize,
    lr: LrSchedule,
    seed: u64,
    resume: Option<NamedAdam>,
) -> Result<(Curve, NamedAdam)> {
    let clamp = bank.clamp_nonneg;
    let (spec, params) = bank.get_mut(scale)?;
    let spec = spec.clone();
    let mut adam = resume.unwrap_or_else(|| NamedAdam::new(params, lr.start));
    let mut rng = crate::data::example_rng(seed, scale);
    let mut curve = Vec::new();
    for iter in 0..iterations {
        adam.set_learning_rate(lr.at(iter, iterations));
        let mut tape = Tape::new();
        let taped = TapedParams::load(&mut tape, params);
        let mut loss_terms = Vec::new();
        for _ in 0..batch {
            let sample = &data[rng.random_range(0..data.len())];
            let max_start = sample.states.len() - 1 - scale;
            let i = rng.random_range(0..=max_start);
            let left = tape.leaf(sample.states[i].clone());
            let right = tape.leaf(sample.states[i + scale].clone());
            let label = tape.leaf(sample.states[i + scale / 2].clone());
            let pred = op_predict_taped(&mut tape, &spec, &taped, clamp, left, right)?;
            loss_terms.push(ops::mean_sq_diff(&mut tape, pred, label)?);
        }
        let loss = mean_of(&mut tape, &loss_terms)?;
        let val = tape.value(loss).as_tensor()?.item();
        if !val.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        curve.push((iter, val));
        let map = tape.backward(loss)?;
        let grads = collect_grads(&tape, &map, &taped);
        adam.update(params, &grads)?;
    }
    Ok((curve, adam))
}

/// Supervised pretraining of the chain force estimator: regress the
/// ground-truth driving force from (current state, final target).
pub fn train_cfe_supervised_burger(
    spec: &NetSpec,
    params: &mut ParamSet,
    data: &[BurgerSample],
    iterations: usize,
    batch: usize,
    lr: LrSchedule,
    seed: u64,
) -> Result<Curve> {
    train_cfe_supervised_burger_resumable(spec, params, data, iterations, batch, lr, seed, None)
        .map(|r| r.0)
}

#[allow(clippy::too_many_arguments)]
pub fn train_cfe_supervised_burger_resumable(
    spec: &NetSpec,
    params: &mut ParamSet,
    data: &[BurgerSample],
    iterations: usize,
    batch: usize,
    lr: LrSchedule,
    seed: u64,
    resume: Option<NamedAdam>,
) -> Result<(Curve, NamedAdam)> {
    let mut adam = resume.unwrap_or_else(|| NamedAdam::new(params, lr.start));
    let mut rng = crate::data::example_rng(seed, 1 << 20);
    let mut curve = Vec::new();
    for iter in 0..iterations {
        adam.set_learning_rate(lr.at(iter, iterations));
        let mut tape = Tape::new();
        let taped = TapedParams::load(&mut tape, params);
        let mut loss_terms = Vec::new();
        for _ in 0..batch {
            let sample = &data[rng.random_range(0..data.len())];
            let i = rng.random_range(0..sample.states.len() - 1);
            let cur = tape.leaf(sample.states[i].clone());
            let tgt = tape.leaf(sample.target().clone());
            let label = tape.leaf(sample.force.clone());
            let CfeOutput::Force(f) =
                cfe_infer_taped(&mut tape, spec, &taped, CfeMode::DirectForce, cur, tgt, None)?
            else {
                unreachable!()
            };
            loss_terms.push(ops::mean_sq_diff(&mut tape, f, label)?);
        }
        let loss = mean_of(&mut tape, &loss_terms)?;
        let val = tape.value(loss).as_tensor()?.item();
        if !val.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        curve.push((iter, val));
        let map = tape.backward(loss)?;
        let grads = collect_grads(&tape, &map, &taped);
        adam.update(params, &grads)?;
    }
    Ok((curve, adam))
}

fn mean_of(tape: &mut Tape, terms: &[VarId]) -> Result<VarId> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = ops::add(tape, acc, t)?;
    }
    ops::scale(tape, acc, 1.0 / terms.len() as f64)
}

/// Taped Burger's environment: states and observations are tape variables,
/// so a scheme unrolled through it is differentiable end to end.
pub struct TapedBurgerEnv<'t> {
    pub tape: &'t mut Tape,
    pub op_models: BTreeMap<usize, (NetSpec, TapedParams)>,
    pub cfe: Option<(NetSpec, TapedParams)>,
    pub dt: f64,
    pub nu: f64,
}

impl ControlEnv for TapedBurgerEnv<'_> {
    type State = VarId;
    type Obs = VarId;
    type Force = VarId;

    fn observe(&mut self, state: &VarId) -> Result<VarId> {
        Ok(*state)
    }

    fn predict_midpoint(
        &mut self,
        scale: usize,
        _mid_time: usize,
        left: &VarId,
        right: &VarId,
    ) -> Result<VarId> {
        let (spec, params) = self
            .op_models
            .get(&scale)
            .ok_or(Error::MissingScale(scale))?;
        op_predict_taped(self.tape, spec, params, false, *left, *right)
    }

    fn estimate_force(&mut self, _time: usize, current: &VarId, target: &VarId) -> Result<VarId> {
        match &self.cfe {
            None => analytic_cfe_burger_taped(self.tape, *current, *target, self.dt),
            Some((spec, params)) => {
                let CfeOutput::Force(f) = cfe_infer_taped(
                    self.tape,
                    spec,
                    params,
                    CfeMode::DirectForce,
                    *current,
                    *target,
                    None,
                )?
                else {
                    unreachable!()
                };
                Ok(f)
            }
        }
    }

    fn terminal_force(&mut self, _time: usize, state: &VarId, target: &VarId) -> Result<VarId> {
        let natural = natural_evolution(self.tape, *state, self.dt, self.nu)?;
        analytic_cfe_burger_taped(self.tape, natural, *target, self.dt)
    }

    fn step(&mut self, _time: usize, state: &VarId, force: &VarId) -> Result<VarId> {
        burger_step(self.tape, *state, *force, self.dt, self.nu)
    }
}

/// Which parameters an end-to-end Burger's training run updates.
pub enum DiffPhysTarget<'a> {
    /// Train the chain force estimator.
    CfeChain(&'a NetSpec, &'a mut ParamSet),
    /// Train the predictor bank under the given scheme with the analytic
    /// estimator.
    Bank(&'a mut OPModelBank, Scheme),
}

pub struct DiffPhysConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: LrSchedule,
    pub alpha: f64,
    pub seed: u64,
}

/// End-to-end training on the unrolled objective: per example the chosen
/// scheme runs on a taped environment, the objective (weighted force
/// penalty plus terminal observation loss) is backpropagated through every
/// solver step, and all participating networks update jointly.
pub fn train_diffphys_burger(
    target: DiffPhysTarget,
    data: &[(CenteredField, CenteredField)],
    horizon: usize,
    dt: f64,
    nu: f64,
    cfg: &DiffPhysConfig,
) -> Result<Curve> {
    train_diffphys_burger_resumable(target, data, horizon, dt, nu, cfg, DiffPhysResume::default())
        .map(|r| r.0)
}

/// Optimizer state carried across resumed end-to-end runs.
#[derive(Default)]
pub struct DiffPhysResume {
    pub single: Option<NamedAdam>,
    pub per_scale: BTreeMap<usize, NamedAdam>,
}

pub fn train_diffphys_burger_resumable(
    target: DiffPhysTarget,
    data: &[(CenteredField, CenteredField)],
    horizon: usize,
    dt: f64,
    nu: f64,
    cfg: &DiffPhysConfig,
    resume: DiffPhysResume,
) -> Result<(Curve, DiffPhysResume)> {
    let mut rng = crate::data::example_rng(cfg.seed, 1 << 21);
    let mut curve = Vec::new();
    match target {
        DiffPhysTarget::CfeChain(spec, params) => {
            let mut adam = resume
                .single
                .unwrap_or_else(|| NamedAdam::new(params, cfg.lr.start));
            for iter in 0..cfg.iterations {
                adam.set_learning_rate(cfg.lr.at(iter, cfg.iterations));
                let mut tape = Tape::new();
                let taped = TapedParams::load(&mut tape, params);
                let mut terms = Vec::new();
                for _ in 0..cfg.batch {
                    let (u0, tgt) = &data[rng.random_range(0..data.len())];
                    let mut env = TapedBurgerEnv {
                        tape: &mut tape,
                        op_models: BTreeMap::new(),
                        cfe: Some((spec.clone(), taped.clone())),
                        dt,
                        nu,
                    };
                    let u0 = env.tape.leaf(u0.clone());
                    let tgt = env.tape.leaf(tgt.clone());
                    let traj = cfe_chain(&mut env, u0, &tgt, horizon)?;
                    let lf = taped_force_loss(&mut tape, &traj.forces, dt)?;
                    let lo = taped_observation_loss(
                        &mut tape,
                        *traj.states.last().unwrap(),
                        tgt,
                        None,
                    )?;
                    let scaled = ops::scale(&mut tape, lf, cfg.alpha)?;
                    terms.push(ops::add(&mut tape, scaled, lo)?);
                }
                let loss = mean_of(&mut tape, &terms)?;
                let val = tape.value(loss).as_tensor()?.item();
                if !val.is_finite() {
                    return Err(Error::Diverged { iteration: iter });
                }
                curve.push((iter, val));
                let map = tape.backward(loss)?;
                let grads = collect_grads(&tape, &map, &taped);
                adam.update(params, &grads)?;
            }
            Ok((
                curve,
                DiffPhysResume {
                    single: Some(adam),
                    per_scale: BTreeMap::new(),
                },
            ))
        }
        DiffPhysTarget::Bank(bank, scheme) => {
            let mut adams = resume.per_scale;
            if adams.is_empty() {
                adams = bank
                    .models()
                    .iter()
                    .map(|(&s, (_, p))| (s, NamedAdam::new(p, cfg.lr.start)))
                    .collect();
            }
            for iter in 0..cfg.iterations {
                for a in adams.values_mut() {
                    a.set_learning_rate(cfg.lr.at(iter, cfg.iterations));
                }
                let mut tape = Tape::new();
                let mut taped_by_scale: BTreeMap<usize, (NetSpec, TapedParams)> = BTreeMap::new();
                for (&s, (spec, p)) in bank.models() {
                    taped_by_scale.insert(s, (spec.clone(), TapedParams::load(&mut tape, p)));
                }
                let mut terms = Vec::new();
                for _ in 0..cfg.batch {
                    let (u0, tgt) = &data[rng.random_range(0..data.len())];
                    let mut env = TapedBurgerEnv {
                        tape: &mut tape,
                        op_models: taped_by_scale
                            .iter()
                            .map(|(&s, (spec, p))| {
                                (s, (spec.clone(), p.clone()))
                            })
                            .collect(),
                        cfe: None,
                        dt,
                        nu,
                    };
                    let u0 = env.tape.leaf(u0.clone());
                    let tgt = env.tape.leaf(tgt.clone());
                    let traj = match scheme {
                        Scheme::Chain => cfe_chain(&mut env, u0, &tgt, horizon)?,
                        Scheme::Staggered => staggered_execute(&mut env, u0, &tgt, horizon)?,
                        Scheme::Refined => refine_execute(&mut env, u0, &tgt, horizon)?,
                    };
                    let lf = taped_force_loss(&mut tape, &traj.forces, dt)?;
                    let lo = taped_observation_loss(
                        &mut tape,
                        *traj.states.last().unwrap(),
                        tgt,
                        None,
                    )?;
                    let scaled = ops::scale(&mut tape, lf, cfg.alpha)?;
                    terms.push(ops::add(&mut tape, scaled, lo)?);
                }
                let loss = mean_of(&mut tape, &terms)?;
                let val = tape.value(loss).as_tensor()?.item();
                if !val.is_finite() {
                    return Err(Error::Diverged { iteration: iter });
                }
                curve.push((iter, val));
                let map = tape.backward(loss)?;
                for (&s, (_, taped)) in &taped_by_scale {
                    let grads = collect_grads(&tape, &map, taped);
                    let (_, params) = bank.get_mut(s)?;
                    adams.get_mut(&s).unwrap().update(params, &grads)?;
                }
            }
            Ok((
                curve,
                DiffPhysResume {
                    single: None,
                    per_scale: adams,
                },
            ))
        }
    }
}

/// Taped 2D flow environment for end-to-end training.
pub struct TapedFluidEnv<'t, 'd> {
    pub tape: &'t mut Tape,
    pub cfe_spec: NetSpec,
    pub cfe_params: TapedParams,
    pub mode: CfeMode,
    pub dom: &'d DomainSpec,
    pub dt: f64,
    pub cfg: PoissonConfig,
}

impl ControlEnv for TapedFluidEnv<'_, '_> {
    // (density, velocity)
    type State = (VarId, VarId);
    type Obs = VarId;
    type Force = VarId;

    fn observe(&mut self, state: &(VarId, VarId)) -> Result<VarId> {
        Ok(state.0)
    }

    fn predict_midpoint(
        &mut self,
        _scale: usize,
        _mid_time: usize,
        _left: &VarId,
        _right: &VarId,
    ) -> Result<VarId> {
        Err(Error::Config(
            "taped fluid training drives the estimator from precomputed plans".into(),
        ))
    }

    fn estimate_force(&mut self, _time: usize, current: &VarId, target: &VarId) -> Result<VarId> {
        let mask: Option<Vec<f64>> = self
            .dom
            .control_mask()
            .map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        let out = cfe_infer_taped(
            self.tape,
            &self.cfe_spec,
            &self.cfe_params,
            self.mode,
            *current,
            *target,
            mask.as_deref(),
        )?;
        match out {
            CfeOutput::Force(_) => Err(Error::Config("direct force is not a 2D control".into())),
            CfeOutput::StreamPotential(phi) => crate::physics::stream_force(self.tape, phi),
            CfeOutput::Velocity(vx, vy) => control_velocity_force(self.tape, vx, vy, self.dom),
        }
    }

    fn step(
        &mut self,
        _time: usize,
        state: &(VarId, VarId),
        force: &VarId,
    ) -> Result<(VarId, VarId)> {
        fluid_step(self.tape, state.0, state.1, *force, self.dom, self.dt, &self.cfg)
    }
}

/// One indirect-control training example: initial density, per-step planned
/// densities (the straight-line plan), and the target.
pub struct PlannedFluidExample {
    pub initial: FluidState,
    pub plan: Vec<CenteredField>,
    pub target: CenteredField,
}

/// Pick the objective weight so the force term and the observation term
/// enter at comparable magnitude.
pub fn calibrate_alpha(force_loss: f64, observation_loss: f64) -> f64 {
    if force_loss <= 1e-12 {
        1.0
    } else {
        observation_loss / force_loss
    }
}

/// End-to-end training of the control-velocity estimator on planned
/// trajectories, backpropagating the blurred objective through every
/// projection step.
pub fn train_cfe_diffphys_fluid(
    spec: &NetSpec,
    params: &mut ParamSet,
    mode: CfeMode,
    data: &[PlannedFluidExample],
    dom: &DomainSpec,
    dt: f64,
    poisson: &PoissonConfig,
    blur_r: Option<f64>,
    cfg: &DiffPhysConfig,
) -> Result<Curve> {
    train_cfe_diffphys_fluid_resumable(
        spec, params, mode, data, dom, dt, poisson, blur_r, cfg, None,
    )
    .map(|r| r.0)
}

#[allow(clippy::too_many_arguments)]
pub fn train_cfe_diffphys_fluid_resumable(
    spec: &NetSpec,
    params: &mut ParamSet,
    mode: CfeMode,
    data: &[PlannedFluidExample],
    dom: &DomainSpec,
    dt: f64,
    poisson: &PoissonConfig,
    blur_r: Option<f64>,
    cfg: &DiffPhysConfig,
    resume: Option<NamedAdam>,
) -> Result<(Curve, NamedAdam)> {
    let mut adam = resume.unwrap_or_else(|| NamedAdam::new(params, cfg.lr.start));
    let mut rng = crate::data::example_rng(cfg.seed, 1 << 22);
    let mut curve = Vec::new();
    for iter in 0..cfg.iterations {
        adam.set_learning_rate(cfg.lr.at(iter, cfg.iterations));
        let mut tape = Tape::new();
        let taped = TapedParams::load(&mut tape, params);
        let mut terms = Vec::new();
        for _ in 0..cfg.batch {
            let ex = &data[rng.random_range(0..data.len())];
            let n = ex.plan.len();
            let mut env = TapedFluidEnv {
                tape: &mut tape,
                cfe_spec: spec.clone(),
                cfe_params: taped.clone(),
                mode,
                dom,
                dt,
                cfg: *poisson,
            };
            let mut state = (
                env.tape.leaf(ex.initial.density.clone()),
                env.tape.leaf(ex.initial.velocity.clone()),
            );
            let tgt = env.tape.leaf(ex.target.clone());
            let mut forces = Vec::new();
            for i in 0..n {
                let plan = env.tape.leaf(ex.plan[i].clone());
                let obs = env.observe(&state)?;
                let f = env.estimate_force(i, &obs, &plan)?;
                state = env.step(i, &state, &f)?;
                forces.push(f);
            }
            let lf = taped_force_loss(&mut tape, &forces, dt)?;
            let lo = taped_observation_loss(&mut tape, state.0, tgt, blur_r)?;
            let scaled = ops::scale(&mut tape, lf, cfg.alpha)?;
            terms.push(ops::add(&mut tape, scaled, lo)?);
        }
        let loss = mean_of(&mut tape, &terms)?;
        let val = tape.value(loss).as_tensor()?.item();
        if !val.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        curve.push((iter, val));
        let map = tape.backward(loss)?;
        let grads = collect_grads(&tape, &map, &taped);
        adam.update(params, &grads)?;
    }
    Ok((curve, adam))
}

/// Supervised pretraining of the flow force estimator: the estimated force,
/// added to the current ground-truth velocity, should reproduce the next
/// ground-truth velocity.
pub fn train_cfe_supervised_fluid(
    spec: &NetSpec,
    params: &mut ParamSet,
    mode: CfeMode,
    densities: &[Vec<CenteredField>],
    velocities: &[Vec<crate::fields::StaggeredField>],
    dom: &DomainSpec,
    iterations: usize,
    batch: usize,
    lr: LrSchedule,
    seed: u64,
) -> Result<Curve> {
    let mut adam = NamedAdam::new(params, lr.start);
    let mut rng = crate::data::example_rng(seed, 1 << 23);
    let mut curve = Vec::new();
    for iter in 0..iterations {
        adam.set_learning_rate(lr.at(iter, iterations));
        let mut tape = Tape::new();
        let taped = TapedParams::load(&mut tape, params);
        let mut terms = Vec::new();
        for _ in 0..batch {
            let k = rng.random_range(0..densities.len());
            let t = rng.random_range(0..velocities[k].len() - 1);
            let cur = tape.leaf(densities[k][t].clone());
            let next = tape.leaf(densities[k][t + 1].clone());
            let mask: Option<Vec<f64>> = dom
                .control_mask()
                .map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
            let out = cfe_infer_taped(&mut tape, spec, &taped, mode, cur, next, mask.as_deref())?;
            let force = match out {
                CfeOutput::StreamPotential(phi) => crate::physics::stream_force(&mut tape, phi)?,
                CfeOutput::Velocity(vx, vy) => control_velocity_force(&mut tape, vx, vy, dom)?,
                CfeOutput::Force(_) => {
                    return Err(Error::Config("direct force is not a 2D control".into()))
                }
            };
            let v_cur = tape.leaf(velocities[k][t].clone());
            let v_next = tape.leaf(velocities[k][t + 1].clone());
            let corrected = ops::add(&mut tape, v_cur, force)?;
            terms.push(ops::mean_sq_diff(&mut tape, corrected, v_next)?);
        }
        let loss = mean_of(&mut tape, &terms)?;
        let val = tape.value(loss).as_tensor()?.item();
        if !val.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        curve.push((iter, val));
        let map = tape.backward(loss)?;
        let grads = collect_grads(&tape, &map, &taped);
        adam.update(params, &grads)?;
    }
    Ok(curve)
}
