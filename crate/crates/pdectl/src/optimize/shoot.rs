//! Shooting baselines: optimize the control fields of a full unrolled
//! simulation directly, single-resolution or coarse-to-fine.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::loss::{taped_force_loss, taped_observation_loss, LossReport};
use crate::autodiff::{ops, Segment, Tape, VarId};
use crate::error::{Error, Result};
use crate::fields::{CenteredField, GridSpec, StaggeredField};
use crate::nets::analytic_cfe_burger_taped;
use crate::physics::{
    burger_step, control_velocity_force, fluid_step, natural_evolution, stream_force,
    DomainSpec, FluidState, PoissonConfig,
};

/// What is being steered and over which parameterization.
#[derive(Clone)]
pub enum ShootTask {
    /// Optimize per-step force fields; the final step is always the exact
    /// rule, so only the first `horizon - 1` forces are free.
    Burger {
        initial: CenteredField,
        target: CenteredField,
        dt: f64,
        nu: f64,
    },
    /// Optimize a per-step stream potential whose curl is the force.
    FluidStream {
        initial: FluidState,
        target: CenteredField,
        dom: DomainSpec,
        dt: f64,
        cfg: PoissonConfig,
    },
    /// Optimize per-step control velocities restricted to the control
    /// region (two channels per step).
    FluidVelocity {
        initial: FluidState,
        target: CenteredField,
        dom: DomainSpec,
        dt: f64,
        cfg: PoissonConfig,
    },
}

#[derive(Clone)]
pub struct ShootingProblem {
    pub task: ShootTask,
    pub horizon: usize,
    pub alpha: f64,
    pub blur_r: Option<f64>,
}

impl ShootingProblem {
    fn grid(&self) -> &GridSpec {
        match &self.task {
            ShootTask::Burger { initial, .. } => initial.spec(),
            ShootTask::FluidStream { initial, .. } | ShootTask::FluidVelocity { initial, .. } => {
                initial.density.spec()
            }
        }
    }

    /// Number of free control fields and channels per step.
    pub fn control_shape(&self) -> (usize, usize) {
        match &self.task {
            ShootTask::Burger { .. } => (self.horizon - 1, 1),
            ShootTask::FluidStream { .. } => (self.horizon, 1),
            ShootTask::FluidVelocity { .. } => (self.horizon, 2),
        }
    }

    /// Controls drawn from a centered normal with the given spread.
    pub fn noise_controls(&self, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<CenteredField>> {
        let (steps, channels) = self.control_shape();
        let spec = self.grid().clone();
        (0..steps)
            .map(|_| {
                (0..channels)
                    .map(|_| {
                        let data = (0..spec.cell_count())
                            .map(|_| sigma * standard_normal(rng))
                            .collect();
                        CenteredField::new(spec.clone(), data).unwrap()
                    })
                    .collect()
            })
            .collect()
    }
}

/// Box-Muller draw from the unit normal.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub struct ShootOutcome {
    pub controls: Vec<Vec<CenteredField>>,
    pub history: Vec<LossReport>,
}

struct Unrolled {
    control_vars: Vec<Vec<VarId>>,
    report: LossReport,
    loss: VarId,
}

/// Unroll the full simulation on a tape, returning the objective variable
/// and the control leaves.
fn unroll(tape: &mut Tape, problem: &ShootingProblem, controls: &[Vec<CenteredField>]) -> Result<Unrolled> {
    let control_vars: Vec<Vec<VarId>> = controls
        .iter()
        .map(|step| step.iter().map(|f| tape.leaf(f.clone())).collect())
        .collect();
    match &problem.task {
        ShootTask::Burger {
            initial,
            target,
            dt,
            nu,
        } => {
            let (dt, nu) = (*dt, *nu);
            let mut u = tape.leaf(initial.clone());
            let tgt = tape.leaf(target.clone());
            let mut forces = Vec::new();
            // Long chains recompute each step in the backward pass instead
            // of keeping every interior field alive.
            let checkpointed = problem.horizon > 16;
            for step in &control_vars {
                let f = step[0];
                forces.push(f);
                u = if checkpointed {
                    let seg: Segment = std::rc::Rc::new(move |t: &mut Tape, ids: &[VarId]| {
                        burger_step(t, ids[0], ids[1], dt, nu)
                    });
                    tape.checkpoint(&[u, f], seg)?
                } else {
                    burger_step(tape, u, f, dt, nu)?
                };
            }
            let natural = natural_evolution(tape, u, dt, nu)?;
            let f_last = analytic_cfe_burger_taped(tape, natural, tgt, dt)?;
            forces.push(f_last);
            let u_final = ops::add_scaled(tape, natural, f_last, dt)?;
            let lf = taped_force_loss(tape, &forces, dt)?;
            let lo = taped_observation_loss(tape, u_final, tgt, problem.blur_r)?;
            finish(tape, problem, control_vars, lf, lo)
        }
        ShootTask::FluidStream {
            initial,
            target,
            dom,
            dt,
            cfg,
        } => {
            let mut rho = tape.leaf(initial.density.clone());
            let mut vel = tape.leaf(initial.velocity.clone());
            let tgt = tape.leaf(target.clone());
            let mut forces = Vec::new();
            for step in &control_vars {
                let force = stream_force(tape, step[0])?;
                forces.push(force);
                let (r, v) = fluid_step(tape, rho, vel, force, dom, *dt, cfg)?;
                rho = r;
                vel = v;
            }
            let lf = taped_force_loss(tape, &forces, *dt)?;
            let lo = taped_observation_loss(tape, rho, tgt, problem.blur_r)?;
            finish(tape, problem, control_vars, lf, lo)
        }
        ShootTask::FluidVelocity {
            initial,
            target,
            dom,
            dt,
            cfg,
        } => {
            let mut rho = tape.leaf(initial.density.clone());
            let mut vel = tape.leaf(initial.velocity.clone());
            let tgt = tape.leaf(target.clone());
            let mut forces = Vec::new();
            for step in &control_vars {
                let force = control_velocity_force(tape, step[0], step[1], dom)?;
                forces.push(force);
                let (r, v) = fluid_step(tape, rho, vel, force, dom, *dt, cfg)?;
                rho = r;
                vel = v;
            }
            let lf = taped_force_loss(tape, &forces, *dt)?;
            let lo = taped_observation_loss(tape, rho, tgt, problem.blur_r)?;
            finish(tape, problem, control_vars, lf, lo)
        }
    }
}

fn finish(
    tape: &mut Tape,
    problem: &ShootingProblem,
    control_vars: Vec<Vec<VarId>>,
    lf: VarId,
    lo: VarId,
) -> Result<Unrolled> {
    let scaled = ops::scale(tape, lf, problem.alpha)?;
    let loss = ops::add(tape, scaled, lo)?;
    let report = LossReport::new(
        problem.alpha,
        tape.value(lf).as_tensor()?.item(),
        tape.value(lo).as_tensor()?.item(),
    );
    Ok(Unrolled {
        control_vars,
        report,
        loss,
    })
}

/// Objective of a fixed control sequence (no optimization).
pub fn evaluate_controls(
    problem: &ShootingProblem,
    controls: &[Vec<CenteredField>],
) -> Result<LossReport> {
    let mut tape = Tape::new();
    let u = unroll(&mut tape, problem, controls)?;
    Ok(u.report)
}

/// Gradient descent on the unrolled objective over all control parameters.
/// Divergence (a non-finite objective) aborts with the iteration index.
pub fn single_shoot(
    problem: &ShootingProblem,
    iterations: usize,
    learning_rate: f64,
    init: Vec<Vec<CenteredField>>,
) -> Result<ShootOutcome> {
    let (steps, channels) = problem.control_shape();
    if init.len() != steps || init.iter().any(|s| s.len() != channels) {
        return Err(Error::ShapeMismatch(format!(
            "need {steps} x {channels} control fields"
        )));
    }
    let mut controls = init;
    let cell_count = problem.grid().cell_count();
    let mut adam = AdamState::new(learning_rate, steps * channels * cell_count);
    let mut history = Vec::with_capacity(iterations);
    for iter in 0..iterations {
        let mut tape = Tape::new();
        let unrolled = unroll(&mut tape, problem, &controls)?;
        if !unrolled.report.is_finite() {
            return Err(Error::Diverged { iteration: iter });
        }
        history.push(unrolled.report);
        let map = tape.backward(unrolled.loss)?;
        let mut grads = Vec::with_capacity(steps * channels * cell_count);
        for step in &unrolled.control_vars {
            for &c in step {
                grads.extend(map.grad_or_zero(c, tape.value(c)).flatten());
            }
        }
        let mut flat: Vec<f64> = controls
            .iter()
            .flat_map(|s| s.iter().flat_map(|f| f.data().to_vec()))
            .collect();
        adam.update(&mut flat, &grads);
        let spec = problem.grid().clone();
        let mut off = 0;
        for step in &mut controls {
            for f in step {
                *f = CenteredField::new(spec.clone(), flat[off..off + cell_count].to_vec())?;
                off += cell_count;
            }
        }
    }
    Ok(ShootOutcome { controls, history })
}

/// Inject every other sample (transfer of controls to a coarser grid).
pub fn restrict_controls2x(f: &CenteredField) -> Result<CenteredField> {
    let spec = f.spec();
    let dims: Vec<usize> = spec.dims().iter().map(|&d| d / 2).collect();
    let spacing: Vec<f64> = spec.spacing().iter().map(|&h| h * 2.0).collect();
    let coarse = GridSpec::new(&dims, &spacing, spec.origin())?;
    let data = match spec.rank() {
        1 => (0..dims[0]).map(|i| f.data()[2 * i]).collect(),
        2 => {
            let n1 = spec.dims()[1];
            let mut out = Vec::with_capacity(dims[0] * dims[1]);
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    out.push(f.data()[2 * i * n1 + 2 * j]);
                }
            }
            out
        }
        _ => unreachable!(),
    };
    CenteredField::new(coarse, data)
}

/// Linear refinement that is exactly inverted by [`restrict_controls2x`]:
/// even samples copy the coarse value, odd samples average neighbors.
pub fn prolong_controls2x(f: &CenteredField) -> Result<CenteredField> {
    let spec = f.spec();
    let dims: Vec<usize> = spec.dims().iter().map(|&d| d * 2).collect();
    let spacing: Vec<f64> = spec.spacing().iter().map(|&h| h / 2.0).collect();
    let fine = GridSpec::new(&dims, &spacing, spec.origin())?;
    fn axis(f: &[f64], n: usize, j: usize) -> f64 {
        if j % 2 == 0 {
            f[j / 2]
        } else {
            let a = f[j / 2];
            let b = f[(j / 2 + 1).min(n - 1)];
            0.5 * (a + b)
        }
    }
    let data = match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            (0..2 * n).map(|j| axis(f.data(), n, j)).collect()
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let val = |i: usize, j: usize| -> f64 {
                let (i0, wi) = if i % 2 == 0 {
                    (i / 2, None)
                } else {
                    (i / 2, Some((i / 2 + 1).min(n0 - 1)))
                };
                let row = |r: usize| -> f64 {
                    let base = &f.data()[r * n1..(r + 1) * n1];
                    axis(base, n1, j)
                };
                match wi {
                    None => row(i0),
                    Some(i1) => 0.5 * (row(i0) + row(i1)),
                }
            };
            let mut out = Vec::with_capacity(4 * n0 * n1);
            for i in 0..2 * n0 {
                for j in 0..2 * n1 {
                    out.push(val(i, j));
                }
            }
            out
        }
        _ => unreachable!(),
    };
    CenteredField::new(fine, data)
}

/// Block-mean restriction for state fields (densities, targets).
pub fn restrict_state2x(f: &CenteredField) -> Result<CenteredField> {
    let spec = f.spec();
    let dims: Vec<usize> = spec.dims().iter().map(|&d| d / 2).collect();
    let spacing: Vec<f64> = spec.spacing().iter().map(|&h| h * 2.0).collect();
    let coarse = GridSpec::new(&dims, &spacing, spec.origin())?;
    let data = match spec.rank() {
        1 => (0..dims[0])
            .map(|i| 0.5 * (f.data()[2 * i] + f.data()[2 * i + 1]))
            .collect(),
        2 => {
            let n1 = spec.dims()[1];
            let mut out = Vec::with_capacity(dims[0] * dims[1]);
            for i in 0..dims[0] {
                for j in 0..dims[1] {
                    let s = f.data()[2 * i * n1 + 2 * j]
                        + f.data()[2 * i * n1 + 2 * j + 1]
                        + f.data()[(2 * i + 1) * n1 + 2 * j]
                        + f.data()[(2 * i + 1) * n1 + 2 * j + 1];
                    out.push(0.25 * s);
                }
            }
            out
        }
        _ => unreachable!(),
    };
    CenteredField::new(coarse, data)
}

fn restrict_velocity2x(v: &StaggeredField) -> Result<StaggeredField> {
    let spec = v.spec();
    let dims: Vec<usize> = spec.dims().iter().map(|&d| d / 2).collect();
    let spacing: Vec<f64> = spec.spacing().iter().map(|&h| h * 2.0).collect();
    let coarse = GridSpec::new(&dims, &spacing, spec.origin())?;
    let n1 = spec.dims()[1];
    let cx = (0..=dims[0])
        .flat_map(|i| {
            (0..dims[1]).map(move |j| (i, j))
        })
        .map(|(i, j)| {
            0.5 * (v.component(0)[2 * i * n1 + 2 * j] + v.component(0)[2 * i * n1 + 2 * j + 1])
        })
        .collect();
    let cy = (0..dims[0])
        .flat_map(|i| (0..=dims[1]).map(move |j| (i, j)))
        .map(|(i, j)| {
            0.5 * (v.component(1)[2 * i * (n1 + 1) + 2 * j]
                + v.component(1)[(2 * i + 1) * (n1 + 1) + 2 * j])
        })
        .collect();
    StaggeredField::new(coarse, vec![cx, cy])
}

fn restrict_problem2x(problem: &ShootingProblem) -> Result<ShootingProblem> {
    let task = match &problem.task {
        ShootTask::Burger {
            initial,
            target,
            dt,
            nu,
        } => ShootTask::Burger {
            initial: restrict_state2x(initial)?,
            target: restrict_state2x(target)?,
            dt: *dt,
            nu: *nu,
        },
        ShootTask::FluidStream {
            initial,
            target,
            dom,
            dt,
            cfg,
        } => ShootTask::FluidStream {
            initial: FluidState::new(
                restrict_state2x(&initial.density)?,
                restrict_velocity2x(&initial.velocity)?,
            )?,
            target: restrict_state2x(target)?,
            dom: restrict_domain2x(dom)?,
            dt: *dt,
            cfg: *cfg,
        },
        ShootTask::FluidVelocity {
            initial,
            target,
            dom,
            dt,
            cfg,
        } => ShootTask::FluidVelocity {
            initial: FluidState::new(
                restrict_state2x(&initial.density)?,
                restrict_velocity2x(&initial.velocity)?,
            )?,
            target: restrict_state2x(target)?,
            dom: restrict_domain2x(dom)?,
            dt: *dt,
            cfg: *cfg,
        },
    };
    Ok(ShootingProblem {
        task,
        horizon: problem.horizon,
        alpha: problem.alpha,
        blur_r: problem.blur_r,
    })
}

fn restrict_domain2x(dom: &DomainSpec) -> Result<DomainSpec> {
    let spec = dom.grid();
    let dims: Vec<usize> = spec.dims().iter().map(|&d| d / 2).collect();
    let spacing: Vec<f64> = spec.spacing().iter().map(|&h| h * 2.0).collect();
    let coarse = GridSpec::new(&dims, &spacing, spec.origin())?;
    let n1 = spec.dims()[1];
    let block = |mask: &[bool], i: usize, j: usize| {
        [
            mask[2 * i * n1 + 2 * j],
            mask[2 * i * n1 + 2 * j + 1],
            mask[(2 * i + 1) * n1 + 2 * j],
            mask[(2 * i + 1) * n1 + 2 * j + 1],
        ]
    };
    let mut obstacle = Vec::with_capacity(dims[0] * dims[1]);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            obstacle.push(block(dom.obstacle_mask(), i, j).iter().any(|&b| b));
        }
    }
    let control = dom.control_mask().map(|m| {
        let mut out = Vec::with_capacity(dims[0] * dims[1]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                out.push(block(m, i, j).iter().all(|&b| b));
            }
        }
        out
    });
    // Control cells that became obstacles are dropped.
    let control = control.map(|c| {
        c.iter()
            .zip(&obstacle)
            .map(|(&c, &o)| c && !o)
            .collect::<Vec<bool>>()
    });
    DomainSpec::new(
        &coarse,
        dom.boundaries().to_vec(),
        obstacle,
        control,
        dom.buoyancy().to_vec(),
    )
}

/// Coarse-to-fine shooting over a strictly increasing schedule of
/// resolution fractions ending at full resolution (each a power-of-two
/// fraction). The learning rate decays geometrically per level.
pub fn multiscale_shoot(
    problem: &ShootingProblem,
    schedule: &[f64],
    iterations_per_level: &[usize],
    learning_rate: f64,
    lr_decay: f64,
    seed: u64,
) -> Result<ShootOutcome> {
    if schedule.is_empty() || iterations_per_level.len() != schedule.len() {
        return Err(Error::Config(
            "schedule and per-level iterations must align".into(),
        ));
    }
    if (schedule.last().unwrap() - 1.0).abs() > 1e-12 {
        return Err(Error::Config("schedule must end at full resolution".into()));
    }
    for w in schedule.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config("schedule must be strictly increasing".into()));
        }
    }
    // Problem pyramid, full resolution first.
    let levels: Vec<usize> = schedule
        .iter()
        .map(|f| {
            let inv = 1.0 / f;
            let k = inv.round() as usize;
            if !(k.is_power_of_two()) || ((k as f64) - inv).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "resolution fraction {f} is not a power-of-two fraction"
                )));
            }
            Ok(k.trailing_zeros() as usize)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut problems = Vec::new();
    for &halvings in &levels {
        let mut p = problem.clone();
        for _ in 0..halvings {
            p = restrict_problem2x(&p)?;
        }
        problems.push(p);
    }

    let mut rng = crate::data::example_rng(seed, 0);
    let mut controls = problems[0].noise_controls(0.01, &mut rng);
    let mut lr = learning_rate;
    let mut history = Vec::new();
    let mut outcome = None;
    for (lvl, p) in problems.iter().enumerate() {
        let res = single_shoot(p, iterations_per_level[lvl], lr, controls)?;
        history.extend(res.history.iter().cloned());
        controls = if lvl + 1 < problems.len() {
            let ups = levels[lvl] - levels[lvl + 1];
            let mut c = res.controls;
            for _ in 0..ups {
                c = c
                    .into_iter()
                    .map(|step| {
                        step.iter()
                            .map(prolong_controls2x)
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
            }
            c
        } else {
            outcome = Some(res.controls);
            Vec::new()
        };
        lr *= lr_decay;
    }
    Ok(ShootOutcome {
        controls: outcome.unwrap(),
        history,
    })
}

/// Initial controls taken from a previously reconstructed trajectory
/// instead of noise.
pub fn warm_start_from_forces(
    problem: &ShootingProblem,
    forces: &[CenteredField],
) -> Result<Vec<Vec<CenteredField>>> {
    let (steps, channels) = problem.control_shape();
    if channels != 1 {
        return Err(Error::Config(
            "force warm start applies to single-channel controls".into(),
        ));
    }
    if forces.len() < steps {
        return Err(Error::ShapeMismatch(format!(
            "need at least {steps} forces, got {}",
            forces.len()
        )));
    }
    Ok(forces[..steps].iter().map(|f| vec![f.clone()]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::seeded_centered;

    fn toy_problem() -> ShootingProblem {
        let g = GridSpec::unit(&[16]).unwrap();
        let initial = CenteredField::from_fn(&g, |p| 0.5 * (-(p[0] - 5.0).powi(2) / 6.0).exp());
        let target = CenteredField::from_fn(&g, |p| 0.5 * (-(p[0] - 10.0).powi(2) / 6.0).exp());
        ShootingProblem {
            task: ShootTask::Burger {
                initial,
                target,
                dt: 1.0,
                nu: 0.01,
            },
            horizon: 4,
            alpha: 1.0,
            blur_r: None,
        }
    }

    #[test]
    fn zero_iterations_return_the_initialization() {
        let p = toy_problem();
        let mut rng = crate::data::example_rng(7, 0);
        let init = p.noise_controls(0.01, &mut rng);
        let out = single_shoot(&p, 0, 0.01, init.clone()).unwrap();
        assert_eq!(out.history.len(), 0);
        for (a, b) in out.controls.iter().zip(&init) {
            assert_eq!(a[0].data(), b[0].data());
        }
    }

    #[test]
    fn loss_decreases_over_optimization() {
        let p = toy_problem();
        let mut rng = crate::data::example_rng(8, 0);
        let init = p.noise_controls(0.01, &mut rng);
        let out = single_shoot(&p, 40, 0.02, init).unwrap();
        let first = out.history.first().unwrap().total;
        let last = out.history.last().unwrap().total;
        assert!(last < first, "no improvement: {first} -> {last}");
    }

    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        // Objective gradient with respect to a single control entry.
        let p = toy_problem();
        let mut rng = crate::data::example_rng(9, 0);
        let controls = p.noise_controls(0.05, &mut rng);
        let mut tape = Tape::new();
        let unrolled = unroll(&mut tape, &p, &controls).unwrap();
        let map = tape.backward(unrolled.loss).unwrap();
        let g0 = map
            .grad_or_zero(unrolled.control_vars[1][0], tape.value(unrolled.control_vars[1][0]))
            .flatten();

        let h = 1e-6;
        for idx in [0usize, 7, 12] {
            let mut cp = controls.clone();
            cp[1][0].data_mut()[idx] += h;
            let plus = evaluate_controls(&p, &cp).unwrap().total;
            let mut cm = controls.clone();
            cm[1][0].data_mut()[idx] -= h;
            let minus = evaluate_controls(&p, &cm).unwrap().total;
            let fd = (plus - minus) / (2.0 * h);
            let rel = (fd - g0[idx]).abs() / fd.abs().max(g0[idx].abs()).max(1e-9);
            assert!(rel <= 1e-3, "entry {idx}: fd {fd} vs {}", g0[idx]);
        }
    }

    #[test]
    fn transfer_round_trip_is_exact_on_the_coarse_grid() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let f = seeded_centered(&g, 3);
        let up = prolong_controls2x(&f).unwrap();
        assert_eq!(up.spec().dims(), &[16, 16]);
        let down = restrict_controls2x(&up).unwrap();
        for (a, b) in down.data().iter().zip(f.data()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn single_level_schedule_equals_single_shoot() {
        let p = toy_problem();
        let ms = multiscale_shoot(&p, &[1.0], &[10], 0.02, 0.7, 11).unwrap();
        let mut rng = crate::data::example_rng(11, 0);
        let init = p.noise_controls(0.01, &mut rng);
        let ss = single_shoot(&p, 10, 0.02, init).unwrap();
        for (a, b) in ms.history.iter().zip(&ss.history) {
            assert_eq!(a.total, b.total);
        }
    }

    #[test]
    fn warm_start_reproduces_source_objective() {
        let p = toy_problem();
        let mut rng = crate::data::example_rng(12, 0);
        let source = p.noise_controls(0.05, &mut rng);
        let report = evaluate_controls(&p, &source).unwrap();
        let forces: Vec<CenteredField> = source.iter().map(|s| s[0].clone()).collect();
        let init = warm_start_from_forces(&p, &forces).unwrap();
        let out = single_shoot(&p, 1, 0.0, init).unwrap();
        assert_eq!(out.history[0].total, report.total);
        // Zero learning rate leaves controls unchanged.
        for (a, b) in out.controls.iter().zip(&source) {
            for (x, y) in a[0].data().iter().zip(b[0].data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
