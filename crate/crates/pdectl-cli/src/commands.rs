//! Implementations of the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};

use pdectl::control::{
    cfe_chain, follow_predictions, hierarchical_predict, refine_execute, staggered_execute,
    BurgerController, BurgerEnv, BurgerPredictor, ControlEnv, EnvTrajectory, FluidEnv, Scheme,
};
use pdectl::data::{
    self, bucket_mask, load_burger_example, BurgerSample, ExperimentKind, ExperimentManifest,
};
use pdectl::fields::{interpolate_centered, CenteredField, GridSpec, StaggeredField};
use pdectl::nets::{CfeMode, NetSpec, OPModelBank, ParamSet};
use pdectl::optimize::{
    self, force_loss_centered, force_loss_staggered, observation_loss, DiffPhysConfig,
    DiffPhysResume, DiffPhysTarget, LossReport, LrSchedule, PlannedFluidExample, ShootOutcome,
    ShootTask, ShootingProblem,
};
use pdectl::physics::{BurgerState, FluidState, PoissonConfig};

use crate::ckpt::Checkpoint;

fn parse_scheme(s: &str) -> Result<Scheme> {
    match s {
        "chain" => Ok(Scheme::Chain),
        "staggered" => Ok(Scheme::Staggered),
        "refined" => Ok(Scheme::Refined),
        other => bail!("unknown scheme {other}"),
    }
}

fn parse_grid(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| p.trim().parse::<usize>().context("bad grid size"))
        .collect()
}

#[allow(clippy::too_many_arguments)]
pub fn gen(
    experiment: Option<String>,
    manifest: Option<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    train_count: Option<usize>,
    test_count: Option<usize>,
    grid: Option<String>,
    steps: Option<usize>,
) -> Result<()> {
    let mut m = match (&manifest, &experiment) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading manifest {}", path.display()))?;
            serde_json::from_str::<ExperimentManifest>(&text)?
        }
        (None, Some(kind)) => {
            ExperimentManifest::desk_default(ExperimentKind::parse(kind).map_err(err)?)
        }
        (None, None) => bail!("either --experiment or --manifest is required"),
    };
    if let Some(s) = seed {
        m.seed = s;
    }
    if let Some(c) = train_count {
        m.train_count = c;
    }
    if let Some(c) = test_count {
        m.test_count = c;
    }
    if let Some(g) = grid {
        m.grid_dims = parse_grid(&g)?;
    }
    if let Some(s) = steps {
        m.steps = s;
    }
    let written = match m.experiment {
        ExperimentKind::Burger => data::gen_burger(&m, &out),
        ExperimentKind::FluidNatural => data::gen_fluid_natural(&m, &out),
        ExperimentKind::FluidShapes => data::gen_fluid_shapes(&m, &out),
        ExperimentKind::FluidIndirect => data::gen_fluid_indirect(&m, &out),
    }
    .map_err(err)?;
    println!(
        "generated {} examples ({} train, {} test) in {}",
        written.example_count(),
        written.train_count,
        written.test_count,
        out.display()
    );
    Ok(())
}

fn err(e: pdectl::Error) -> anyhow::Error {
    anyhow::anyhow!("{e}")
}

fn write_curve_csv(path: &Path, rows: &[(usize, f64)], append: bool) -> Result<()> {
    use std::io::Write;
    let mut file = if append && path.exists() {
        std::fs::OpenOptions::new().append(true).open(path)?
    } else {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "iter,loss")?;
        f
    };
    for (i, v) in rows {
        writeln!(file, "{i},{v:.12e}")?;
    }
    Ok(())
}

fn write_history_csv(path: &Path, rows: &[LossReport]) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "iter,force_loss,obs_loss,total")?;
    for (i, r) in rows.iter().enumerate() {
        writeln!(
            f,
            "{i},{:.12e},{:.12e},{:.12e}",
            r.force_loss, r.observation_loss, r.total
        )?;
    }
    Ok(())
}

fn burger_train_pairs(
    m: &ExperimentManifest,
    dir: &Path,
    horizon: usize,
) -> Result<(Vec<BurgerSample>, Vec<(CenteredField, CenteredField)>)> {
    let mut samples = Vec::new();
    let mut pairs = Vec::new();
    for k in 0..m.train_count {
        let s = load_burger_example(m, dir, k).map_err(err)?;
        pairs.push((s.states[0].clone(), s.states[horizon].clone()));
        samples.push(s);
    }
    Ok((samples, pairs))
}

const BURGER_CFE_SEED: u64 = 0x5eed_cfe;
const BURGER_BANK_SEED: u64 = 0x5eed_0b;

#[allow(clippy::too_many_arguments)]
pub fn train(
    data_dir: PathBuf,
    stage: String,
    scheme: Option<String>,
    init: Option<PathBuf>,
    out: PathBuf,
    iters: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    resume: bool,
    horizon: Option<usize>,
) -> Result<()> {
    std::fs::create_dir_all(&out)?;
    let m = ExperimentManifest::load_verified(&data_dir).map_err(err)?;
    let seed = seed.unwrap_or(m.seed);
    match m.experiment {
        ExperimentKind::Burger => {
            train_burger(&m, &data_dir, &stage, scheme, init, &out, iters, lr, seed, resume, horizon)
        }
        ExperimentKind::FluidIndirect => {
            train_indirect(&m, &data_dir, &stage, &out, iters, lr, seed, resume)
        }
        other => bail!("training for {:?} is not wired into the CLI", other),
    }
}

#[allow(clippy::too_many_arguments)]
fn train_burger(
    m: &ExperimentManifest,
    data_dir: &Path,
    stage: &str,
    scheme: Option<String>,
    init: Option<PathBuf>,
    out: &Path,
    iters: Option<usize>,
    lr: Option<f64>,
    seed: u64,
    resume: bool,
    horizon: Option<usize>,
) -> Result<()> {
    let horizon = horizon.unwrap_or(m.steps);
    if !horizon.is_power_of_two() {
        bail!("horizon {horizon} must be a power of two");
    }
    let (samples, pairs) = burger_train_pairs(m, data_dir, horizon)?;
    let spec1d = NetSpec {
        levels: if m.grid_dims[0] >= 32 { 3 } else { 2 },
        ..NetSpec::desk_default(1, 2, 1)
    };

    match stage {
        "supervised" => {
            let iters = iters.unwrap_or(400);
            let lr_sched = LrSchedule {
                start: lr.unwrap_or(1e-3),
                end: 1e-5,
            };
            let ckpt_path = out.join("ckpt_supervised.pdtfb");
            let mut ck = if resume && ckpt_path.exists() {
                Checkpoint::load(&ckpt_path)?
            } else {
                let mut bank = OPModelBank::initialized(horizon, &spec1d, false, BURGER_BANK_SEED)
                    .map_err(err)?;
                let _ = &mut bank;
                let mut ck = Checkpoint::from_bank(&bank);
                ck.cfe_spec = Some(spec1d.clone());
                ck.cfe = Some(pdectl::nets::init_params(&spec1d, BURGER_CFE_SEED).map_err(err)?);
                ck.cfe_mode = Some(CfeMode::DirectForce);
                ck
            };
            let mut bank = ck.to_bank()?;
            // Predictor bank, one scale at a time, smallest first.
            for scale in bank.scales().collect::<Vec<_>>() {
                let key = format!("op{scale}");
                let done = *ck.completed.get(&key).unwrap_or(&0) as usize;
                if done >= iters {
                    continue;
                }
                let (curve, adam) = optimize::train_op_supervised_resumable(
                    &mut bank,
                    scale,
                    &samples,
                    iters - done,
                    8,
                    lr_sched,
                    seed,
                    None,
                )
                .map_err(err)?;
                ck.store_adam(&key, &adam);
                ck.completed.insert(key.clone(), iters as u64);
                let rows: Vec<(usize, f64)> =
                    curve.iter().map(|(i, v)| (i + done, *v)).collect();
                write_curve_csv(&out.join(format!("loss_supervised_op{scale}.csv")), &rows, done > 0)?;
            }
            // Chain force estimator.
            let done = *ck.completed.get("cfe").unwrap_or(&0) as usize;
            if done < iters {
                let mut cfe = ck.cfe.clone().unwrap();
                let (curve, adam) = optimize::train_cfe_supervised_burger_resumable(
                    &spec1d,
                    &mut cfe,
                    &samples,
                    iters - done,
                    8,
                    lr_sched,
                    seed,
                    None,
                )
                .map_err(err)?;
                ck.cfe = Some(cfe);
                ck.store_adam("cfe", &adam);
                ck.completed.insert("cfe".into(), iters as u64);
                let rows: Vec<(usize, f64)> =
                    curve.iter().map(|(i, v)| (i + done, *v)).collect();
                write_curve_csv(&out.join("loss_supervised_cfe.csv"), &rows, done > 0)?;
            }
            for (scale, params) in bank.models() {
                ck.bank.insert(*scale, params.1.clone());
            }
            let models: BTreeMap<usize, ParamSet> = bank
                .models()
                .iter()
                .map(|(&s, (_, p))| (s, p.clone()))
                .collect();
            ck.bank = models;
            ck.save(&ckpt_path)?;
            println!("supervised checkpoint: {}", ckpt_path.display());
            Ok(())
        }
        "diffphys" => {
            let scheme = parse_scheme(scheme.as_deref().unwrap_or("staggered"))?;
            let iters = iters.unwrap_or(300);
            let init =
                init.context("--stage diffphys needs --init with a supervised checkpoint")?;
            let mut ck = Checkpoint::load(&init)?;
            let suffix = match scheme {
                Scheme::Chain => "chain",
                Scheme::Staggered => "staggered",
                Scheme::Refined => "refined",
            };
            let ckpt_path = out.join(format!("ckpt_diffphys_{suffix}.pdtfb"));
            let mut done = 0usize;
            if resume && ckpt_path.exists() {
                ck = Checkpoint::load(&ckpt_path)?;
                done = *ck.completed.get("diffphys").unwrap_or(&0) as usize;
            }
            let cfg = DiffPhysConfig {
                iterations: iters.saturating_sub(done),
                batch: 8,
                lr: LrSchedule::constant(lr.unwrap_or(1e-4)),
                alpha: 1.0,
                seed,
            };
            let curve = match scheme {
                Scheme::Chain => {
                    let spec = ck.cfe_spec.clone().context("checkpoint lacks estimator spec")?;
                    let mut cfe = ck.cfe.clone().context("checkpoint lacks estimator")?;
                    let (curve, _state) = optimize::train_diffphys_burger_resumable(
                        DiffPhysTarget::CfeChain(&spec, &mut cfe),
                        &pairs,
                        horizon,
                        m.dt,
                        m.nu,
                        &cfg,
                        DiffPhysResume::default(),
                    )
                    .map_err(err)?;
                    ck.cfe = Some(cfe);
                    curve
                }
                _ => {
                    let mut bank = ck.to_bank()?;
                    let (curve, _state) = optimize::train_diffphys_burger_resumable(
                        DiffPhysTarget::Bank(&mut bank, scheme),
                        &pairs,
                        horizon,
                        m.dt,
                        m.nu,
                        &cfg,
                        DiffPhysResume::default(),
                    )
                    .map_err(err)?;
                    ck.bank = bank
                        .models()
                        .iter()
                        .map(|(&s, (_, p))| (s, p.clone()))
                        .collect();
                    curve
                }
            };
            ck.completed.insert("diffphys".into(), iters as u64);
            ck.save(&ckpt_path)?;
            let rows: Vec<(usize, f64)> = curve.iter().map(|(i, v)| (i + done, *v)).collect();
            write_curve_csv(
                &out.join(format!("loss_diffphys_{suffix}.csv")),
                &rows,
                done > 0,
            )?;
            println!("end-to-end checkpoint: {}", ckpt_path.display());
            Ok(())
        }
        other => bail!("unknown stage {other} (supervised | diffphys)"),
    }
}

/// Straight-line plan: the initial blob translated toward the bucket center
/// in equal increments.
pub fn straight_line_plan(
    rho0: &CenteredField,
    bucket: usize,
    steps: usize,
) -> Result<Vec<CenteredField>> {
    let spec = rho0.spec().clone();
    let mask = bucket_mask(&spec, bucket);
    let (mut bx, mut by, mut cnt) = (0.0, 0.0, 0usize);
    for (idx, &inside) in mask.iter().enumerate() {
        if inside {
            let p = spec.cell_center(idx);
            bx += p[0];
            by += p[1];
            cnt += 1;
        }
    }
    let (bx, by) = (bx / cnt as f64, by / cnt as f64);
    let total: f64 = rho0.sum().max(1e-12);
    let (mut cx, mut cy) = (0.0, 0.0);
    for idx in 0..spec.cell_count() {
        let p = spec.cell_center(idx);
        cx += rho0.data()[idx] * p[0];
        cy += rho0.data()[idx] * p[1];
    }
    let (cx, cy) = (cx / total, cy / total);
    let mut plan = Vec::with_capacity(steps);
    for i in 1..=steps {
        let t = i as f64 / steps as f64;
        let dx = t * (bx - cx);
        let dy = t * (by - cy);
        let shifted = CenteredField::from_fn(&spec, |p| {
            interpolate_centered(rho0, &[vec![p[0] - dx, p[1] - dy]])[0]
        });
        plan.push(shifted);
    }
    Ok(plan)
}

#[allow(clippy::too_many_arguments)]
fn train_indirect(
    m: &ExperimentManifest,
    data_dir: &Path,
    stage: &str,
    out: &Path,
    iters: Option<usize>,
    lr: Option<f64>,
    seed: u64,
    resume: bool,
) -> Result<()> {
    if stage != "diffphys" {
        bail!("indirect control trains end to end; use --stage diffphys");
    }
    let spec = m.grid().map_err(err)?;
    let dom = m
        .domain
        .clone()
        .context("indirect manifest must embed its domain")?;
    let net_spec = NetSpec {
        output_channels: 2,
        global_bottleneck: true,
        input_dims: Some(m.grid_dims.clone()),
        ..NetSpec::desk_default(2, 2, 2)
    };
    let mut data = Vec::new();
    for k in 0..m.train_count {
        let ex_dir = m.example_dir(data_dir, k);
        let rho0 = data::load_centered(ex_dir.join("rho0.pdtf"), &spec).map_err(err)?;
        let target = data::load_centered(ex_dir.join("target.pdtf"), &spec).map_err(err)?;
        let bucket = m.example_meta[&format!("ex{k}")]["bucket"]
            .as_u64()
            .context("missing bucket index")? as usize;
        let plan = straight_line_plan(&rho0, bucket, m.steps)?;
        data.push(PlannedFluidExample {
            initial: FluidState::at_rest(rho0),
            plan,
            target,
        });
    }
    let iters = iters.unwrap_or(300);
    let ckpt_path = out.join("ckpt_indirect.pdtfb");
    let mut done = 0usize;
    let mut params = if resume && ckpt_path.exists() {
        let ck = Checkpoint::load(&ckpt_path)?;
        done = *ck.completed.get("diffphys").unwrap_or(&0) as usize;
        ck.cfe.context("checkpoint lacks estimator")?
    } else {
        pdectl::nets::init_params(&net_spec, seed ^ 0xc0ffee).map_err(err)?
    };
    let poisson = PoissonConfig::new(4000, m.cg_tolerance).map_err(err)?;
    let cfg = DiffPhysConfig {
        iterations: iters.saturating_sub(done),
        batch: 2,
        lr: LrSchedule::constant(lr.unwrap_or(3e-3)),
        alpha: 1e-3,
        seed,
    };
    let (curve, _adam) = optimize::train_cfe_diffphys_fluid_resumable(
        &net_spec,
        &mut params,
        CfeMode::ControlVelocity,
        &data,
        &dom,
        m.dt,
        &poisson,
        Some(2.0),
        &cfg,
        None,
    )
    .map_err(err)?;
    let mut ck = Checkpoint {
        cfe: Some(params),
        cfe_spec: Some(net_spec),
        cfe_mode: Some(CfeMode::ControlVelocity),
        ..Default::default()
    };
    ck.completed.insert("diffphys".into(), iters as u64);
    ck.save(&ckpt_path)?;
    let rows: Vec<(usize, f64)> = curve.iter().map(|(i, v)| (i + done, *v)).collect();
    write_curve_csv(&out.join("loss_indirect.csv"), &rows, done > 0)?;
    println!("indirect-control checkpoint: {}", ckpt_path.display());
    Ok(())
}

struct BurgerRun {
    states: Vec<CenteredField>,
    forces: Vec<CenteredField>,
    predictions: Vec<Option<CenteredField>>,
    trace: pdectl::control::SchemeTrace,
}

fn run_burger_scheme(
    m: &ExperimentManifest,
    sample: &BurgerSample,
    bank: Option<&OPModelBank>,
    cfe: Option<(&NetSpec, &ParamSet)>,
    scheme: &str,
    horizon: usize,
) -> Result<BurgerRun> {
    let predictor = match bank {
        Some(b) => BurgerPredictor::Bank(b),
        None => BurgerPredictor::Average,
    };
    let controller = match (scheme, cfe) {
        ("chain", Some((spec, params))) => BurgerController::Network(spec, params),
        _ => BurgerController::Analytic,
    };
    let mut env = BurgerEnv {
        predictor,
        controller,
        dt: m.dt,
        nu: m.nu,
        exact_terminal: true,
    };
    let initial = BurgerState::new(sample.states[0].clone());
    let target = sample.states[horizon].clone();
    let traj: EnvTrajectory<BurgerEnv> = match scheme {
        "chain" => cfe_chain(&mut env, initial, &target, horizon).map_err(err)?,
        "staggered" => staggered_execute(&mut env, initial, &target, horizon).map_err(err)?,
        "refined" => refine_execute(&mut env, initial, &target, horizon).map_err(err)?,
        "two_stage" => {
            let o0 = sample.states[0].clone();
            let (preds, mut trace) =
                hierarchical_predict(&mut env, &o0, &target, horizon).map_err(err)?;
            let traj =
                follow_predictions(&mut env, initial, &preds, &target, horizon).map_err(err)?;
            for e in traj.trace.events() {
                match e {
                    pdectl::control::TraceEvent::Cfe { time } => trace.push_cfe(*time),
                    pdectl::control::TraceEvent::Solver { time } => trace.push_solver(*time),
                    pdectl::control::TraceEvent::Op { scale, time } => {
                        trace.push_op(*scale, *time)
                    }
                }
            }
            return Ok(BurgerRun {
                states: traj.states.into_iter().map(|s| s.u).collect(),
                forces: traj.forces,
                predictions: traj.predictions,
                trace,
            });
        }
        other => bail!("unknown scheme {other}"),
    };
    Ok(BurgerRun {
        states: traj.states.into_iter().map(|s| s.u).collect(),
        forces: traj.forces,
        predictions: traj.predictions,
        trace: traj.trace,
    })
}

pub fn reconstruct(
    data_dir: PathBuf,
    example: usize,
    ckpt: Option<PathBuf>,
    scheme: String,
    out: PathBuf,
    timing_reps: usize,
    horizon: Option<usize>,
) -> Result<()> {
    std::fs::create_dir_all(&out)?;
    let m = ExperimentManifest::load_verified(&data_dir).map_err(err)?;
    let ck = match &ckpt {
        Some(p) => Some(Checkpoint::load(p)?),
        None => None,
    };
    match m.experiment {
        ExperimentKind::Burger => {
            let horizon = horizon.unwrap_or(m.steps);
            let sample = load_burger_example(&m, &data_dir, example).map_err(err)?;
            let bank = match &ck {
                Some(c) if !c.bank.is_empty() => Some(c.to_bank()?),
                _ => None,
            };
            let cfe = ck
                .as_ref()
                .and_then(|c| c.cfe.as_ref().map(|p| (c.cfe_spec.as_ref().unwrap(), p)));

            let run =
                run_burger_scheme(&m, &sample, bank.as_ref(), cfe, &scheme, horizon)?;

            // Median wall time over repetitions after warm-ups.
            let mut times = Vec::new();
            for i in 0..(3 + timing_reps) {
                let t0 = Instant::now();
                let _ = run_burger_scheme(&m, &sample, bank.as_ref(), cfe, &scheme, horizon)?;
                if i >= 3 {
                    times.push(t0.elapsed().as_secs_f64() * 1e3);
                }
            }
            times.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median_ms = if times.is_empty() {
                0.0
            } else {
                times[times.len() / 2]
            };

            let cells = m.grid_dims[0];
            let mut flat = Vec::new();
            for s in &run.states {
                flat.extend_from_slice(s.data());
            }
            data::save_tensor(
                out.join("states.pdtf"),
                &[run.states.len() as u64, cells as u64],
                &flat,
            )
            .map_err(err)?;
            let mut flat = Vec::new();
            for f in &run.forces {
                flat.extend_from_slice(f.data());
            }
            data::save_tensor(
                out.join("forces.pdtf"),
                &[run.forces.len() as u64, cells as u64],
                &flat,
            )
            .map_err(err)?;
            let preds: Vec<&CenteredField> =
                run.predictions.iter().flatten().collect();
            if !preds.is_empty() {
                let mut flat = Vec::new();
                for p in &preds {
                    flat.extend_from_slice(p.data());
                }
                data::save_tensor(
                    out.join("predictions.pdtf"),
                    &[preds.len() as u64, cells as u64],
                    &flat,
                )
                .map_err(err)?;
            }
            std::fs::write(out.join("trace.txt"), run.trace.to_text())?;

            let target = &sample.states[horizon];
            let terminal = run.states.last().unwrap();
            let max_err = terminal
                .data()
                .iter()
                .zip(target.data())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            let report = LossReport::new(
                1.0,
                force_loss_centered(&run.forces, m.dt),
                observation_loss(terminal, target, None).map_err(err)?,
            );
            let (op_count, cfe_count, solver_count) = run.trace.counts();
            let metrics = serde_json::json!({
                "scheme": scheme,
                "example": example,
                "force_loss": report.force_loss,
                "observation_loss": report.observation_loss,
                "total": report.total,
                "terminal_max_err": max_err,
                "inference_ms_median": median_ms,
                "op_calls": op_count,
                "cfe_calls": cfe_count,
                "solver_calls": solver_count,
            });
            std::fs::write(
                out.join("metrics.json"),
                serde_json::to_string_pretty(&metrics)?,
            )?;
            println!(
                "reconstructed example {example} ({scheme}): force {:.4}, terminal err {:.2e}",
                report.force_loss, max_err
            );
            Ok(())
        }
        ExperimentKind::FluidIndirect => {
            let ck = ck.context("indirect reconstruction needs --ckpt")?;
            let spec = m.grid().map_err(err)?;
            let dom = m.domain.clone().context("manifest lacks domain")?;
            let ex_dir = m.example_dir(&data_dir, example);
            let rho0 = data::load_centered(ex_dir.join("rho0.pdtf"), &spec).map_err(err)?;
            let bucket = m.example_meta[&format!("ex{example}")]["bucket"]
                .as_u64()
                .context("missing bucket")? as usize;
            let plan = straight_line_plan(&rho0, bucket, m.steps)?;
            let run = run_indirect(&m, &ck, &dom, &rho0, &plan)?;
            let mut flat = Vec::new();
            for d in &run.0 {
                flat.extend_from_slice(d.data());
            }
            data::save_tensor(
                out.join("densities.pdtf"),
                &[
                    run.0.len() as u64,
                    m.grid_dims[0] as u64,
                    m.grid_dims[1] as u64,
                ],
                &flat,
            )
            .map_err(err)?;
            let inside = mass_in_bucket(run.0.last().unwrap(), bucket);
            let metrics = serde_json::json!({
                "example": example,
                "bucket": bucket,
                "force_loss": force_loss_staggered(&run.1, m.dt),
                "mass_fraction_in_bucket": inside,
            });
            std::fs::write(
                out.join("metrics.json"),
                serde_json::to_string_pretty(&metrics)?,
            )?;
            println!("example {example}: {:.1}% of mass in bucket {bucket}", inside * 100.0);
            Ok(())
        }
        other => bail!("reconstruction for {other:?} is not wired into the CLI"),
    }
}

/// Fraction of total smoke mass inside bucket `b`.
pub fn mass_in_bucket(density: &CenteredField, b: usize) -> f64 {
    let mask = bucket_mask(density.spec(), b);
    let total: f64 = density.sum().max(1e-12);
    let inside: f64 = density
        .data()
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .sum();
    inside / total
}

type IndirectRun = (Vec<CenteredField>, Vec<StaggeredField>);

fn run_indirect(
    m: &ExperimentManifest,
    ck: &Checkpoint,
    dom: &pdectl::physics::DomainSpec,
    rho0: &CenteredField,
    plan: &[CenteredField],
) -> Result<IndirectRun> {
    let spec_net = ck.cfe_spec.clone().context("checkpoint lacks estimator spec")?;
    let params = ck.cfe.as_ref().context("checkpoint lacks estimator")?;
    let poisson = PoissonConfig::new(4000, m.cg_tolerance).map_err(err)?;
    let bank = OPModelBank::new(true);
    let mut env = FluidEnv {
        bank: &bank,
        cfe_spec: &spec_net,
        cfe_params: params,
        mode: ck.cfe_mode.unwrap_or(CfeMode::ControlVelocity),
        dom,
        dt: m.dt,
        cfg: poisson,
    };
    let mut state = FluidState::at_rest(rho0.clone());
    let mut densities = vec![state.density.clone()];
    let mut forces = Vec::new();
    for (i, target) in plan.iter().enumerate() {
        let obs = env.observe(&state).map_err(err)?;
        let force = env.estimate_force(i, &obs, target).map_err(err)?;
        state = env.step(i, &state, &force).map_err(err)?;
        densities.push(state.density.clone());
        forces.push(force);
    }
    Ok((densities, forces))
}

#[allow(clippy::too_many_arguments)]
pub fn shoot(
    data_dir: PathBuf,
    example: usize,
    out: PathBuf,
    iters: usize,
    lr: Option<f64>,
    seed: Option<u64>,
    warm_start: Option<PathBuf>,
    schedule: Option<String>,
    horizon: Option<usize>,
    alpha: Option<f64>,
    blur: Option<f64>,
) -> Result<()> {
    std::fs::create_dir_all(&out)?;
    let m = ExperimentManifest::load_verified(&data_dir).map_err(err)?;
    let seed = seed.unwrap_or(m.seed ^ example as u64);
    let problem = match m.experiment {
        ExperimentKind::Burger => {
            let horizon = horizon.unwrap_or(m.steps);
            let sample = load_burger_example(&m, &data_dir, example).map_err(err)?;
            ShootingProblem {
                task: ShootTask::Burger {
                    initial: sample.states[0].clone(),
                    target: sample.states[horizon].clone(),
                    dt: m.dt,
                    nu: m.nu,
                },
                horizon,
                alpha: alpha.unwrap_or(1.0),
                blur_r: blur,
            }
        }
        ExperimentKind::FluidShapes => {
            let spec = m.grid().map_err(err)?;
            let ex_dir = m.example_dir(&data_dir, example);
            let rho0 = data::load_centered(ex_dir.join("rho0_0.pdtf"), &spec).map_err(err)?;
            let target = data::load_centered(ex_dir.join("target_0.pdtf"), &spec).map_err(err)?;
            ShootingProblem {
                task: ShootTask::FluidStream {
                    initial: FluidState::at_rest(rho0),
                    target,
                    dom: pdectl::physics::DomainSpec::closed_box(&spec),
                    dt: m.dt,
                    cfg: PoissonConfig::new(4000, m.cg_tolerance).map_err(err)?,
                },
                horizon: horizon.unwrap_or(8),
                alpha: alpha.unwrap_or(1e-3),
                blur_r: blur,
            }
        }
        ExperimentKind::FluidIndirect => {
            let spec = m.grid().map_err(err)?;
            let dom = m.domain.clone().context("manifest lacks domain")?;
            let ex_dir = m.example_dir(&data_dir, example);
            let rho0 = data::load_centered(ex_dir.join("rho0.pdtf"), &spec).map_err(err)?;
            let target = data::load_centered(ex_dir.join("target.pdtf"), &spec).map_err(err)?;
            ShootingProblem {
                task: ShootTask::FluidVelocity {
                    initial: FluidState::at_rest(rho0),
                    target,
                    dom,
                    dt: m.dt,
                    cfg: PoissonConfig::new(4000, m.cg_tolerance).map_err(err)?,
                },
                horizon: horizon.unwrap_or(m.steps),
                alpha: alpha.unwrap_or(1e-3),
                blur_r: blur.or(Some(2.0)),
            }
        }
        other => bail!("shooting for {other:?} is not wired into the CLI"),
    };
    let default_lr = match m.experiment {
        ExperimentKind::FluidIndirect => 0.1,
        _ => 0.01,
    };
    let lr = lr.unwrap_or(default_lr);

    let outcome: ShootOutcome = if let Some(sched) = schedule {
        let fractions: Vec<f64> = sched
            .split(',')
            .map(|p| p.trim().parse::<f64>().context("bad schedule entry"))
            .collect::<Result<_>>()?;
        let per = iters / fractions.len().max(1);
        let iters_per: Vec<usize> = vec![per; fractions.len()];
        optimize::multiscale_shoot(&problem, &fractions, &iters_per, lr, 0.7, seed).map_err(err)?
    } else {
        let init = match &warm_start {
            Some(dir) => {
                let (dims, flat) = data::load_tensor(dir.join("forces.pdtf")).map_err(err)?;
                let cells = dims[1] as usize;
                let spec = GridSpec::unit(&[cells]).map_err(err)?;
                let forces: Vec<CenteredField> = (0..dims[0] as usize)
                    .map(|i| {
                        CenteredField::new(spec.clone(), flat[i * cells..(i + 1) * cells].to_vec())
                            .map_err(err)
                    })
                    .collect::<Result<_>>()?;
                optimize::warm_start_from_forces(&problem, &forces).map_err(err)?
            }
            None => {
                let mut rng = data::example_rng(seed, example);
                problem.noise_controls(0.01, &mut rng)
            }
        };
        optimize::single_shoot(&problem, iters, lr, init).map_err(err)?
    };

    write_history_csv(&out.join("convergence.csv"), &outcome.history)?;
    let (steps, channels) = problem.control_shape();
    let spec = match &problem.task {
        ShootTask::Burger { initial, .. } => initial.spec().clone(),
        ShootTask::FluidStream { initial, .. } | ShootTask::FluidVelocity { initial, .. } => {
            initial.density.spec().clone()
        }
    };
    let mut flat = Vec::new();
    for step in &outcome.controls {
        for c in step {
            flat.extend_from_slice(c.data());
        }
    }
    let mut dims: Vec<u64> = vec![steps as u64, channels as u64];
    dims.extend(spec.dims().iter().map(|&d| d as u64));
    data::save_tensor(out.join("controls.pdtf"), &dims, &flat).map_err(err)?;
    let last = outcome.history.last();
    let metrics = serde_json::json!({
        "example": example,
        "iterations": outcome.history.len(),
        "final": last.map(|r| serde_json::json!({
            "force_loss": r.force_loss,
            "obs_loss": r.observation_loss,
            "total": r.total,
        })),
    });
    std::fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
    if let Some(r) = last {
        println!(
            "shoot finished: force {:.4}, obs {:.4e}, total {:.4}",
            r.force_loss, r.observation_loss, r.total
        );
    }
    Ok(())
}

pub fn eval(
    data_dir: PathBuf,
    out: PathBuf,
    methods: Vec<String>,
    horizon: Option<usize>,
) -> Result<()> {
    std::fs::create_dir_all(&out)?;
    let m = ExperimentManifest::load_verified(&data_dir).map_err(err)?;
    if methods.is_empty() {
        bail!("at least one --method name:scheme:ckpt is required");
    }
    struct Row {
        name: String,
        scheme: String,
        force_mean: f64,
        force_std: f64,
        obs_mean: f64,
        obs_std: f64,
        extra: Option<(f64, f64)>,
    }
    let mut rows = Vec::new();
    for spec in &methods {
        let parts: Vec<&str> = spec.splitn(3, ':').collect();
        if parts.len() < 2 {
            bail!("method spec must be name:scheme[:ckpt], got {spec}");
        }
        let (name, scheme) = (parts[0].to_string(), parts[1].to_string());
        let ck = match parts.get(2) {
            Some(p) if !p.is_empty() => Some(Checkpoint::load(p)?),
            _ => None,
        };
        match m.experiment {
            ExperimentKind::Burger => {
                let horizon = horizon.unwrap_or(m.steps);
                let bank = match &ck {
                    Some(c) if !c.bank.is_empty() => Some(c.to_bank()?),
                    _ => None,
                };
                let mut forces = Vec::new();
                let mut obs = Vec::new();
                for k in m.train_count..m.example_count() {
                    let sample = load_burger_example(&m, &data_dir, k).map_err(err)?;
                    let cfe = ck.as_ref().and_then(|c| {
                        c.cfe.as_ref().map(|p| (c.cfe_spec.as_ref().unwrap(), p))
                    });
                    let run = run_burger_scheme(&m, &sample, bank.as_ref(), cfe, &scheme, horizon)?;
                    forces.push(force_loss_centered(&run.forces, m.dt));
                    obs.push(
                        observation_loss(
                            run.states.last().unwrap(),
                            &sample.states[horizon],
                            None,
                        )
                        .map_err(err)?,
                    );
                }
                let (fm, fs) = mean_std(&forces);
                let (om, os) = mean_std(&obs);
                rows.push(Row {
                    name,
                    scheme,
                    force_mean: fm,
                    force_std: fs,
                    obs_mean: om,
                    obs_std: os,
                    extra: None,
                });
            }
            ExperimentKind::FluidIndirect => {
                let ck = ck.context("indirect evaluation needs a checkpoint")?;
                let spec_grid = m.grid().map_err(err)?;
                let dom = m.domain.clone().context("manifest lacks domain")?;
                let mut forces = Vec::new();
                let mut inside = Vec::new();
                for k in m.train_count..m.example_count() {
                    let ex_dir = m.example_dir(&data_dir, k);
                    let rho0 =
                        data::load_centered(ex_dir.join("rho0.pdtf"), &spec_grid).map_err(err)?;
                    let bucket = m.example_meta[&format!("ex{k}")]["bucket"]
                        .as_u64()
                        .context("missing bucket")? as usize;
                    let plan = straight_line_plan(&rho0, bucket, m.steps)?;
                    let run = run_indirect(&m, &ck, &dom, &rho0, &plan)?;
                    forces.push(force_loss_staggered(&run.1, m.dt));
                    inside.push(mass_in_bucket(run.0.last().unwrap(), bucket) * 100.0);
                }
                let (fm, fs) = mean_std(&forces);
                let (im, is) = mean_std(&inside);
                rows.push(Row {
                    name,
                    scheme,
                    force_mean: fm,
                    force_std: fs,
                    obs_mean: 0.0,
                    obs_std: 0.0,
                    extra: Some((im, is)),
                });
            }
            other => bail!("evaluation for {other:?} is not wired into the CLI"),
        }
    }

    let mut csv = String::from("method,scheme,force_mean,force_std,obs_mean,obs_std,inside_mean,inside_std\n");
    let mut txt = format!(
        "{:<18} {:<10} {:>14} {:>14} {:>14} {:>14} {:>12} {:>10}\n",
        "method", "scheme", "force_mean", "force_std", "obs_mean", "obs_std", "inside_%", "std"
    );
    for r in &rows {
        let (im, is) = r.extra.unwrap_or((f64::NAN, f64::NAN));
        csv.push_str(&format!(
            "{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            r.name, r.scheme, r.force_mean, r.force_std, r.obs_mean, r.obs_std, im, is
        ));
        txt.push_str(&format!(
            "{:<18} {:<10} {:>14.6} {:>14.6} {:>14.6e} {:>14.6e} {:>12.2} {:>10.2}\n",
            r.name, r.scheme, r.force_mean, r.force_std, r.obs_mean, r.obs_std, im, is
        ));
    }
    std::fs::write(out.join("eval.csv"), &csv)?;
    std::fs::write(out.join("eval.txt"), &txt)?;
    print!("{txt}");
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn render(input: PathBuf, out: PathBuf) -> Result<()> {
    std::fs::create_dir_all(&out)?;
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(&input)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().map(|e| e == "pdtf").unwrap_or(false))
            .collect();
        v.sort();
        v
    } else {
        vec![input.clone()]
    };
    if files.is_empty() {
        bail!("no .pdtf files under {}", input.display());
    }
    for path in files {
        let (dims, data_vec) = data::load_tensor(&path).map_err(err)?;
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        match dims.len() {
            1 => {
                let spec = GridSpec::unit(&[dims[0] as usize]).map_err(err)?;
                let f = CenteredField::new(spec, data_vec).map_err(err)?;
                data::write_pgm(out.join(format!("{stem}.pgm")), &f).map_err(err)?;
            }
            2 => {
                let spec =
                    GridSpec::unit(&[dims[0] as usize, dims[1] as usize]).map_err(err)?;
                let f = CenteredField::new(spec, data_vec).map_err(err)?;
                data::write_pgm(out.join(format!("{stem}.pgm")), &f).map_err(err)?;
            }
            3 => {
                let frames = dims[0] as usize;
                let per = (dims[1] * dims[2]) as usize;
                let spec =
                    GridSpec::unit(&[dims[1] as usize, dims[2] as usize]).map_err(err)?;
                for i in 0..frames {
                    let f = CenteredField::new(
                        spec.clone(),
                        data_vec[i * per..(i + 1) * per].to_vec(),
                    )
                    .map_err(err)?;
                    data::write_pgm(out.join(format!("{stem}_f{i:03}.pgm")), &f).map_err(err)?;
                }
            }
            r => bail!("cannot render rank-{r} tensor {}", path.display()),
        }
    }
    println!("rendered frames into {}", out.display());
    Ok(())
}
