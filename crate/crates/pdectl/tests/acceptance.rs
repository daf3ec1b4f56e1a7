//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line. Run with
//! `cargo test -p pdectl --test acceptance -- --nocapture`.

mod common;

use common::*;
use pdectl::autodiff::{ops, Tape, Value, VarId};
use pdectl::control::{
    count_ops, refine_execute, staggered_execute, BurgerEnv, BurgerPredictor, cfe_chain,
    hierarchical_predict, Scheme, StubEnv,
};
use pdectl::data::{
    draw_burger_example, gen_burger, ExperimentKind, ExperimentManifest,
};
use pdectl::fields::{divergence, CenteredField, GridSpec, StaggeredField};
use pdectl::nets::{init_params, NetSpec, OPModelBank, TapedParams};
use pdectl::physics::{
    fluid_step_plain, BurgerState, DomainSpec, FluidState, PoissonConfig,
};
use pdectl::optimize::{
    evaluate_controls, force_loss_centered, multiscale_shoot, single_shoot,
    warm_start_from_forces, ShootTask, ShootingProblem,
};

fn pass(criterion: usize, detail: String) {
    println!("criterion {criterion}: PASS - {detail}");
}

/// Criterion 1: reverse-mode vector-Jacobian products of every
/// differentiable primitive match central finite differences (h = 1e-6)
/// with relative error at most 1e-4 on randomized inputs up to 16x16.
#[test]
fn criterion_1_gradient_correctness() {
    let g2 = GridSpec::unit(&[9, 8]).unwrap();
    let g16 = GridSpec::unit(&[16, 16]).unwrap();
    let g1 = GridSpec::unit(&[14]).unwrap();
    let mut worst_overall: (f64, &str) = (0.0, "none");
    let mut check = |name: &'static str, worst: f64| {
        assert!(worst <= 1e-4, "{name}: rel err {worst}");
        if worst > worst_overall.0 {
            worst_overall = (worst, name);
        }
    };

    check("gradient", centered_op_vjp(&g2, 10, |t, x| ops::gradient(t, x).unwrap()));
    check("divergence", staggered_op_vjp(&g2, 11, |t, x| ops::divergence(t, x).unwrap()));
    check("curl2d", centered_op_vjp(&g2, 12, |t, x| ops::curl2d(t, x).unwrap()));
    check("laplace", centered_op_vjp(&g2, 13, |t, x| ops::laplace(t, x).unwrap()));
    check("blur", centered_op_vjp(&g2, 14, |t, x| ops::blur(t, x, 1.5).unwrap()));
    check("gradient-1d", centered_op_vjp(&g1, 15, |t, x| ops::gradient(t, x).unwrap()));
    check("advect", advect_vjp(&g16, 16));
    check("conv+residual+dense", network_vjp(17));
    check("burger_step", burger_chain_vjp(&GridSpec::unit(&[16]).unwrap(), 18));
    check("fluid_step", fluid_step_vjp(&GridSpec::unit(&[8, 8]).unwrap(), 19));
    check("pressure_solve", pressure_adjoint_vjp(&g16, 20));

    pass(1, format!("worst relative error {:.2e} ({})", worst_overall.0, worst_overall.1));
}

/// Criterion 2: measured invocation counts equal the closed forms for
/// n in {2, 4, 8, 16, 32} under every scheme.
#[test]
fn criterion_2_invocation_counts() {
    let mut env = StubEnv;
    for n in [2usize, 4, 8, 16, 32] {
        let chain = cfe_chain(&mut env, (), &(), n).unwrap();
        assert_eq!(chain.trace.counts(), count_ops(n, Scheme::Chain).unwrap(), "chain n={n}");
        chain.trace.validate().unwrap();

        let stag = staggered_execute(&mut env, (), &(), n).unwrap();
        assert_eq!(
            stag.trace.counts(),
            count_ops(n, Scheme::Staggered).unwrap(),
            "staggered n={n}"
        );
        stag.trace.validate().unwrap();

        let refined = refine_execute(&mut env, (), &(), n).unwrap();
        assert_eq!(
            refined.trace.counts(),
            count_ops(n, Scheme::Refined).unwrap(),
            "refined n={n}"
        );
        refined.trace.validate().unwrap();

        let (_, hier) = hierarchical_predict(&mut env, &(), &(), n).unwrap();
        assert_eq!(hier.counts().0, n - 1, "hierarchical n={n}");
    }
    pass(2, "all scheme traces match the closed-form counts for n in {2,4,8,16,32}".into());
}

/// Criterion 3: the post-step interior divergence stays at or below 1e-5
/// across 100 steps from random 32x32 states, closed box and open top.
#[test]
fn criterion_3_incompressibility() {
    let g = GridSpec::unit(&[32, 32]).unwrap();
    let cfg = PoissonConfig::new(20000, 1e-6).unwrap();
    let mut worst = 0.0f64;
    for (label, dom) in [
        ("closed", DomainSpec::closed_box(&g).with_buoyancy(vec![0.0, -0.05])),
        (
            "open-top",
            DomainSpec::closed_box(&g)
                .with_open_side(1, true)
                .with_buoyancy(vec![0.0, -0.05]),
        ),
    ] {
        let rho = blob2(&g, 16.0, 12.0, 4.0);
        let v0 = seeded_staggered(&g, 42).map(|v| 0.5 * v);
        let mut s = FluidState::new(rho, v0).unwrap();
        let f = StaggeredField::zeros(&g);
        for step in 0..100 {
            s = fluid_step_plain(&s, &f, &dom, 0.5, &cfg).unwrap();
            let d = divergence(&s.velocity);
            let max = d
                .data()
                .iter()
                .enumerate()
                .filter(|(i, _)| !dom.is_solid(*i))
                .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
            assert!(max <= 1e-5, "{label}: divergence {max} at step {step}");
            worst = worst.max(max);
        }
    }
    pass(3, format!("max interior divergence over 200 steps: {worst:.2e}"));
}

/// Criterion 4: reconstructions that use the exact final-step rule land on
/// the target to 1e-10 in the max norm, on 20 random cases.
#[test]
fn criterion_4_terminal_exact_match() {
    let mut m = ExperimentManifest::desk_default(ExperimentKind::Burger);
    m.seed = 99;
    m.steps = 8;
    let mut worst = 0.0f64;
    for k in 0..20 {
        let sample = draw_burger_example(&m, k).unwrap();
        let target = sample.states[8].clone();
        let mut env = BurgerEnv::analytic(BurgerPredictor::Average, m.dt, m.nu);
        let traj = if k % 2 == 0 {
            staggered_execute(&mut env, BurgerState::new(sample.states[0].clone()), &target, 8)
                .unwrap()
        } else {
            refine_execute(&mut env, BurgerState::new(sample.states[0].clone()), &target, 8)
                .unwrap()
        };
        let err = traj
            .states
            .last()
            .unwrap()
            .u
            .data()
            .iter()
            .zip(target.data())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err <= 1e-10, "case {k}: terminal error {err}");
        worst = worst.max(err);
    }
    pass(4, format!("worst terminal max-norm error {worst:.2e} over 20 cases"));
}

/// Criterion 5: single shooting (32 cells, 32 steps, 300 iterations,
/// learning rate 0.01) reaches a total objective at or below the
/// constant-force reference trajectory's objective on at least 90% of 20
/// seeded cases.
#[test]
fn criterion_5_shooting_beats_reference() {
    let mut m = ExperimentManifest::desk_default(ExperimentKind::Burger);
    m.seed = 5;
    let mut wins = 0;
    let mut ratios = Vec::new();
    for k in 0..20 {
        let sample = draw_burger_example(&m, k).unwrap();
        let problem = ShootingProblem {
            task: ShootTask::Burger {
                initial: sample.states[0].clone(),
                target: sample.states[32].clone(),
                dt: m.dt,
                nu: m.nu,
            },
            horizon: 32,
            alpha: 1.0,
            blur_r: None,
        };
        // Reference objective: the constant driving force repeated each step.
        let gt_controls: Vec<Vec<CenteredField>> =
            (0..31).map(|_| vec![sample.force.clone()]).collect();
        let gt = evaluate_controls(&problem, &gt_controls).unwrap();

        let mut rng = pdectl::data::example_rng(500 + k as u64, 0);
        let init = problem.noise_controls(0.01, &mut rng);
        let out = single_shoot(&problem, 300, 0.01, init).unwrap();
        let final_total = out.history.last().unwrap().total;
        ratios.push(final_total / gt.total);
        if final_total <= gt.total {
            wins += 1;
        }
    }
    assert!(wins >= 18, "shooting beat the reference on only {wins}/20 cases ({ratios:?})");
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    pass(5, format!("beat the reference on {wins}/20 cases, mean objective ratio {mean_ratio:.3}"));
}

/// Criterion 7: coarse-to-fine shooting on a 32x32 shape transition
/// (horizon 8, schedule 1/4 -> 1/2 -> 1) cuts the observation loss to half
/// its initial value within 500 total iterations on 5 fixed seeds.
#[test]
fn criterion_7_multiscale_shape_transition() {
    let mut m = ExperimentManifest::desk_default(ExperimentKind::FluidShapes);
    m.seed = 7;
    let mut worst_ratio = 0.0f64;
    for k in 0..5 {
        let pairs = pdectl::data::draw_fluid_shapes_example(&m, k).unwrap();
        let pair = &pairs[0];
        let g = pair.rho0.spec().clone();
        let problem = ShootingProblem {
            task: ShootTask::FluidStream {
                initial: FluidState::at_rest(pair.rho0.clone()),
                target: pair.target.clone(),
                dom: DomainSpec::closed_box(&g),
                dt: 1.0,
                cfg: PoissonConfig::new(4000, 1e-5).unwrap(),
            },
            horizon: 8,
            alpha: 1e-4,
            blur_r: Some(2.0),
        };
        let mut rng = pdectl::data::example_rng(700 + k as u64, 0);
        let init = problem.noise_controls(0.01, &mut rng);
        let initial_obs = evaluate_controls(&problem, &init).unwrap().observation_loss;
        let out = multiscale_shoot(&problem, &[0.25, 0.5, 1.0], &[167, 167, 166], 0.8, 0.7, 700 + k as u64)
            .unwrap();
        let final_obs = out.history.last().unwrap().observation_loss;
        let ratio = final_obs / initial_obs;
        assert!(
            ratio <= 0.5,
            "seed {k}: observation loss only fell to {ratio:.3} of its initial value"
        );
        worst_ratio = worst_ratio.max(ratio);
    }
    pass(7, format!("worst observation-loss ratio {worst_ratio:.3} over 5 seeds"));
}

/// Criterion 8: warm-starting the optimizer from a reconstructed
/// trajectory's forces ends with a force loss at or below the cold start
/// on at least 7 of 10 paired seeds, after equal iterations.
#[test]
fn criterion_8_warm_start_improves_shooting() {
    let mut m = ExperimentManifest::desk_default(ExperimentKind::Burger);
    m.seed = 8;
    let mut wins = 0;
    for k in 0..10 {
        let sample = draw_burger_example(&m, k).unwrap();
        let target = sample.states[32].clone();
        let problem = ShootingProblem {
            task: ShootTask::Burger {
                initial: sample.states[0].clone(),
                target: target.clone(),
                dt: m.dt,
                nu: m.nu,
            },
            horizon: 32,
            alpha: 1.0,
            blur_r: None,
        };
        // Network trajectory: hierarchical reconstruction with the
        // zero-initialized (average-predicting) bank and the closed-form
        // estimator.
        let spec = NetSpec::desk_default(1, 2, 1);
        let bank = OPModelBank::initialized(32, &spec, false, 1234).unwrap();
        let mut env = BurgerEnv::analytic(BurgerPredictor::Bank(&bank), m.dt, m.nu);
        let traj =
            staggered_execute(&mut env, BurgerState::new(sample.states[0].clone()), &target, 32)
                .unwrap();
        let forces: Vec<CenteredField> = traj.forces;
        let warm_init = warm_start_from_forces(&problem, &forces).unwrap();
        let warm = single_shoot(&problem, 120, 0.01, warm_init).unwrap();

        let mut rng = pdectl::data::example_rng(800 + k as u64, 0);
        let cold_init = problem.noise_controls(0.01, &mut rng);
        let cold = single_shoot(&problem, 120, 0.01, cold_init).unwrap();

        let wf = warm.history.last().unwrap().force_loss;
        let cf = cold.history.last().unwrap().force_loss;
        if wf <= cf {
            wins += 1;
        }
    }
    assert!(wins >= 7, "warm start won only {wins}/10 pairs");
    pass(8, format!("warm start at or below cold start on {wins}/10 pairs"));
}

/// Criterion 9: the tensor format round-trips bit-exactly, dataset
/// regeneration under a fixed seed is checksum-identical, and evaluation
/// tables are byte-identical across reruns.
#[test]
fn criterion_9_format_and_determinism() {
    // Bit-exact tensor round trip across ranks and sizes.
    let dir = tmpdir("acceptance_fmt");
    let mut rng = pdectl::data::example_rng(9, 0);
    use rand::RngExt;
    for dims in [vec![256u64], vec![17, 23], vec![3, 16, 16]] {
        let n: u64 = dims.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1e6..1e6)).collect();
        let path = dir.join(format!("t{}.pdtf", dims.len()));
        pdectl::data::save_tensor(&path, &dims, &data).unwrap();
        let (d2, v2) = pdectl::data::load_tensor(&path).unwrap();
        assert_eq!(d2, dims);
        assert!(v2.iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    // Dataset regeneration is checksum-identical.
    let mut m = ExperimentManifest::desk_default(ExperimentKind::Burger);
    m.train_count = 3;
    m.test_count = 2;
    m.grid_dims = vec![16];
    m.steps = 8;
    m.seed = 321;
    let d1 = tmpdir("acceptance_ds1");
    let d2 = tmpdir("acceptance_ds2");
    let m1 = gen_burger(&m, &d1).unwrap();
    let m2 = gen_burger(&m, &d2).unwrap();
    assert_eq!(m1.files, m2.files, "regenerated checksums differ");

    // Evaluation over the test split is byte-identical across reruns.
    let table = |dir: &std::path::Path| -> String {
        let m = ExperimentManifest::load_verified(dir).unwrap();
        let mut rows = String::from("example,force,obs\n");
        for k in m.train_count..m.example_count() {
            let s = pdectl::data::load_burger_example(&m, dir, k).unwrap();
            let mut env = BurgerEnv::analytic(BurgerPredictor::Average, m.dt, m.nu);
            let traj =
                staggered_execute(&mut env, BurgerState::new(s.states[0].clone()), s.target(), 8)
                    .unwrap();
            let force = force_loss_centered(&traj.forces, m.dt);
            let obs = pdectl::optimize::observation_loss(
                &traj.states.last().unwrap().u,
                s.target(),
                None,
            )
            .unwrap();
            rows.push_str(&format!("{k},{force:.12e},{obs:.12e}\n"));
        }
        rows
    };
    let t1 = table(&d1);
    let t2 = table(&d1);
    assert_eq!(t1.as_bytes(), t2.as_bytes(), "evaluation not byte-identical");

    std::fs::remove_dir_all(&d1).ok();
    std::fs::remove_dir_all(&d2).ok();
    std::fs::remove_dir_all(&dir).ok();
    pass(9, "tensor round-trip bit-exact; regeneration checksum-identical; tables byte-identical".into());
}
