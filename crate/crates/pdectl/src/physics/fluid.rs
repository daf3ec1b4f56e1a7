//! Incompressible 2D flow with a passively advected smoke density.
//! One step transports the density, self-advects the velocity, applies
//! buoyancy against the fresh density, adds the (masked) control force and
//! projects the result onto the divergence-free space.

use super::domain::{DomainSpec, PoissonConfig};
use super::poisson::{project, project_plain};
use crate::autodiff::{ops, Tape, VarId};
use crate::error::{Error, Result};
use crate::fields::{
    advect_centered, advect_staggered, curl2d, resample_to_faces, CenteredField, StaggeredField,
};

#[derive(Debug, Clone)]
pub struct FluidState {
    pub density: CenteredField,
    pub velocity: StaggeredField,
    pub time: usize,
}

impl FluidState {
    pub fn new(density: CenteredField, velocity: StaggeredField) -> Result<Self> {
        if density.spec().dims() != velocity.spec().dims() {
            return Err(Error::ShapeMismatch(
                "density and velocity grids differ".into(),
            ));
        }
        Ok(Self {
            density,
            velocity,
            time: 0,
        })
    }

    pub fn at_rest(density: CenteredField) -> Self {
        let velocity = StaggeredField::zeros(density.spec());
        Self {
            density,
            velocity,
            time: 0,
        }
    }
}

fn scale_faces(v: &StaggeredField, factors: &[f64]) -> StaggeredField {
    let mut out = v.clone();
    for k in 0..out.components().len() {
        let f = factors[k];
        for x in out.component_mut(k).iter_mut() {
            *x *= f;
        }
    }
    out
}

/// One plain (untaped) step.
pub fn fluid_step_plain(
    state: &FluidState,
    force: &StaggeredField,
    dom: &DomainSpec,
    dt: f64,
    cfg: &PoissonConfig,
) -> Result<FluidState> {
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let keep = dom.face_keep_masks();
    let v_in = {
        let mut v = state.velocity.clone();
        for k in 0..v.components().len() {
            for (x, m) in v.component_mut(k).iter_mut().zip(&keep[k]) {
                *x *= m;
            }
        }
        v
    };
    let density = advect_centered(&state.density, &v_in, dt);
    let v_adv = advect_staggered(&v_in, &v_in, dt);
    let rho_faces = resample_to_faces(&density);
    let buoy = scale_faces(&rho_faces, dom.buoyancy());
    let v_b = v_adv.zip(&buoy, |a, b| a - b);
    let control = dom.control_face_masks();
    let mut fm = force.clone();
    for k in 0..fm.components().len() {
        for (x, m) in fm.component_mut(k).iter_mut().zip(&control[k]) {
            *x *= m;
        }
    }
    let v_f = v_b.zip(&fm, |a, f| a + dt * f);
    let velocity = project_plain(&v_f, dom, cfg)?;
    Ok(FluidState {
        density,
        velocity,
        time: state.time + 1,
    })
}

/// One taped, fully differentiable step; returns the new density and
/// velocity variables.
pub fn fluid_step(
    tape: &mut Tape,
    density: VarId,
    velocity: VarId,
    force: VarId,
    dom: &DomainSpec,
    dt: f64,
    cfg: &PoissonConfig,
) -> Result<(VarId, VarId)> {
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    let keep = dom.face_keep_masks();
    let v_in = ops::mask_staggered(tape, velocity, keep)?;
    let rho = ops::advect_centered(tape, density, v_in, dt)?;
    let v_adv = ops::advect_staggered(tape, v_in, v_in, dt)?;
    let rho_faces = ops::resample_to_faces(tape, rho)?;
    let buoy = scale_components(tape, rho_faces, dom.buoyancy().to_vec())?;
    let v_b = ops::sub(tape, v_adv, buoy)?;
    let fm = ops::mask_staggered(tape, force, dom.control_face_masks())?;
    let v_f = ops::add_scaled(tape, v_b, fm, dt)?;
    let v_out = project(tape, v_f, dom, cfg)?;
    Ok((rho, v_out))
}

/// Per-component scaling of a staggered field (taped, linear).
pub fn scale_components(tape: &mut Tape, v: VarId, factors: Vec<f64>) -> Result<VarId> {
    let vv = tape.value(v).as_staggered()?;
    if factors.len() != vv.components().len() {
        return Err(Error::ShapeMismatch("factor count mismatch".into()));
    }
    let out = scale_faces(vv, &factors);
    tape.record(
        vec![v],
        crate::autodiff::Value::Staggered(out),
        Box::new(move |args| {
            let g = args.cot.as_staggered()?;
            Ok(vec![crate::autodiff::Value::Staggered(scale_faces(
                g, &factors,
            ))])
        }),
    )
}

/// Divergence-free control force from a scalar stream potential.
pub fn stream_force_plain(phi: &CenteredField) -> Result<StaggeredField> {
    curl2d(phi)
}

/// Taped variant of [`stream_force_plain`].
pub fn stream_force(tape: &mut Tape, phi: VarId) -> Result<VarId> {
    ops::curl2d(tape, phi)
}

/// Staggered control force from cell-centered control velocities, restricted
/// to the control region: the two channels are masked at cell level, then
/// resampled to faces and face-masked again.
pub fn control_velocity_force(
    tape: &mut Tape,
    vx: VarId,
    vy: VarId,
    dom: &DomainSpec,
) -> Result<VarId> {
    let cmask: Vec<f64> = dom
        .control_mask()
        .map(|m| m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .unwrap_or_else(|| vec![1.0; dom.grid().cell_count()]);
    let vxm = ops::mask_centered(tape, vx, cmask.clone())?;
    let vym = ops::mask_centered(tape, vy, cmask)?;
    let fx = ops::resample_to_faces(tape, vxm)?;
    let fy = ops::resample_to_faces(tape, vym)?;
    // Take the matching component of each resampled field.
    let fx_only = scale_components(tape, fx, vec![1.0, 0.0])?;
    let fy_only = scale_components(tape, fy, vec![0.0, 1.0])?;
    let f = ops::add(tape, fx_only, fy_only)?;
    ops::mask_staggered(tape, f, dom.control_face_masks())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Value;
    use crate::fields::{divergence, GridSpec};
    use crate::testutil::{check_vjp, seeded_centered, seeded_staggered, staggered_from_flat};

    fn blob(g: &GridSpec, cx: f64, cy: f64, s: f64) -> CenteredField {
        CenteredField::from_fn(g, |p| {
            (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (2.0 * s * s)).exp()
        })
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let s = FluidState::at_rest(CenteredField::zeros(&g));
        let f = StaggeredField::zeros(&g);
        let out = fluid_step_plain(&s, &f, &dom, 0.5, &PoissonConfig::default()).unwrap();
        assert!(out.density.data().iter().all(|&v| v == 0.0));
        assert!(out.velocity.components().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn buoyancy_lifts_smoke() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let dom = DomainSpec::closed_box(&g).with_buoyancy(vec![0.0, -0.1]);
        let s = FluidState::at_rest(blob(&g, 8.0, 6.0, 2.0));
        let f = StaggeredField::zeros(&g);
        let out = fluid_step_plain(&s, &f, &dom, 1.0, &PoissonConfig::default()).unwrap();
        let total_vy: f64 = out.velocity.component(1).iter().sum();
        assert!(total_vy > 0.0, "net vertical motion {total_vy} not upward");
    }

    #[test]
    fn divergence_stays_small_after_steps() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let dom = DomainSpec::closed_box(&g).with_buoyancy(vec![0.0, -0.05]);
        let cfg = PoissonConfig::new(8000, 1e-6).unwrap();
        let mut s = FluidState::new(blob(&g, 8.0, 8.0, 3.0), seeded_staggered(&g, 2)).unwrap();
        let f = StaggeredField::zeros(&g);
        for _ in 0..5 {
            s = fluid_step_plain(&s, &f, &dom, 0.5, &cfg).unwrap();
            let d = divergence(&s.velocity);
            let max = d.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max <= 1e-5, "divergence {max}");
            assert!(s.density.data().iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn mass_roughly_conserved_in_closed_box() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let cfg = PoissonConfig::default();
        let rho0 = blob(&g, 8.0, 8.0, 2.5);
        let m0 = rho0.sum();
        let mut s = FluidState::new(rho0, seeded_staggered(&g, 4).map(|v| 0.3 * v)).unwrap();
        let f = StaggeredField::zeros(&g);
        for _ in 0..10 {
            s = fluid_step_plain(&s, &f, &dom, 0.5, &cfg).unwrap();
        }
        let m1 = s.density.sum();
        assert!((m1 - m0).abs() / m0 < 0.15, "mass drifted {m0} -> {m1}");
        assert!(s.density.data().iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn obstacle_faces_are_zero_and_smoke_stays_out() {
        let g = GridSpec::unit(&[12, 12]).unwrap();
        let mut obstacle = vec![false; 144];
        for i in 5..8 {
            for j in 5..8 {
                obstacle[i * 12 + j] = true;
            }
        }
        let dom = DomainSpec::new(
            &g,
            vec![[super::super::domain::BoundaryKind::Closed; 2]; 2],
            obstacle.clone(),
            None,
            vec![0.0, 0.0],
        )
        .unwrap();
        let cfg = PoissonConfig::default();
        let mut rho0 = blob(&g, 3.0, 3.0, 1.5);
        for (i, &o) in obstacle.iter().enumerate() {
            if o {
                rho0.data_mut()[i] = 0.0;
            }
        }
        let mut s = FluidState::new(rho0, seeded_staggered(&g, 6).map(|v| 0.4 * v)).unwrap();
        let f = StaggeredField::zeros(&g);
        for _ in 0..6 {
            s = fluid_step_plain(&s, &f, &dom, 0.5, &cfg).unwrap();
            let masks = dom.face_keep_masks();
            for k in 0..2 {
                for (v, m) in s.velocity.component(k).iter().zip(&masks[k]) {
                    if *m == 0.0 {
                        assert_eq!(*v, 0.0, "masked face has velocity");
                    }
                }
            }
            for (i, &o) in obstacle.iter().enumerate() {
                if o {
                    assert!(s.density.data()[i].abs() < 1e-12, "smoke inside obstacle");
                }
            }
        }
    }

    #[test]
    fn stream_force_is_divergence_free() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        // Constant potential produces no force.
        let f = stream_force_plain(&CenteredField::constant(&g, 4.0)).unwrap();
        assert!(f.components().iter().flatten().all(|&v| v == 0.0));

        let phi = seeded_centered(&g, 11);
        let f = stream_force_plain(&phi).unwrap();
        let d = divergence(&f);
        for i in 1..15 {
            for j in 1..15 {
                assert!(d.data()[i * 16 + j].abs() <= 1e-12);
            }
        }

        // Centered bump: componentwise face sums telescope to zero.
        let phi = blob(&g, 8.0, 8.0, 2.0);
        let f = stream_force_plain(&phi).unwrap();
        for k in 0..2 {
            let total: f64 = f.component(k).iter().sum();
            assert!(total.abs() <= 1e-12, "component {k} sums to {total}");
        }
    }

    #[test]
    fn taped_step_matches_plain_step_bitwise() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let dom = DomainSpec::closed_box(&g).with_buoyancy(vec![0.0, -0.08]);
        let cfg = PoissonConfig::new(4000, 1e-8).unwrap();
        let rho0 = blob(&g, 4.0, 4.0, 1.5);
        let v0 = seeded_staggered(&g, 20).map(|v| 0.3 * v);
        let f0 = seeded_staggered(&g, 21).map(|v| 0.2 * v);

        let plain = fluid_step_plain(
            &FluidState::new(rho0.clone(), v0.clone()).unwrap(),
            &f0,
            &dom,
            0.5,
            &cfg,
        )
        .unwrap();

        let mut tape = Tape::new();
        let r = tape.leaf(rho0);
        let v = tape.leaf(v0);
        let f = tape.leaf(f0);
        let (r1, v1) = fluid_step(&mut tape, r, v, f, &dom, 0.5, &cfg).unwrap();
        assert_eq!(
            tape.value(r1).as_centered().unwrap().data(),
            plain.density.data()
        );
        for k in 0..2 {
            assert_eq!(
                tape.value(v1).as_staggered().unwrap().component(k),
                plain.velocity.component(k)
            );
        }
    }

    #[test]
    fn step_gradients_match_finite_differences() {
        let g = GridSpec::unit(&[6, 6]).unwrap();
        let dom = DomainSpec::closed_box(&g).with_buoyancy(vec![0.0, -0.05]);
        let cfg = PoissonConfig::new(8000, 1e-12).unwrap();
        let rho0 = blob(&g, 3.0, 3.0, 1.2);
        let v0 = seeded_staggered(&g, 30).map(|v| 0.2 * v);
        let f0 = seeded_staggered(&g, 31).map(|v| 0.2 * v);
        let nf: usize = f0.components().iter().map(|c| c.len()).sum();
        let dt = 0.5;

        let g2 = g.clone();
        let dom2 = dom.clone();
        let rho1 = rho0.clone();
        let v1 = v0.clone();
        let fwd = move |x: &[f64]| {
            let force = staggered_from_flat(&g2, &x[..nf]);
            let s = FluidState::new(rho1.clone(), v1.clone()).unwrap();
            let out = fluid_step_plain(&s, &force, &dom2, dt, &cfg).unwrap();
            let obs: f64 = out.density.data().iter().map(|v| v * v).sum::<f64>()
                + out
                    .velocity
                    .components()
                    .iter()
                    .flatten()
                    .map(|v| v * v)
                    .sum::<f64>();
            vec![obs]
        };
        let rho2 = rho0;
        let v2 = v0;
        let f2 = f0.clone();
        let vjp = move |cot: &[f64]| {
            let mut tape = Tape::new();
            let r = tape.leaf(rho2.clone());
            let v = tape.leaf(v2.clone());
            let f = tape.leaf(f2.clone());
            let (r1, vo) = fluid_step(&mut tape, r, v, f, &dom, dt, &cfg).unwrap();
            let sq_r = ops::mul(&mut tape, r1, r1).unwrap();
            let sq_v = ops::mul(&mut tape, vo, vo).unwrap();
            let sr = ops::sum(&mut tape, sq_r).unwrap();
            let sv = ops::sum(&mut tape, sq_v).unwrap();
            let loss = ops::add(&mut tape, sr, sv).unwrap();
            let map = tape
                .backward_with_seed(loss, Value::scalar(cot[0]))
                .unwrap();
            map.get(f).unwrap().flatten()
        };
        let x = f0.components().concat();
        let worst = check_vjp(&x, &fwd, &vjp, 6, 32, 1e-6);
        assert!(worst <= 1e-4, "fluid step force gradient rel err {worst}");
    }
}
