//! Pressure Poisson problem on a masked domain, solved with conjugate
//! gradients. The system matrix is symmetric positive (semi-)definite, so
//! the reverse-mode adjoint of the solve is another solve of the same
//! system; the taped operation records exactly that rule.

use super::domain::{BoundaryKind, DomainSpec, PoissonConfig};
use crate::autodiff::{ops, Tape, Value, VarId};
use crate::error::{Error, Result};
use crate::fields::{divergence, CenteredField, StaggeredField};

/// Pressure gradient respecting walls and obstacles: faces touching solids
/// or closed walls carry zero; faces on open boundaries difference against a
/// zero ghost value.
pub fn masked_gradient(p: &CenteredField, dom: &DomainSpec) -> StaggeredField {
    let g = p.spec();
    let mut out = StaggeredField::zeros(g);
    let solid = |c: usize| dom.is_solid(c);
    match g.rank() {
        1 => {
            let n = g.dims()[0];
            let inv = 1.0 / g.spacing()[0];
            let c = out.component_mut(0);
            for i in 0..=n {
                c[i] = match (i, i == n) {
                    (0, _) => match dom.boundaries()[0][0] {
                        BoundaryKind::Open if !solid(0) => p.data()[0] * inv,
                        _ => 0.0,
                    },
                    (_, true) => match dom.boundaries()[0][1] {
                        BoundaryKind::Open if !solid(n - 1) => -p.data()[n - 1] * inv,
                        _ => 0.0,
                    },
                    _ => {
                        if solid(i - 1) || solid(i) {
                            0.0
                        } else {
                            (p.data()[i] - p.data()[i - 1]) * inv
                        }
                    }
                };
            }
        }
        2 => {
            let [n0, n1] = [g.dims()[0], g.dims()[1]];
            let inv0 = 1.0 / g.spacing()[0];
            let inv1 = 1.0 / g.spacing()[1];
            {
                let cx = out.component_mut(0);
                for i in 0..=n0 {
                    for j in 0..n1 {
                        let idx = i * n1 + j;
                        cx[idx] = if i == 0 {
                            match dom.boundaries()[0][0] {
                                BoundaryKind::Open if !solid(j) => p.data()[j] * inv0,
                                _ => 0.0,
                            }
                        } else if i == n0 {
                            match dom.boundaries()[0][1] {
                                BoundaryKind::Open if !solid((n0 - 1) * n1 + j) => {
                                    -p.data()[(n0 - 1) * n1 + j] * inv0
                                }
                                _ => 0.0,
                            }
                        } else if solid((i - 1) * n1 + j) || solid(i * n1 + j) {
                            0.0
                        } else {
                            (p.data()[i * n1 + j] - p.data()[(i - 1) * n1 + j]) * inv0
                        };
                    }
                }
            }
            {
                let cy = out.component_mut(1);
                for i in 0..n0 {
                    for j in 0..=n1 {
                        let idx = i * (n1 + 1) + j;
                        cy[idx] = if j == 0 {
                            match dom.boundaries()[1][0] {
                                BoundaryKind::Open if !solid(i * n1) => p.data()[i * n1] * inv1,
                                _ => 0.0,
                            }
                        } else if j == n1 {
                            match dom.boundaries()[1][1] {
                                BoundaryKind::Open if !solid(i * n1 + n1 - 1) => {
                                    -p.data()[i * n1 + n1 - 1] * inv1
                                }
                                _ => 0.0,
                            }
                        } else if solid(i * n1 + j - 1) || solid(i * n1 + j) {
                            0.0
                        } else {
                            (p.data()[i * n1 + j] - p.data()[i * n1 + j - 1]) * inv1
                        };
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Transpose of [`masked_gradient`].
pub fn masked_gradient_transpose(g: &StaggeredField, dom: &DomainSpec) -> CenteredField {
    let spec = g.spec();
    let mut out = CenteredField::zeros(spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            let inv = 1.0 / spec.spacing()[0];
            let c = g.component(0);
            for i in 0..=n {
                let v = c[i];
                if v == 0.0 {
                    continue;
                }
                if i == 0 {
                    if dom.boundaries()[0][0] == BoundaryKind::Open && !dom.is_solid(0) {
                        out.data_mut()[0] += v * inv;
                    }
                } else if i == n {
                    if dom.boundaries()[0][1] == BoundaryKind::Open && !dom.is_solid(n - 1) {
                        out.data_mut()[n - 1] -= v * inv;
                    }
                } else if !(dom.is_solid(i - 1) || dom.is_solid(i)) {
                    out.data_mut()[i] += v * inv;
                    out.data_mut()[i - 1] -= v * inv;
                }
            }
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let inv0 = 1.0 / spec.spacing()[0];
            let inv1 = 1.0 / spec.spacing()[1];
            let cx = g.component(0);
            for i in 0..=n0 {
                for j in 0..n1 {
                    let v = cx[i * n1 + j];
                    if v == 0.0 {
                        continue;
                    }
                    if i == 0 {
                        if dom.boundaries()[0][0] == BoundaryKind::Open && !dom.is_solid(j) {
                            out.data_mut()[j] += v * inv0;
                        }
                    } else if i == n0 {
                        let c = (n0 - 1) * n1 + j;
                        if dom.boundaries()[0][1] == BoundaryKind::Open && !dom.is_solid(c) {
                            out.data_mut()[c] -= v * inv0;
                        }
                    } else if !(dom.is_solid((i - 1) * n1 + j) || dom.is_solid(i * n1 + j)) {
                        out.data_mut()[i * n1 + j] += v * inv0;
                        out.data_mut()[(i - 1) * n1 + j] -= v * inv0;
                    }
                }
            }
            let cy = g.component(1);
            for i in 0..n0 {
                for j in 0..=n1 {
                    let v = cy[i * (n1 + 1) + j];
                    if v == 0.0 {
                        continue;
                    }
                    if j == 0 {
                        if dom.boundaries()[1][0] == BoundaryKind::Open && !dom.is_solid(i * n1) {
                            out.data_mut()[i * n1] += v * inv1;
                        }
                    } else if j == n1 {
                        let c = i * n1 + n1 - 1;
                        if dom.boundaries()[1][1] == BoundaryKind::Open && !dom.is_solid(c) {
                            out.data_mut()[c] -= v * inv1;
                        }
                    } else if !(dom.is_solid(i * n1 + j - 1) || dom.is_solid(i * n1 + j)) {
                        out.data_mut()[i * n1 + j] += v * inv1;
                        out.data_mut()[i * n1 + j - 1] -= v * inv1;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Apply the (positive semi-definite) pressure matrix: the negated
/// divergence of the masked gradient, with identity rows on obstacle cells.
fn apply_matrix(p: &CenteredField, dom: &DomainSpec) -> CenteredField {
    let grad = masked_gradient(p, dom);
    let div = divergence(&grad);
    let mut out = div.map(|v| -v);
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        if dom.is_solid(i) {
            *o = p.data()[i];
        }
    }
    out
}

fn fluid_mean(f: &CenteredField, dom: &DomainSpec) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &v) in f.data().iter().enumerate() {
        if !dom.is_solid(i) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn subtract_fluid_mean(f: &mut CenteredField, dom: &DomainSpec) {
    let m = fluid_mean(f, dom);
    for (i, v) in f.data_mut().iter_mut().enumerate() {
        if !dom.is_solid(i) {
            *v -= m;
        }
    }
}

/// Solve the pressure system for the given divergence field.
///
/// With only closed walls the matrix has a constant nullspace; the
/// right-hand side is projected to zero mean over fluid cells and the
/// solution pinned the same way. Obstacle cells carry zero pressure.
pub fn pressure_solve_plain(
    div: &CenteredField,
    dom: &DomainSpec,
    cfg: &PoissonConfig,
) -> Result<CenteredField> {
    let pure_neumann = !dom.has_open_side();
    // The CG matrix is the negated Laplacian (positive semi-definite), so
    // the right-hand side flips sign; the returned p then satisfies
    // div(grad p) = div.
    let mut b = div.map(|v| -v);
    for (i, v) in b.data_mut().iter_mut().enumerate() {
        if dom.is_solid(i) {
            *v = 0.0;
        }
    }
    if pure_neumann {
        subtract_fluid_mean(&mut b, dom);
    }

    let b_norm = b.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        return Ok(CenteredField::zeros(div.spec()));
    }

    let mut x = CenteredField::zeros(div.spec());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rs: f64 = r.data().iter().map(|v| v * v).sum();

    let target2 = cfg.tolerance * b_norm;
    let target_inf = 10.0 * cfg.tolerance;
    let converged = |r: &CenteredField, rs: f64| {
        rs.sqrt() <= target2
            && r.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) <= target_inf
    };

    if converged(&r, rs) {
        return Ok(x);
    }

    let mut final_res = rs.sqrt();
    for iter in 0..cfg.max_iterations {
        let ap = apply_matrix(&p, dom);
        let pap: f64 = p.data().iter().zip(ap.data()).map(|(a, b)| a * b).sum();
        if pap.abs() < 1e-300 {
            break;
        }
        let alpha = rs / pap;
        for (xi, pi) in x.data_mut().iter_mut().zip(p.data()) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.data_mut().iter_mut().zip(ap.data()) {
            *ri -= alpha * api;
        }
        let rs_new: f64 = r.data().iter().map(|v| v * v).sum();
        final_res = rs_new.sqrt();
        if converged(&r, rs_new) {
            if pure_neumann {
                subtract_fluid_mean(&mut x, dom);
            }
            return Ok(x);
        }
        let beta = rs_new / rs;
        rs = rs_new;
        let pd = p.data_mut();
        for (pi, ri) in pd.iter_mut().zip(r.data()) {
            *pi = ri + beta * *pi;
        }
        let _ = iter;
    }
    Err(Error::SolverDiverged {
        residual: final_res / b_norm,
        iterations: cfg.max_iterations,
    })
}

/// Taped pressure solve. The backward rule re-solves the same system with
/// the incoming cotangent as right-hand side.
pub fn pressure_solve(
    tape: &mut Tape,
    div: VarId,
    dom: &DomainSpec,
    cfg: &PoissonConfig,
) -> Result<VarId> {
    let d = tape.value(div).as_centered()?;
    let p = pressure_solve_plain(d, dom, cfg)?;
    let dom2 = dom.clone();
    let cfg2 = *cfg;
    tape.record(
        vec![div],
        Value::Centered(p),
        Box::new(move |args| {
            let cot = args.cot.as_centered()?;
            let g = pressure_solve_plain(cot, &dom2, &cfg2)?;
            Ok(vec![Value::Centered(g)])
        }),
    )
}

/// Taped masked pressure gradient.
pub fn taped_masked_gradient(tape: &mut Tape, p: VarId, dom: &DomainSpec) -> Result<VarId> {
    let pf = tape.value(p).as_centered()?;
    let out = Value::Staggered(masked_gradient(pf, dom));
    let dom2 = dom.clone();
    tape.record(
        vec![p],
        out,
        Box::new(move |args| {
            let g = args.cot.as_staggered()?;
            Ok(vec![Value::Centered(masked_gradient_transpose(g, &dom2))])
        }),
    )
}

/// Make a velocity field divergence-free on the given domain.
pub fn project_plain(
    v: &StaggeredField,
    dom: &DomainSpec,
    cfg: &PoissonConfig,
) -> Result<StaggeredField> {
    let keep = dom.face_keep_masks();
    let mut vm = v.clone();
    for k in 0..vm.components().len() {
        for (x, m) in vm.component_mut(k).iter_mut().zip(&keep[k]) {
            *x *= m;
        }
    }
    let d = divergence(&vm);
    let p = pressure_solve_plain(&d, dom, cfg)?;
    let g = masked_gradient(&p, dom);
    let mut out = vm.zip(&g, |a, b| a - b);
    for k in 0..out.components().len() {
        for (x, m) in out.component_mut(k).iter_mut().zip(&keep[k]) {
            *x *= m;
        }
    }
    Ok(out)
}

/// Taped projection: wall masking, divergence, pressure solve, gradient
/// subtraction, wall masking.
pub fn project(
    tape: &mut Tape,
    v: VarId,
    dom: &DomainSpec,
    cfg: &PoissonConfig,
) -> Result<VarId> {
    let keep = dom.face_keep_masks();
    let vm = ops::mask_staggered(tape, v, keep.clone())?;
    let d = ops::divergence(tape, vm)?;
    let p = pressure_solve(tape, d, dom, cfg)?;
    let g = taped_masked_gradient(tape, p, dom)?;
    let out = ops::sub(tape, vm, g)?;
    ops::mask_staggered(tape, out, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use crate::testutil::{seeded_centered, seeded_staggered};

    fn residual(p: &CenteredField, b: &CenteredField, dom: &DomainSpec) -> f64 {
        // ||div(grad p) - b|| / ||b|| over the effective (solid-zeroed,
        // mean-projected) right-hand side.
        let mut bb = b.clone();
        for (i, v) in bb.data_mut().iter_mut().enumerate() {
            if dom.is_solid(i) {
                *v = 0.0;
            }
        }
        if !dom.has_open_side() {
            subtract_fluid_mean(&mut bb, dom);
        }
        let lp = divergence(&masked_gradient(p, dom));
        let num: f64 = lp
            .data()
            .iter()
            .zip(bb.data())
            .enumerate()
            .map(|(i, (a, b))| {
                if dom.is_solid(i) {
                    0.0
                } else {
                    (a - b) * (a - b)
                }
            })
            .sum::<f64>()
            .sqrt();
        let den: f64 = bb.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn zero_divergence_gives_zero_pressure() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let p = pressure_solve_plain(
            &CenteredField::zeros(&g),
            &dom,
            &PoissonConfig::default(),
        )
        .unwrap();
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_rhs_reaches_requested_residual() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let mut b = seeded_centered(&g, 77);
        let mean = b.data().iter().sum::<f64>() / 256.0;
        for v in b.data_mut().iter_mut() {
            *v -= mean;
        }
        let cfg = PoissonConfig::new(4000, 1e-6).unwrap();
        let p = pressure_solve_plain(&b, &dom, &cfg).unwrap();
        assert!(residual(&p, &b, &dom) <= 1e-6);
    }

    #[test]
    fn matrix_is_symmetric_with_obstacles_and_open_top() {
        let g = GridSpec::unit(&[5, 5]).unwrap();
        let mut obstacle = vec![false; 25];
        obstacle[12] = true;
        obstacle[7] = true;
        let dom = DomainSpec::new(
            &g,
            vec![
                [BoundaryKind::Closed, BoundaryKind::Closed],
                [BoundaryKind::Closed, BoundaryKind::Open],
            ],
            obstacle,
            None,
            vec![0.0, 0.0],
        )
        .unwrap();
        let n = 25;
        let mut m = vec![vec![0.0; n]; n];
        for c in 0..n {
            let mut e = CenteredField::zeros(&g);
            e.data_mut()[c] = 1.0;
            let col = apply_matrix(&e, &dom);
            for r in 0..n {
                m[r][c] = col.data()[r];
            }
        }
        for r in 0..n {
            for c in 0..n {
                assert!(
                    (m[r][c] - m[c][r]).abs() < 1e-12,
                    "asymmetry at ({r},{c}): {} vs {}",
                    m[r][c],
                    m[c][r]
                );
            }
        }
    }

    #[test]
    fn projection_removes_divergence() {
        let g = GridSpec::unit(&[32, 32]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let cfg = PoissonConfig::new(8000, 1e-6).unwrap();
        let v = seeded_staggered(&g, 5);
        let out = project_plain(&v, &dom, &cfg).unwrap();
        let d = divergence(&out);
        let max = d.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1e-5, "post-projection divergence {max}");
    }

    #[test]
    fn projection_keeps_divergence_free_input() {
        // Potential with a constant (zero) boundary ring: its curl is
        // wall-consistent and globally divergence-free.
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let cfg = PoissonConfig::new(8000, 1e-8).unwrap();
        let mut phi = seeded_centered(&g, 9);
        for i in 0..16 {
            for j in 0..16 {
                if i == 0 || j == 0 || i == 15 || j == 15 {
                    phi.data_mut()[i * 16 + j] = 0.0;
                }
            }
        }
        let v = crate::fields::curl2d(&phi).unwrap();
        let out = project_plain(&v, &dom, &cfg).unwrap();
        for k in 0..2 {
            for (a, b) in out.component(k).iter().zip(v.component(k)) {
                assert!((a - b).abs() <= 1e-6, "component {k} changed");
            }
        }
        // And the zero field projects to itself.
        let z = StaggeredField::zeros(&g);
        let out = project_plain(&z, &dom, &cfg).unwrap();
        assert!(out.components().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn taped_pressure_solve_adjoint_matches_finite_differences() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let cfg = PoissonConfig::new(8000, 1e-12).unwrap();
        let b0 = {
            let mut b = seeded_centered(&g, 13);
            let mean = b.data().iter().sum::<f64>() / 64.0;
            for v in b.data_mut().iter_mut() {
                *v -= mean;
            }
            b
        };
        let g2 = g.clone();
        let dom2 = dom.clone();
        let fwd = move |x: &[f64]| {
            let b = CenteredField::new(g2.clone(), x.to_vec()).unwrap();
            let p = pressure_solve_plain(&b, &dom2, &cfg).unwrap();
            // Loss: 0.5 * sum(p^2).
            vec![0.5 * p.data().iter().map(|v| v * v).sum::<f64>()]
        };
        let dom3 = dom.clone();
        let b1 = b0.clone();
        let vjp = move |cot: &[f64]| {
            let mut tape = Tape::new();
            let b = tape.leaf(b1.clone());
            let p = pressure_solve(&mut tape, b, &dom3, &cfg).unwrap();
            let sq = ops::mul(&mut tape, p, p).unwrap();
            let s = ops::sum(&mut tape, sq).unwrap();
            let loss = ops::scale(&mut tape, s, 0.5).unwrap();
            let map = tape
                .backward_with_seed(loss, Value::scalar(cot[0]))
                .unwrap();
            map.get(b).unwrap().flatten()
        };
        let worst = crate::testutil::check_vjp(b0.data(), &fwd, &vjp, 6, 14, 1e-6);
        assert!(worst <= 1e-4, "pressure solve adjoint rel err {worst}");
    }

    #[test]
    fn nonconvergence_reports_residual() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let dom = DomainSpec::closed_box(&g);
        let cfg = PoissonConfig::new(2, 1e-14).unwrap();
        let b = seeded_centered(&g, 1);
        match pressure_solve_plain(&b, &dom, &cfg) {
            Err(Error::SolverDiverged { iterations, .. }) => assert_eq!(iterations, 2),
            other => panic!("expected solver error, got {other:?}"),
        }
    }
}
