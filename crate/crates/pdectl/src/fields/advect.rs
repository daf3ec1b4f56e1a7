//! Semi-Lagrangian advection: each sample location traces the velocity
//! backwards over one time step and gathers the source field there by
//! multilinear interpolation. Back-traced lookups clamp to the domain.

use super::grid::{CenteredField, StaggeredField};
use super::interp::{
    centered_sample, centered_sample_grad, centered_scatter, staggered_component_sample,
    staggered_component_sample_grad, staggered_component_scatter, staggered_sample,
};

/// Transport a centered field along `v` for one step of length `dt`.
pub fn advect_centered(f: &CenteredField, v: &StaggeredField, dt: f64) -> CenteredField {
    debug_assert_eq!(f.spec().dims(), v.spec().dims());
    let spec = f.spec().clone();
    let mut out = CenteredField::zeros(&spec);
    for idx in 0..spec.cell_count() {
        let x = spec.cell_center(idx);
        let vel = staggered_sample(v, &x);
        let origin: Vec<f64> = x.iter().zip(&vel).map(|(a, b)| a - dt * b).collect();
        out.data_mut()[idx] = centered_sample(f, &origin);
    }
    out
}

/// Transport each component of a staggered field along `v`.
pub fn advect_staggered(f: &StaggeredField, v: &StaggeredField, dt: f64) -> StaggeredField {
    debug_assert_eq!(f.spec().dims(), v.spec().dims());
    let spec = f.spec().clone();
    let mut out = StaggeredField::zeros(&spec);
    for k in 0..spec.rank() {
        for idx in 0..spec.face_count(k) {
            let x = spec.face_center(k, idx);
            let vel = staggered_sample(v, &x);
            let origin: Vec<f64> = x.iter().zip(&vel).map(|(a, b)| a - dt * b).collect();
            out.component_mut(k)[idx] = staggered_component_sample(f, k, &origin);
        }
    }
    out
}

/// Reverse-mode adjoint of [`advect_centered`]: given the cotangent of the
/// output, produce cotangents for the transported field and the velocity.
pub fn advect_centered_vjp(
    f: &CenteredField,
    v: &StaggeredField,
    dt: f64,
    cot: &CenteredField,
) -> (CenteredField, StaggeredField) {
    let spec = f.spec().clone();
    let mut grad_f = CenteredField::zeros(&spec);
    let mut grad_v = StaggeredField::zeros(&spec);
    for idx in 0..spec.cell_count() {
        let g = cot.data()[idx];
        if g == 0.0 {
            continue;
        }
        let x = spec.cell_center(idx);
        let vel = staggered_sample(v, &x);
        let origin: Vec<f64> = x.iter().zip(&vel).map(|(a, b)| a - dt * b).collect();
        centered_scatter(&mut grad_f, &origin, g);
        let (_, dpos) = centered_sample_grad(f, &origin);
        for a in 0..spec.rank() {
            let s = -dt * g * dpos[a];
            if s != 0.0 {
                staggered_component_scatter(&mut grad_v, a, &x, s);
            }
        }
    }
    (grad_f, grad_v)
}

/// Reverse-mode adjoint of [`advect_staggered`].
pub fn advect_staggered_vjp(
    f: &StaggeredField,
    v: &StaggeredField,
    dt: f64,
    cot: &StaggeredField,
) -> (StaggeredField, StaggeredField) {
    let spec = f.spec().clone();
    let mut grad_f = StaggeredField::zeros(&spec);
    let mut grad_v = StaggeredField::zeros(&spec);
    for k in 0..spec.rank() {
        for idx in 0..spec.face_count(k) {
            let g = cot.component(k)[idx];
            if g == 0.0 {
                continue;
            }
            let x = spec.face_center(k, idx);
            let vel = staggered_sample(v, &x);
            let origin: Vec<f64> = x.iter().zip(&vel).map(|(a, b)| a - dt * b).collect();
            staggered_component_scatter(&mut grad_f, k, &origin, g);
            let (_, dpos) = staggered_component_sample_grad(f, k, &origin);
            for a in 0..spec.rank() {
                let s = -dt * g * dpos[a];
                if s != 0.0 {
                    staggered_component_scatter(&mut grad_v, a, &x, s);
                }
            }
        }
    }
    (grad_f, grad_v)
}
