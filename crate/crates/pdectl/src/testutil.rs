//! Shared helpers for unit tests: seeded random fields, dense stencil-matrix
//! oracles and a finite-difference harness for adjoint checks.

use crate::fields::{CenteredField, GridSpec, StaggeredField};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn seeded_centered(spec: &GridSpec, seed: u64) -> CenteredField {
    let mut r = rng(seed);
    let data = (0..spec.cell_count())
        .map(|_| r.random_range(-1.0..1.0))
        .collect();
    CenteredField::new(spec.clone(), data).unwrap()
}

pub fn seeded_staggered(spec: &GridSpec, seed: u64) -> StaggeredField {
    let mut r = rng(seed);
    let components = (0..spec.rank())
        .map(|k| {
            (0..spec.face_count(k))
                .map(|_| r.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    StaggeredField::new(spec.clone(), components).unwrap()
}

/// Explicit matrix of a linear centered->centered operator, built by
/// applying it to every basis vector.
pub fn dense_matrix_centered_to_centered(
    spec: &GridSpec,
    op: impl Fn(&CenteredField) -> CenteredField,
) -> Vec<Vec<f64>> {
    let n = spec.cell_count();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = CenteredField::zeros(spec);
        e.data_mut()[i] = 1.0;
        cols.push(op(&e).into_data());
    }
    transpose(&cols)
}

pub fn dense_matrix_centered_to_staggered(
    spec: &GridSpec,
    op: impl Fn(&CenteredField) -> StaggeredField,
) -> Vec<Vec<f64>> {
    let n = spec.cell_count();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = CenteredField::zeros(spec);
        e.data_mut()[i] = 1.0;
        cols.push(op(&e).components().concat());
    }
    transpose(&cols)
}

pub fn dense_matrix_staggered_to_centered(
    spec: &GridSpec,
    op: impl Fn(&StaggeredField) -> CenteredField,
) -> Vec<Vec<f64>> {
    let total: usize = (0..spec.rank()).map(|k| spec.face_count(k)).sum();
    let mut cols = Vec::with_capacity(total);
    for i in 0..total {
        let mut flat = vec![0.0; total];
        flat[i] = 1.0;
        let e = staggered_from_flat(spec, &flat);
        cols.push(op(&e).into_data());
    }
    transpose(&cols)
}

pub fn staggered_from_flat(spec: &GridSpec, flat: &[f64]) -> StaggeredField {
    let mut components = Vec::new();
    let mut off = 0;
    for k in 0..spec.rank() {
        let len = spec.face_count(k);
        components.push(flat[off..off + len].to_vec());
        off += len;
    }
    StaggeredField::new(spec.clone(), components).unwrap()
}

pub fn dense_apply(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn transpose(cols: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = cols[0].len();
    (0..rows)
        .map(|r| cols.iter().map(|c| c[r]).collect())
        .collect()
}

/// Central finite-difference check of a vector-Jacobian product.
///
/// `f` maps a flat input to a flat output; `vjp` maps a cotangent of the
/// output to a cotangent of the input, both at base point `x`.
/// Returns the worst relative error over `probes` random directions.
pub fn check_vjp(
    x: &[f64],
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    vjp: &dyn Fn(&[f64]) -> Vec<f64>,
    probes: usize,
    seed: u64,
    h: f64,
) -> f64 {
    let mut r = rng(seed);
    let y0 = f(x);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let dx: Vec<f64> = (0..x.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let cot: Vec<f64> = (0..y0.len()).map(|_| r.random_range(-1.0..1.0)).collect();
        let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + h * d).collect();
        let xm: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a - h * d).collect();
        let yp = f(&xp);
        let ym = f(&xm);
        let fd: f64 = yp
            .iter()
            .zip(&ym)
            .zip(&cot)
            .map(|((p, m), c)| c * (p - m) / (2.0 * h))
            .sum();
        let g = vjp(&cot);
        let an: f64 = g.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let denom = fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max((fd - an).abs() / denom);
    }
    worst
}
