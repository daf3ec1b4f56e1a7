//! Multilinear interpolation in physical coordinates, plus the gather/scatter
//! kernels that advection and its adjoint are built from.
//!
//! Queries outside the sampled region clamp to the boundary sample; the
//! positional derivative of a clamped axis is zero (the one-sided derivative
//! of the clamped branch).

use super::grid::{CenteredField, GridSpec, StaggeredField};

#[derive(Debug, Clone, Copy)]
struct AxisStencil {
    i0: usize,
    frac: f64,
    /// False when the query clamped outside the sample range.
    active: bool,
}

fn axis_stencil(t: f64, n: usize) -> AxisStencil {
    debug_assert!(n >= 2);
    if t <= 0.0 {
        AxisStencil {
            i0: 0,
            frac: 0.0,
            active: t == 0.0,
        }
    } else if t >= (n - 1) as f64 {
        AxisStencil {
            i0: n - 2,
            frac: 1.0,
            active: t == (n - 1) as f64,
        }
    } else {
        let i0 = (t.floor() as usize).min(n - 2);
        AxisStencil {
            i0,
            frac: t - i0 as f64,
            active: true,
        }
    }
}

/// Index-space coordinate of a physical position in a lattice whose first
/// sample sits at `origin + first * dx`.
fn to_index(p: f64, origin: f64, dx: f64, first: f64) -> f64 {
    (p - origin) / dx - first
}

fn centered_stencil(spec: &GridSpec, p: &[f64]) -> Vec<AxisStencil> {
    (0..spec.rank())
        .map(|a| {
            axis_stencil(
                to_index(p[a], spec.origin()[a], spec.spacing()[a], 0.5),
                spec.dims()[a],
            )
        })
        .collect()
}

fn staggered_stencil(spec: &GridSpec, k: usize, p: &[f64]) -> Vec<AxisStencil> {
    (0..spec.rank())
        .map(|a| {
            let (first, n) = if a == k {
                (0.0, spec.dims()[a] + 1)
            } else {
                (0.5, spec.dims()[a])
            };
            axis_stencil(
                to_index(p[a], spec.origin()[a], spec.spacing()[a], first),
                n,
            )
        })
        .collect()
}

fn gather(data: &[f64], row_len: usize, st: &[AxisStencil]) -> f64 {
    match st.len() {
        1 => {
            let s = st[0];
            data[s.i0] * (1.0 - s.frac) + data[s.i0 + 1] * s.frac
        }
        2 => {
            let (a, b) = (st[0], st[1]);
            let r0 = a.i0 * row_len;
            let r1 = (a.i0 + 1) * row_len;
            let lo = data[r0 + b.i0] * (1.0 - b.frac) + data[r0 + b.i0 + 1] * b.frac;
            let hi = data[r1 + b.i0] * (1.0 - b.frac) + data[r1 + b.i0 + 1] * b.frac;
            lo * (1.0 - a.frac) + hi * a.frac
        }
        _ => unreachable!(),
    }
}

/// Derivative of [`gather`] with respect to the index coordinate of each axis
/// (zero on clamped axes).
fn gather_grad(data: &[f64], row_len: usize, st: &[AxisStencil]) -> Vec<f64> {
    match st.len() {
        1 => {
            let s = st[0];
            vec![if s.active {
                data[s.i0 + 1] - data[s.i0]
            } else {
                0.0
            }]
        }
        2 => {
            let (a, b) = (st[0], st[1]);
            let r0 = a.i0 * row_len;
            let r1 = (a.i0 + 1) * row_len;
            let lo = data[r0 + b.i0] * (1.0 - b.frac) + data[r0 + b.i0 + 1] * b.frac;
            let hi = data[r1 + b.i0] * (1.0 - b.frac) + data[r1 + b.i0 + 1] * b.frac;
            let d0 = if a.active { hi - lo } else { 0.0 };
            let dlo = data[r0 + b.i0 + 1] - data[r0 + b.i0];
            let dhi = data[r1 + b.i0 + 1] - data[r1 + b.i0];
            let d1 = if b.active {
                dlo * (1.0 - a.frac) + dhi * a.frac
            } else {
                0.0
            };
            vec![d0, d1]
        }
        _ => unreachable!(),
    }
}

/// Accumulate `w` into the samples addressed by the stencil, with the same
/// multilinear weights that [`gather`] reads with.
fn scatter(data: &mut [f64], row_len: usize, st: &[AxisStencil], w: f64) {
    match st.len() {
        1 => {
            let s = st[0];
            data[s.i0] += w * (1.0 - s.frac);
            data[s.i0 + 1] += w * s.frac;
        }
        2 => {
            let (a, b) = (st[0], st[1]);
            let r0 = a.i0 * row_len;
            let r1 = (a.i0 + 1) * row_len;
            data[r0 + b.i0] += w * (1.0 - a.frac) * (1.0 - b.frac);
            data[r0 + b.i0 + 1] += w * (1.0 - a.frac) * b.frac;
            data[r1 + b.i0] += w * a.frac * (1.0 - b.frac);
            data[r1 + b.i0 + 1] += w * a.frac * b.frac;
        }
        _ => unreachable!(),
    }
}

fn centered_row_len(spec: &GridSpec) -> usize {
    if spec.rank() == 2 {
        spec.dims()[1]
    } else {
        0
    }
}

fn staggered_row_len(spec: &GridSpec, k: usize) -> usize {
    if spec.rank() == 2 {
        if k == 0 {
            spec.dims()[1]
        } else {
            spec.dims()[1] + 1
        }
    } else {
        0
    }
}

pub(crate) fn centered_sample(f: &CenteredField, p: &[f64]) -> f64 {
    let st = centered_stencil(f.spec(), p);
    gather(f.data(), centered_row_len(f.spec()), &st)
}

/// Value and derivative with respect to physical position.
pub(crate) fn centered_sample_grad(f: &CenteredField, p: &[f64]) -> (f64, Vec<f64>) {
    let st = centered_stencil(f.spec(), p);
    let row = centered_row_len(f.spec());
    let v = gather(f.data(), row, &st);
    let g = gather_grad(f.data(), row, &st)
        .iter()
        .enumerate()
        .map(|(a, d)| d / f.spec().spacing()[a])
        .collect();
    (v, g)
}

pub(crate) fn centered_scatter(into: &mut CenteredField, p: &[f64], w: f64) {
    let st = centered_stencil(into.spec(), p);
    let row = centered_row_len(into.spec());
    scatter(into.data_mut(), row, &st, w);
}

pub(crate) fn staggered_component_sample(v: &StaggeredField, k: usize, p: &[f64]) -> f64 {
    let st = staggered_stencil(v.spec(), k, p);
    gather(v.component(k), staggered_row_len(v.spec(), k), &st)
}

pub(crate) fn staggered_component_sample_grad(
    v: &StaggeredField,
    k: usize,
    p: &[f64],
) -> (f64, Vec<f64>) {
    let st = staggered_stencil(v.spec(), k, p);
    let row = staggered_row_len(v.spec(), k);
    let val = gather(v.component(k), row, &st);
    let g = gather_grad(v.component(k), row, &st)
        .iter()
        .enumerate()
        .map(|(a, d)| d / v.spec().spacing()[a])
        .collect();
    (val, g)
}

pub(crate) fn staggered_component_scatter(into: &mut StaggeredField, k: usize, p: &[f64], w: f64) {
    let st = staggered_stencil(into.spec(), k, p);
    let row = staggered_row_len(into.spec(), k);
    scatter(into.component_mut(k), row, &st, w);
}

/// Full vector value of a staggered field at a physical point.
pub(crate) fn staggered_sample(v: &StaggeredField, p: &[f64]) -> Vec<f64> {
    (0..v.spec().rank())
        .map(|k| staggered_component_sample(v, k, p))
        .collect()
}

/// Multilinear interpolation of a centered field at physical points.
pub fn interpolate_centered(f: &CenteredField, points: &[Vec<f64>]) -> Vec<f64> {
    points.iter().map(|p| centered_sample(f, p)).collect()
}

/// Multilinear interpolation of a staggered field at physical points,
/// one vector per point.
pub fn interpolate_staggered(v: &StaggeredField, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points.iter().map(|p| staggered_sample(v, p)).collect()
}

/// Resample a centered field onto face centers (the two-point average on
/// interior faces, the adjacent cell value on boundary faces).
pub fn resample_to_faces(f: &CenteredField) -> StaggeredField {
    StaggeredField::from_fn(f.spec(), |_k, p| {
        let st = centered_stencil(f.spec(), p);
        gather(f.data(), centered_row_len(f.spec()), &st)
    })
}

/// Transpose of [`resample_to_faces`].
pub fn resample_to_faces_transpose(g: &StaggeredField) -> CenteredField {
    let spec = g.spec().clone();
    let mut out = CenteredField::zeros(&spec);
    for k in 0..spec.rank() {
        for idx in 0..spec.face_count(k) {
            let p = spec.face_center(k, idx);
            centered_scatter(&mut out, &p, g.component(k)[idx]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use crate::testutil::{rng, seeded_centered};
    use rand::RngExt;

    #[test]
    fn exact_at_sample_locations() {
        let g = GridSpec::unit(&[5, 4]).unwrap();
        let f = seeded_centered(&g, 42);
        for i in 0..5 {
            for j in 0..4 {
                let p = g.cell_center(i * 4 + j);
                assert!((centered_sample(&f, &p) - f.data()[i * 4 + j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn midpoint_averages_neighbors() {
        let g = GridSpec::unit(&[4]).unwrap();
        let f = CenteredField::new(g, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        // Halfway between samples 1 and 2.
        assert_eq!(centered_sample(&f, &[2.0]), 4.0);
    }

    #[test]
    fn matches_pointwise_reference_on_random_queries() {
        // Scalar reference: direct bilinear formula evaluated per point.
        let g = GridSpec::new(&[7, 6], &[0.8, 1.2], &[-1.0, 2.0]).unwrap();
        let f = seeded_centered(&g, 7);
        let mut r = rng(99);
        for _ in 0..20 {
            let p: Vec<f64> = vec![r.random_range(-2.0..6.0), r.random_range(1.0..10.5)];
            let tx = ((p[0] + 1.0) / 0.8 - 0.5).clamp(0.0, 6.0);
            let ty = ((p[1] - 2.0) / 1.2 - 0.5).clamp(0.0, 5.0);
            let i0 = (tx.floor() as usize).min(5);
            let j0 = (ty.floor() as usize).min(4);
            let (fx, fy) = (tx - i0 as f64, ty - j0 as f64);
            let d = f.data();
            let want = d[i0 * 6 + j0] * (1.0 - fx) * (1.0 - fy)
                + d[i0 * 6 + j0 + 1] * (1.0 - fx) * fy
                + d[(i0 + 1) * 6 + j0] * fx * (1.0 - fy)
                + d[(i0 + 1) * 6 + j0 + 1] * fx * fy;
            assert!((centered_sample(&f, &p) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_fields_interpolate_exactly_in_the_interior() {
        let g = GridSpec::unit(&[8, 8]).unwrap();
        let f = CenteredField::from_fn(&g, |p| 2.0 * p[0] - 0.5 * p[1] + 3.0);
        let mut r = rng(3);
        for _ in 0..50 {
            let p = vec![r.random_range(0.5..7.5), r.random_range(0.5..7.5)];
            let want = 2.0 * p[0] - 0.5 * p[1] + 3.0;
            assert!((centered_sample(&f, &p) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_domain_clamps() {
        let g = GridSpec::unit(&[4]).unwrap();
        let f = CenteredField::new(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(centered_sample(&f, &[-10.0]), 1.0);
        assert_eq!(centered_sample(&f, &[99.0]), 4.0);
    }

    #[test]
    fn face_resampling_averages_and_clamps() {
        let g = GridSpec::unit(&[3]).unwrap();
        let f = CenteredField::new(g, vec![2.0, 4.0, 8.0]).unwrap();
        let s = resample_to_faces(&f);
        assert_eq!(s.component(0), &[2.0, 3.0, 6.0, 8.0]);
    }
}
