//! Finite-difference operators on centered and staggered fields.
//!
//! All four operators are linear; each comes with its transpose, which is the
//! reverse-mode adjoint used by the differentiation layer.

use super::grid::{CenteredField, StaggeredField};

/// Finite-difference gradient of a centered scalar field, sampled on faces.
///
/// Interior face `i` of component `k` carries `(f_i - f_{i-1}) / dx_k`;
/// domain-boundary faces are set to zero (boundary behavior is a concern of
/// the physics layer, which applies its own masks).
pub fn gradient(f: &CenteredField) -> StaggeredField {
    let spec = f.spec();
    let mut out = StaggeredField::zeros(spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            let inv = 1.0 / spec.spacing()[0];
            let c = out.component_mut(0);
            for i in 1..n {
                c[i] = (f.data()[i] - f.data()[i - 1]) * inv;
            }
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let inv0 = 1.0 / spec.spacing()[0];
            let inv1 = 1.0 / spec.spacing()[1];
            {
                let cx = out.component_mut(0);
                for i in 1..n0 {
                    for j in 0..n1 {
                        cx[i * n1 + j] = (f.data()[i * n1 + j] - f.data()[(i - 1) * n1 + j]) * inv0;
                    }
                }
            }
            {
                let cy = out.component_mut(1);
                for i in 0..n0 {
                    for j in 1..n1 {
                        cy[i * (n1 + 1) + j] =
                            (f.data()[i * n1 + j] - f.data()[i * n1 + j - 1]) * inv1;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Transpose of [`gradient`]: scatters a face cotangent back to cells.
pub fn gradient_transpose(g: &StaggeredField) -> CenteredField {
    let spec = g.spec();
    let mut out = CenteredField::zeros(spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            let inv = 1.0 / spec.spacing()[0];
            let c = g.component(0);
            for i in 1..n {
                out.data_mut()[i] += c[i] * inv;
                out.data_mut()[i - 1] -= c[i] * inv;
            }
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let inv0 = 1.0 / spec.spacing()[0];
            let inv1 = 1.0 / spec.spacing()[1];
            let cx = g.component(0);
            for i in 1..n0 {
                for j in 0..n1 {
                    let v = cx[i * n1 + j] * inv0;
                    out.data_mut()[i * n1 + j] += v;
                    out.data_mut()[(i - 1) * n1 + j] -= v;
                }
            }
            let cy = g.component(1);
            for i in 0..n0 {
                for j in 1..n1 {
                    let v = cy[i * (n1 + 1) + j] * inv1;
                    out.data_mut()[i * n1 + j] += v;
                    out.data_mut()[i * n1 + j - 1] -= v;
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Exact divergence of a staggered vector field, per cell:
/// the net face flux divided by the cell extent along each axis.
pub fn divergence(v: &StaggeredField) -> CenteredField {
    let spec = v.spec();
    let mut out = CenteredField::zeros(spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            let inv = 1.0 / spec.spacing()[0];
            let c = v.component(0);
            for i in 0..n {
                out.data_mut()[i] = (c[i + 1] - c[i]) * inv;
            }
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let inv0 = 1.0 / spec.spacing()[0];
            let inv1 = 1.0 / spec.spacing()[1];
            let cx = v.component(0);
            let cy = v.component(1);
            for i in 0..n0 {
                for j in 0..n1 {
                    out.data_mut()[i * n1 + j] = (cx[(i + 1) * n1 + j] - cx[i * n1 + j]) * inv0
                        + (cy[i * (n1 + 1) + j + 1] - cy[i * (n1 + 1) + j]) * inv1;
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Transpose of [`divergence`].
pub fn divergence_transpose(g: &CenteredField) -> StaggeredField {
    let spec = g.spec();
    let mut out = StaggeredField::zeros(spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            let inv = 1.0 / spec.spacing()[0];
            let c = out.component_mut(0);
            for i in 0..n {
                c[i + 1] += g.data()[i] * inv;
                c[i] -= g.data()[i] * inv;
            }
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let inv0 = 1.0 / spec.spacing()[0];
            let inv1 = 1.0 / spec.spacing()[1];
            {
                let cx = out.component_mut(0);
                for i in 0..n0 {
                    for j in 0..n1 {
                        let v = g.data()[i * n1 + j] * inv0;
                        cx[(i + 1) * n1 + j] += v;
                        cx[i * n1 + j] -= v;
                    }
                }
            }
            {
                let cy = out.component_mut(1);
                for i in 0..n0 {
                    for j in 0..n1 {
                        let v = g.data()[i * n1 + j] * inv1;
                        cy[i * (n1 + 1) + j + 1] += v;
                        cy[i * (n1 + 1) + j] -= v;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// 2D curl of a scalar potential, producing a staggered velocity whose
/// discrete divergence vanishes identically on interior cells.
///
/// The potential samples are treated as node values for the differencing, so
/// the x-component on a face is a forward difference along axis 1 and the
/// y-component the negated forward difference along axis 0. Faces whose
/// stencil would leave the array are zero.
pub fn curl2d(phi: &CenteredField) -> crate::error::Result<StaggeredField> {
    let spec = phi.spec();
    if spec.rank() != 2 {
        return Err(crate::error::Error::ShapeMismatch(
            "curl2d requires a 2D field".into(),
        ));
    }
    let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
    let inv0 = 1.0 / spec.spacing()[0];
    let inv1 = 1.0 / spec.spacing()[1];
    let mut out = StaggeredField::zeros(spec);
    {
        let cx = out.component_mut(0);
        for i in 0..n0 {
            for j in 0..n1 - 1 {
                cx[i * n1 + j] = (phi.data()[i * n1 + j + 1] - phi.data()[i * n1 + j]) * inv1;
            }
        }
    }
    {
        let cy = out.component_mut(1);
        for i in 0..n0 - 1 {
            for j in 0..n1 {
                cy[i * (n1 + 1) + j] = -(phi.data()[(i + 1) * n1 + j] - phi.data()[i * n1 + j]) * inv0;
            }
        }
    }
    Ok(out)
}

/// Transpose of [`curl2d`].
pub fn curl2d_transpose(g: &StaggeredField) -> CenteredField {
    let spec = g.spec();
    let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
    let inv0 = 1.0 / spec.spacing()[0];
    let inv1 = 1.0 / spec.spacing()[1];
    let mut out = CenteredField::zeros(spec);
    let cx = g.component(0);
    for i in 0..n0 {
        for j in 0..n1 - 1 {
            let v = cx[i * n1 + j] * inv1;
            out.data_mut()[i * n1 + j + 1] += v;
            out.data_mut()[i * n1 + j] -= v;
        }
    }
    let cy = g.component(1);
    for i in 0..n0 - 1 {
        for j in 0..n1 {
            let v = cy[i * (n1 + 1) + j] * inv0;
            out.data_mut()[(i + 1) * n1 + j] -= v;
            out.data_mut()[i * n1 + j] += v;
        }
    }
    out
}

/// Second-order Laplacian with mirrored (zero normal derivative) boundaries.
pub fn laplace(f: &CenteredField) -> CenteredField {
    let spec = f.spec();
    let mut out = CenteredField::zeros(spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            let inv2 = 1.0 / (spec.spacing()[0] * spec.spacing()[0]);
            for i in 0..n {
                let lo = f.data()[if i == 0 { 0 } else { i - 1 }];
                let hi = f.data()[if i == n - 1 { n - 1 } else { i + 1 }];
                out.data_mut()[i] = (lo - 2.0 * f.data()[i] + hi) * inv2;
            }
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let inv0 = 1.0 / (spec.spacing()[0] * spec.spacing()[0]);
            let inv1 = 1.0 / (spec.spacing()[1] * spec.spacing()[1]);
            for i in 0..n0 {
                for j in 0..n1 {
                    let c = f.data()[i * n1 + j];
                    let xl = f.data()[if i == 0 { j } else { (i - 1) * n1 + j }];
                    let xh = f.data()[if i == n0 - 1 { i * n1 + j } else { (i + 1) * n1 + j }];
                    let yl = f.data()[if j == 0 { i * n1 } else { i * n1 + j - 1 }];
                    let yh = f.data()[if j == n1 - 1 { i * n1 + j } else { i * n1 + j + 1 }];
                    out.data_mut()[i * n1 + j] =
                        (xl - 2.0 * c + xh) * inv0 + (yl - 2.0 * c + yh) * inv1;
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Transpose of [`laplace`] (the operator is symmetric, so this scatters the
/// same stencil).
pub fn laplace_transpose(g: &CenteredField) -> CenteredField {
    let spec = g.spec();
    let mut out = CenteredField::zeros(spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0];
            let inv2 = 1.0 / (spec.spacing()[0] * spec.spacing()[0]);
            for i in 0..n {
                let v = g.data()[i] * inv2;
                out.data_mut()[if i == 0 { 0 } else { i - 1 }] += v;
                out.data_mut()[i] -= 2.0 * v;
                out.data_mut()[if i == n - 1 { n - 1 } else { i + 1 }] += v;
            }
        }
        2 => {
            let [n0, n1] = [spec.dims()[0], spec.dims()[1]];
            let inv0 = 1.0 / (spec.spacing()[0] * spec.spacing()[0]);
            let inv1 = 1.0 / (spec.spacing()[1] * spec.spacing()[1]);
            for i in 0..n0 {
                for j in 0..n1 {
                    let v0 = g.data()[i * n1 + j] * inv0;
                    let v1 = g.data()[i * n1 + j] * inv1;
                    out.data_mut()[if i == 0 { j } else { (i - 1) * n1 + j }] += v0;
                    out.data_mut()[if i == n0 - 1 { i * n1 + j } else { (i + 1) * n1 + j }] += v0;
                    out.data_mut()[if j == 0 { i * n1 } else { i * n1 + j - 1 }] += v1;
                    out.data_mut()[if j == n1 - 1 { i * n1 + j } else { i * n1 + j + 1 }] += v1;
                    out.data_mut()[i * n1 + j] -= 2.0 * (v0 + v1);
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::GridSpec;
    use crate::testutil::{
        dense_apply, dense_matrix_centered_to_centered, dense_matrix_centered_to_staggered,
        dense_matrix_staggered_to_centered, seeded_centered, seeded_staggered,
    };

    #[test]
    fn gradient_of_linear_field_is_constant() {
        let g = GridSpec::unit(&[3]).unwrap();
        let f = CenteredField::new(g, vec![0.0, 1.0, 2.0]).unwrap();
        let grad = gradient(&f);
        assert_eq!(grad.component(0), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let f = CenteredField::constant(&g, 3.5);
        let grad = gradient(&f);
        for k in 0..2 {
            assert!(grad.component(k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn gradient_matches_dense_stencil_matrix() {
        // Oracle: build the explicit matrix column by column and multiply.
        let g = GridSpec::new(&[8], &[0.5], &[0.0]).unwrap();
        let f = seeded_centered(&g, 11);
        let m = dense_matrix_centered_to_staggered(&g, gradient);
        let expect = dense_apply(&m, f.data());
        let got = gradient(&f);
        for (a, b) in got.component(0).iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn divergence_trivial_cases() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let v = StaggeredField::from_fn(&g, |_, _| 2.0);
        let d = divergence(&v);
        assert!(d.data().iter().all(|&x| x.abs() < 1e-14));

        // x-linear ramp across faces, zero y: constant divergence.
        let v = StaggeredField::from_fn(&g, |k, p| if k == 0 { p[0] } else { 0.0 });
        let d = divergence(&v);
        assert!(d.data().iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn divergence_matches_dense_stencil_matrix() {
        let g = GridSpec::new(&[4, 4], &[1.0, 2.0], &[0.0, 0.0]).unwrap();
        let v = seeded_staggered(&g, 7);
        let m = dense_matrix_staggered_to_centered(&g, divergence);
        let flat: Vec<f64> = v.components().concat();
        let expect = dense_apply(&m, &flat);
        let got = divergence(&v);
        for (a, b) in got.data().iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn curl_divergence_identity() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let phi = seeded_centered(&g, 3);
        let v = curl2d(&phi).unwrap();
        let d = divergence(&v);
        let n1 = 16;
        for i in 1..15 {
            for j in 1..15 {
                assert!(d.data()[i * n1 + j].abs() <= 1e-12, "cell {i},{j}");
            }
        }
        // Product rule check on an analytic potential as well.
        let phi = CenteredField::from_fn(&GridSpec::unit(&[8, 8]).unwrap(), |p| p[0] * p[1]);
        let d = divergence(&curl2d(&phi).unwrap());
        for i in 1..7 {
            for j in 1..7 {
                assert!(d.data()[i * 8 + j].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn curl_rejects_1d() {
        let g = GridSpec::unit(&[8]).unwrap();
        assert!(curl2d(&CenteredField::zeros(&g)).is_err());
    }

    #[test]
    fn laplace_cases() {
        let g = GridSpec::unit(&[3]).unwrap();
        let f = CenteredField::new(g.clone(), vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(laplace(&f).data()[1], -2.0);
        let c = CenteredField::constant(&g, 9.0);
        assert!(laplace(&c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplace_matches_dense_stencil_matrix() {
        let g = GridSpec::new(&[4, 3], &[1.0, 0.5], &[0.0, 0.0]).unwrap();
        let f = seeded_centered(&g, 21);
        let m = dense_matrix_centered_to_centered(&g, laplace);
        let expect = dense_apply(&m, f.data());
        for (a, b) in laplace(&f).data().iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn operators_are_linear() {
        let g = GridSpec::unit(&[6, 5]).unwrap();
        let f1 = seeded_centered(&g, 1);
        let f2 = seeded_centered(&g, 2);
        let combo = f1.zip(&f2, |a, b| 2.0 * a - 3.0 * b);
        for (op, name) in [
            (laplace as fn(&CenteredField) -> CenteredField, "laplace"),
            (|f: &CenteredField| divergence(&gradient(f)), "div-grad"),
        ] {
            let lhs = op(&combo);
            let rhs = op(&f1).zip(&op(&f2), |a, b| 2.0 * a - 3.0 * b);
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                assert!((a - b).abs() <= 1e-12, "{name} not linear");
            }
        }
    }

    #[test]
    fn transposes_satisfy_inner_product_identity() {
        // <A x, y> == <x, A^T y> for random x, y.
        let g = GridSpec::new(&[5, 4], &[0.7, 1.3], &[0.0, 0.0]).unwrap();
        let x = seeded_centered(&g, 5);
        let y = seeded_staggered(&g, 6);
        let ax = gradient(&x);
        let aty = gradient_transpose(&y);
        let lhs: f64 = (0..2)
            .map(|k| {
                ax.component(k)
                    .iter()
                    .zip(y.component(k))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        let rhs: f64 = x.data().iter().zip(aty.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10);

        let yv = seeded_staggered(&g, 8);
        let xc = seeded_centered(&g, 9);
        let lhs: f64 = divergence(&yv)
            .data()
            .iter()
            .zip(xc.data())
            .map(|(a, b)| a * b)
            .sum();
        let dt = divergence_transpose(&xc);
        let rhs: f64 = (0..2)
            .map(|k| {
                dt.component(k)
                    .iter()
                    .zip(yv.component(k))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        assert!((lhs - rhs).abs() <= 1e-10);

        let lhs: f64 = laplace(&xc)
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = xc
            .data()
            .iter()
            .zip(laplace_transpose(&x).data())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() <= 1e-10);

        let lhs: f64 = (0..2)
            .map(|k| {
                curl2d(&xc).unwrap().component(k)
                    .iter()
                    .zip(yv.component(k))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum();
        let rhs: f64 = xc
            .data()
            .iter()
            .zip(curl2d_transpose(&yv).data())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() <= 1e-10);
    }
}
