//! Rational-kernel blur used to widen loss gradients: weights follow
//! `1 / (1 + d/r)` in grid-cell distance `d`, truncated at radius `ceil(4r)`
//! and renormalized to unit sum. Convolution wraps periodically, so constant
//! fields and total mass are preserved exactly.

use super::grid::CenteredField;

fn kernel(rank: usize, r: f64) -> (i64, Vec<f64>) {
    let radius = (4.0 * r).ceil() as i64;
    let side = (2 * radius + 1) as usize;
    let mut weights = Vec::with_capacity(side.pow(rank as u32));
    match rank {
        1 => {
            for o in -radius..=radius {
                weights.push(1.0 / (1.0 + (o as f64).abs() / r));
            }
        }
        2 => {
            for o0 in -radius..=radius {
                for o1 in -radius..=radius {
                    let d = ((o0 * o0 + o1 * o1) as f64).sqrt();
                    weights.push(1.0 / (1.0 + d / r));
                }
            }
        }
        _ => unreachable!(),
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    (radius, weights)
}

/// Blur `f` with the normalized rational kernel of radius parameter `r > 0`.
pub fn blur(f: &CenteredField, r: f64) -> CenteredField {
    assert!(r > 0.0, "blur radius must be positive");
    let spec = f.spec().clone();
    let (radius, weights) = kernel(spec.rank(), r);
    let mut out = CenteredField::zeros(&spec);
    match spec.rank() {
        1 => {
            let n = spec.dims()[0] as i64;
            for i in 0..n {
                let mut acc = 0.0;
                for (wi, o) in (-radius..=radius).enumerate() {
                    let src = (i + o).rem_euclid(n) as usize;
                    acc += weights[wi] * f.data()[src];
                }
                out.data_mut()[i as usize] = acc;
            }
        }
        2 => {
            let n0 = spec.dims()[0] as i64;
            let n1 = spec.dims()[1] as i64;
            let side = 2 * radius + 1;
            for i in 0..n0 {
                for j in 0..n1 {
                    let mut acc = 0.0;
                    for o0 in -radius..=radius {
                        let si = (i + o0).rem_euclid(n0);
                        for o1 in -radius..=radius {
                            let sj = (j + o1).rem_euclid(n1);
                            let w = weights[((o0 + radius) * side + (o1 + radius)) as usize];
                            acc += w * f.data()[(si * n1 + sj) as usize];
                        }
                    }
                    out.data_mut()[(i * n1 + j) as usize] = acc;
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

/// Adjoint of [`blur`]; the kernel is symmetric and the padding periodic, so
/// the operator is self-adjoint.
pub fn blur_transpose(g: &CenteredField, r: f64) -> CenteredField {
    blur(g, r)
}
