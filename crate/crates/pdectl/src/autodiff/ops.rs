//! Taped primitives: elementwise arithmetic, reductions, and the field
//! operators, each recorded with its adjoint rule. Forward values are
//! computed by the same kernels as the untaped operations, so taping and
//! discarding the tape is bit-identical to evaluating directly.

use super::tape::{Tape, VarId};
use super::value::{Tensor, Value};
use crate::error::{Error, Result};
use crate::fields;

fn require_same_shape(a: &Value, b: &Value) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{} does not match {}",
            a.kind_name(),
            b.kind_name()
        )))
    }
}

pub fn add(tape: &mut Tape, a: VarId, b: VarId) -> Result<VarId> {
    let (va, vb) = (tape.value(a), tape.value(b));
    require_same_shape(va, vb)?;
    let out = va.zip(vb, |x, y| x + y)?;
    tape.record(
        vec![a, b],
        out,
        Box::new(|args| Ok(vec![args.cot.clone(), args.cot.clone()])),
    )
}

pub fn sub(tape: &mut Tape, a: VarId, b: VarId) -> Result<VarId> {
    let (va, vb) = (tape.value(a), tape.value(b));
    require_same_shape(va, vb)?;
    let out = va.zip(vb, |x, y| x - y)?;
    tape.record(
        vec![a, b],
        out,
        Box::new(|args| Ok(vec![args.cot.clone(), args.cot.map(|v| -v)])),
    )
}

pub fn mul(tape: &mut Tape, a: VarId, b: VarId) -> Result<VarId> {
    let (va, vb) = (tape.value(a), tape.value(b));
    require_same_shape(va, vb)?;
    let out = va.zip(vb, |x, y| x * y)?;
    tape.record(
        vec![a, b],
        out,
        Box::new(|args| {
            let ga = args.cot.zip(args.inputs[1], |c, y| c * y)?;
            let gb = args.cot.zip(args.inputs[0], |c, x| c * x)?;
            Ok(vec![ga, gb])
        }),
    )
}

pub fn scale(tape: &mut Tape, a: VarId, c: f64) -> Result<VarId> {
    let out = tape.value(a).map(|v| c * v);
    tape.record(
        vec![a],
        out,
        Box::new(move |args| Ok(vec![args.cot.map(|v| c * v)])),
    )
}

/// `a + c * b`.
pub fn add_scaled(tape: &mut Tape, a: VarId, b: VarId, c: f64) -> Result<VarId> {
    let (va, vb) = (tape.value(a), tape.value(b));
    require_same_shape(va, vb)?;
    let out = va.zip(vb, |x, y| x + c * y)?;
    tape.record(
        vec![a, b],
        out,
        Box::new(move |args| Ok(vec![args.cot.clone(), args.cot.map(|v| c * v)])),
    )
}

/// Sum of all entries, as a scalar tensor.
pub fn sum(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let total = tape.value(a).sum_all();
    tape.record(
        vec![a],
        Value::scalar(total),
        Box::new(|args| {
            let c = args.cot.as_tensor()?.item();
            Ok(vec![args.inputs[0].map(|_| c)])
        }),
    )
}

/// Mean squared difference between two values of equal shape.
pub fn mean_sq_diff(tape: &mut Tape, a: VarId, b: VarId) -> Result<VarId> {
    let d = sub(tape, a, b)?;
    let sq = mul(tape, d, d)?;
    let s = sum(tape, sq)?;
    let n = tape.value(a).numel() as f64;
    scale(tape, s, 1.0 / n)
}

/// Rectifier with a configurable negative slope (0.0 gives a hard clamp at
/// zero); the derivative at the kink takes the positive branch.
pub fn leaky_relu(tape: &mut Tape, a: VarId, slope: f64) -> Result<VarId> {
    let out = tape.value(a).map(|v| if v >= 0.0 { v } else { slope * v });
    tape.record(
        vec![a],
        out,
        Box::new(move |args| {
            let g = args
                .cot
                .zip(args.inputs[0], |c, x| if x >= 0.0 { c } else { slope * c })?;
            Ok(vec![g])
        }),
    )
}

pub fn relu(tape: &mut Tape, a: VarId) -> Result<VarId> {
    leaky_relu(tape, a, 0.0)
}

pub fn gradient(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let f = tape.value(a).as_centered()?;
    let out = Value::Staggered(fields::gradient(f));
    tape.record(
        vec![a],
        out,
        Box::new(|args| {
            let g = args.cot.as_staggered()?;
            Ok(vec![Value::Centered(fields::gradient_transpose(g))])
        }),
    )
}

pub fn divergence(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let v = tape.value(a).as_staggered()?;
    let out = Value::Centered(fields::divergence(v));
    tape.record(
        vec![a],
        out,
        Box::new(|args| {
            let g = args.cot.as_centered()?;
            Ok(vec![Value::Staggered(fields::divergence_transpose(g))])
        }),
    )
}

pub fn curl2d(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let f = tape.value(a).as_centered()?;
    let out = Value::Staggered(fields::curl2d(f)?);
    tape.record(
        vec![a],
        out,
        Box::new(|args| {
            let g = args.cot.as_staggered()?;
            Ok(vec![Value::Centered(fields::curl2d_transpose(g))])
        }),
    )
}

pub fn laplace(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let f = tape.value(a).as_centered()?;
    let out = Value::Centered(fields::laplace(f));
    tape.record(
        vec![a],
        out,
        Box::new(|args| {
            let g = args.cot.as_centered()?;
            Ok(vec![Value::Centered(fields::laplace_transpose(g))])
        }),
    )
}

pub fn blur(tape: &mut Tape, a: VarId, r: f64) -> Result<VarId> {
    let f = tape.value(a).as_centered()?;
    let out = Value::Centered(fields::blur(f, r));
    tape.record(
        vec![a],
        out,
        Box::new(move |args| {
            let g = args.cot.as_centered()?;
            Ok(vec![Value::Centered(fields::blur_transpose(g, r))])
        }),
    )
}

pub fn resample_to_faces(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let f = tape.value(a).as_centered()?;
    let out = Value::Staggered(fields::resample_to_faces(f));
    tape.record(
        vec![a],
        out,
        Box::new(|args| {
            let g = args.cot.as_staggered()?;
            Ok(vec![Value::Centered(fields::resample_to_faces_transpose(g))])
        }),
    )
}

/// Semi-Lagrangian transport of a centered field; differentiates through
/// both the transported field and the velocity (via the back-traced
/// positions).
pub fn advect_centered(tape: &mut Tape, f: VarId, v: VarId, dt: f64) -> Result<VarId> {
    let ff = tape.value(f).as_centered()?;
    let vv = tape.value(v).as_staggered()?;
    let out = Value::Centered(fields::advect_centered(ff, vv, dt));
    tape.record(
        vec![f, v],
        out,
        Box::new(move |args| {
            let cot = args.cot.as_centered()?;
            let ff = args.inputs[0].as_centered()?;
            let vv = args.inputs[1].as_staggered()?;
            let (gf, gv) = fields::advect_centered_vjp(ff, vv, dt, cot);
            Ok(vec![Value::Centered(gf), Value::Staggered(gv)])
        }),
    )
}

pub fn advect_staggered(tape: &mut Tape, f: VarId, v: VarId, dt: f64) -> Result<VarId> {
    let ff = tape.value(f).as_staggered()?;
    let vv = tape.value(v).as_staggered()?;
    let out = Value::Staggered(fields::advect_staggered(ff, vv, dt));
    tape.record(
        vec![f, v],
        out,
        Box::new(move |args| {
            let cot = args.cot.as_staggered()?;
            let ff = args.inputs[0].as_staggered()?;
            let vv = args.inputs[1].as_staggered()?;
            let (gf, gv) = fields::advect_staggered_vjp(ff, vv, dt, cot);
            Ok(vec![Value::Staggered(gf), Value::Staggered(gv)])
        }),
    )
}

/// Multiply a centered field by a fixed mask (not differentiated through).
pub fn mask_centered(tape: &mut Tape, a: VarId, mask: Vec<f64>) -> Result<VarId> {
    let f = tape.value(a).as_centered()?;
    if mask.len() != f.data().len() {
        return Err(Error::ShapeMismatch("mask length mismatch".into()));
    }
    let spec = f.spec().clone();
    let data: Vec<f64> = f.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
    let out = Value::Centered(crate::fields::CenteredField::new(spec, data)?);
    tape.record(
        vec![a],
        out,
        Box::new(move |args| {
            let g = args.cot.as_centered()?;
            let data: Vec<f64> = g.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
            Ok(vec![Value::Centered(crate::fields::CenteredField::new(
                g.spec().clone(),
                data,
            )?)])
        }),
    )
}

/// Zero selected face samples of a staggered field (a fixed linear mask).
pub fn mask_staggered(tape: &mut Tape, a: VarId, keep: Vec<Vec<f64>>) -> Result<VarId> {
    let v = tape.value(a).as_staggered()?;
    let masked = apply_face_mask(v, &keep)?;
    tape.record(
        vec![a],
        Value::Staggered(masked),
        Box::new(move |args| {
            let g = args.cot.as_staggered()?;
            Ok(vec![Value::Staggered(apply_face_mask(g, &keep)?)])
        }),
    )
}

fn apply_face_mask(
    v: &crate::fields::StaggeredField,
    keep: &[Vec<f64>],
) -> Result<crate::fields::StaggeredField> {
    if keep.len() != v.components().len() {
        return Err(Error::ShapeMismatch("face mask component mismatch".into()));
    }
    let mut out = v.clone();
    for k in 0..keep.len() {
        if keep[k].len() != v.component(k).len() {
            return Err(Error::ShapeMismatch("face mask length mismatch".into()));
        }
        for (o, m) in out.component_mut(k).iter_mut().zip(&keep[k]) {
            *o *= m;
        }
    }
    Ok(out)
}

/// Subtract the mean of a centered field from every entry.
pub fn subtract_mean(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let f = tape.value(a).as_centered()?;
    let n = f.data().len() as f64;
    let mean = f.data().iter().sum::<f64>() / n;
    let out = Value::Centered(f.map(|v| v - mean));
    tape.record(
        vec![a],
        out,
        Box::new(move |args| {
            let g = args.cot.as_centered()?;
            let gm = g.data().iter().sum::<f64>() / n;
            Ok(vec![Value::Centered(g.map(|v| v - gm))])
        }),
    )
}

/// Stack centered fields into a `[channels, cells...]` tensor.
pub fn stack_fields(tape: &mut Tape, fields: &[VarId]) -> Result<VarId> {
    if fields.is_empty() {
        return Err(Error::ShapeMismatch("cannot stack zero fields".into()));
    }
    let first = tape.value(fields[0]).as_centered()?.spec().clone();
    let mut dims = vec![fields.len()];
    dims.extend_from_slice(first.dims());
    let mut data = Vec::with_capacity(fields.len() * first.cell_count());
    for id in fields {
        let f = tape.value(*id).as_centered()?;
        if f.spec().dims() != first.dims() {
            return Err(Error::ShapeMismatch("stacked fields must share dims".into()));
        }
        data.extend_from_slice(f.data());
    }
    let per = first.cell_count();
    let spec = first.clone();
    tape.record(
        fields.to_vec(),
        Value::Tensor(Tensor::new(dims, data)?),
        Box::new(move |args| {
            let g = args.cot.as_tensor()?;
            let mut outs = Vec::new();
            for (k, _) in args.inputs.iter().enumerate() {
                let chunk = g.data()[k * per..(k + 1) * per].to_vec();
                outs.push(Value::Centered(crate::fields::CenteredField::new(
                    spec.clone(),
                    chunk,
                )?));
            }
            Ok(outs)
        }),
    )
}

/// Extract channel `c` of a `[channels, cells...]` tensor as a centered
/// field on `spec`.
pub fn channel_to_field(
    tape: &mut Tape,
    t: VarId,
    c: usize,
    spec: &crate::fields::GridSpec,
) -> Result<VarId> {
    let tt = tape.value(t).as_tensor()?;
    let per = spec.cell_count();
    if tt.dims().is_empty() || tt.dims()[0] <= c || tt.len() != tt.dims()[0] * per {
        return Err(Error::ShapeMismatch(format!(
            "cannot take channel {c} from tensor {:?} for grid {:?}",
            tt.dims(),
            spec.dims()
        )));
    }
    let data = tt.data()[c * per..(c + 1) * per].to_vec();
    let out = Value::Centered(crate::fields::CenteredField::new(spec.clone(), data)?);
    let dims = tt.dims().to_vec();
    tape.record(
        vec![t],
        out,
        Box::new(move |args| {
            let g = args.cot.as_centered()?;
            let mut full = Tensor::zeros(&dims);
            full.data_mut()[c * per..(c + 1) * per].copy_from_slice(g.data());
            Ok(vec![Value::Tensor(full)])
        }),
    )
}
