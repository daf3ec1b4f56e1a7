//! Taped tensor layers for the convolutional networks: convolutions with
//! bias, dense layers, linear upsampling, padding, cropping and channel
//! plumbing. Activations live on `[channels, w]` (1D) or `[channels, h, w]`
//! (2D) tensors.

use crate::autodiff::{ops, Tape, Tensor, Value, VarId};
use crate::error::{Error, Result};

fn tensor<'t>(tape: &'t Tape, id: VarId) -> Result<&'t Tensor> {
    tape.value(id).as_tensor()
}

fn spatial_rank(dims: &[usize]) -> Result<usize> {
    match dims.len() {
        2 => Ok(1),
        3 => Ok(2),
        _ => Err(Error::ShapeMismatch(format!(
            "activation must be [C, w] or [C, h, w], got {dims:?}"
        ))),
    }
}

/// Valid (unpadded) convolution with bias. 1D kernels are `[co, ci, k]`,
/// 2D kernels `[co, ci, kh, kw]`.
pub fn conv(tape: &mut Tape, input: VarId, weight: VarId, bias: VarId, stride: usize) -> Result<VarId> {
    let x = tensor(tape, input)?.clone();
    let w = tensor(tape, weight)?.clone();
    let b = tensor(tape, bias)?.clone();
    let rank = spatial_rank(x.dims())?;
    if w.dims().len() != rank + 2 || x.dims()[0] != w.dims()[1] || b.dims() != [w.dims()[0]] {
        return Err(Error::ShapeMismatch(format!(
            "conv shapes disagree: x {:?}, w {:?}, b {:?}",
            x.dims(),
            w.dims(),
            b.dims()
        )));
    }
    let out = conv_forward(&x, &w, &b, stride, rank)?;
    tape.record(
        vec![input, weight, bias],
        Value::Tensor(out),
        Box::new(move |args| {
            let x = args.inputs[0].as_tensor()?;
            let w = args.inputs[1].as_tensor()?;
            let cot = args.cot.as_tensor()?;
            let (gx, gw, gb) = conv_backward(x, w, cot, stride, rank);
            Ok(vec![
                Value::Tensor(gx),
                Value::Tensor(gw),
                Value::Tensor(gb),
            ])
        }),
    )
}

fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, rank: usize) -> Result<Tensor> {
    match rank {
        1 => {
            let (ci, n) = (x.dims()[0], x.dims()[1]);
            let (co, k) = (w.dims()[0], w.dims()[2]);
            if n < k {
                return Err(Error::ShapeMismatch(format!("input {n} shorter than kernel {k}")));
            }
            let on = (n - k) / stride + 1;
            let mut out = Tensor::zeros(&[co, on]);
            for oc in 0..co {
                for oi in 0..on {
                    let mut acc = b.data()[oc];
                    for icx in 0..ci {
                        for kk in 0..k {
                            acc += w.data()[(oc * ci + icx) * k + kk]
                                * x.data()[icx * n + oi * stride + kk];
                        }
                    }
                    out.data_mut()[oc * on + oi] = acc;
                }
            }
            Ok(out)
        }
        2 => {
            let (ci, h, n) = (x.dims()[0], x.dims()[1], x.dims()[2]);
            let (co, kh, kw) = (w.dims()[0], w.dims()[2], w.dims()[3]);
            if h < kh || n < kw {
                return Err(Error::ShapeMismatch("input smaller than kernel".into()));
            }
            let oh = (h - kh) / stride + 1;
            let ow = (n - kw) / stride + 1;
            let mut out = Tensor::zeros(&[co, oh, ow]);
            for oc in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[oc];
                        for icx in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    acc += w.data()
                                        [((oc * ci + icx) * kh + ky) * kw + kx]
                                        * x.data()[(icx * h + oy * stride + ky) * n
                                            + ox * stride
                                            + kx];
                                }
                            }
                        }
                        out.data_mut()[(oc * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            Ok(out)
        }
        _ => unreachable!(),
    }
}

fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    cot: &Tensor,
    stride: usize,
    rank: usize,
) -> (Tensor, Tensor, Tensor) {
    let mut gx = Tensor::zeros(x.dims());
    let mut gw = Tensor::zeros(w.dims());
    let co = w.dims()[0];
    let mut gb = Tensor::zeros(&[co]);
    match rank {
        1 => {
            let (ci, n) = (x.dims()[0], x.dims()[1]);
            let k = w.dims()[2];
            let on = cot.dims()[1];
            for oc in 0..co {
                for oi in 0..on {
                    let g = cot.data()[oc * on + oi];
                    gb.data_mut()[oc] += g;
                    for icx in 0..ci {
                        for kk in 0..k {
                            gx.data_mut()[icx * n + oi * stride + kk] +=
                                g * w.data()[(oc * ci + icx) * k + kk];
                            gw.data_mut()[(oc * ci + icx) * k + kk] +=
                                g * x.data()[icx * n + oi * stride + kk];
                        }
                    }
                }
            }
        }
        2 => {
            let (ci, h, n) = (x.dims()[0], x.dims()[1], x.dims()[2]);
            let (kh, kw) = (w.dims()[2], w.dims()[3]);
            let (oh, ow) = (cot.dims()[1], cot.dims()[2]);
            for oc in 0..co {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = cot.data()[(oc * oh + oy) * ow + ox];
                        gb.data_mut()[oc] += g;
                        for icx in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let xi = (icx * h + oy * stride + ky) * n + ox * stride + kx;
                                    let wi = ((oc * ci + icx) * kh + ky) * kw + kx;
                                    gx.data_mut()[xi] += g * w.data()[wi];
                                    gw.data_mut()[wi] += g * x.data()[xi];
                                }
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    (gx, gw, gb)
}

/// Fully connected layer over the flattened input: `y = W x + b` with
/// `W: [m, n]`, reshaped to `out_dims`.
pub fn dense(
    tape: &mut Tape,
    input: VarId,
    weight: VarId,
    bias: VarId,
    out_dims: Vec<usize>,
) -> Result<VarId> {
    let x = tensor(tape, input)?.clone();
    let w = tensor(tape, weight)?.clone();
    let b = tensor(tape, bias)?.clone();
    let n = x.len();
    let m: usize = out_dims.iter().product();
    if w.dims() != [m, n] || b.dims() != [m] {
        return Err(Error::ShapeMismatch(format!(
            "dense shapes disagree: x len {n}, w {:?}, b {:?}, out {out_dims:?}",
            w.dims(),
            b.dims()
        )));
    }
    let mut out = vec![0.0; m];
    for r in 0..m {
        let mut acc = b.data()[r];
        let row = &w.data()[r * n..(r + 1) * n];
        for (a, xv) in row.iter().zip(x.data()) {
            acc += a * xv;
        }
        out[r] = acc;
    }
    tape.record(
        vec![input, weight, bias],
        Value::Tensor(Tensor::new(out_dims, out)?),
        Box::new(move |args| {
            let x = args.inputs[0].as_tensor()?;
            let w = args.inputs[1].as_tensor()?;
            let cot = args.cot.as_tensor()?;
            let mut gx = Tensor::zeros(x.dims());
            let mut gw = Tensor::zeros(w.dims());
            let mut gb = Tensor::zeros(&[m]);
            for r in 0..m {
                let g = cot.data()[r];
                gb.data_mut()[r] = g;
                for c in 0..n {
                    gx.data_mut()[c] += g * w.data()[r * n + c];
                    gw.data_mut()[r * n + c] += g * x.data()[c];
                }
            }
            Ok(vec![
                Value::Tensor(gx),
                Value::Tensor(gw),
                Value::Tensor(gb),
            ])
        }),
    )
}

fn axis_weights(j: usize, len: usize) -> [(usize, f64); 2] {
    // Output sample 2m sits a quarter cell left of input sample m,
    // 2m+1 a quarter cell right; ends clamp.
    let m = j / 2;
    if j % 2 == 0 {
        [(m.saturating_sub(1), 0.25), (m, 0.75)]
    } else {
        [(m, 0.75), ((m + 1).min(len - 1), 0.25)]
    }
}

/// Double every spatial dimension by linear interpolation.
pub fn upsample2x(tape: &mut Tape, input: VarId) -> Result<VarId> {
    let x = tensor(tape, input)?.clone();
    let rank = spatial_rank(x.dims())?;
    let out = upsample_forward(&x, rank);
    tape.record(
        vec![input],
        Value::Tensor(out),
        Box::new(move |args| {
            let x = args.inputs[0].as_tensor()?;
            let cot = args.cot.as_tensor()?;
            Ok(vec![Value::Tensor(upsample_backward(x.dims(), cot, rank))])
        }),
    )
}

fn upsample_forward(x: &Tensor, rank: usize) -> Tensor {
    match rank {
        1 => {
            let (c, n) = (x.dims()[0], x.dims()[1]);
            let on = 2 * n;
            let mut out = Tensor::zeros(&[c, on]);
            for ch in 0..c {
                for j in 0..on {
                    let wts = axis_weights(j, n);
                    out.data_mut()[ch * on + j] =
                        wts.iter().map(|(i, w)| w * x.data()[ch * n + i]).sum();
                }
            }
            out
        }
        2 => {
            let (c, h, n) = (x.dims()[0], x.dims()[1], x.dims()[2]);
            let (oh, on) = (2 * h, 2 * n);
            let mut out = Tensor::zeros(&[c, oh, on]);
            for ch in 0..c {
                for jy in 0..oh {
                    let wy = axis_weights(jy, h);
                    for jx in 0..on {
                        let wx = axis_weights(jx, n);
                        let mut acc = 0.0;
                        for (iy, a) in wy {
                            for (ix, b) in wx {
                                acc += a * b * x.data()[(ch * h + iy) * n + ix];
                            }
                        }
                        out.data_mut()[(ch * oh + jy) * on + jx] = acc;
                    }
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

fn upsample_backward(in_dims: &[usize], cot: &Tensor, rank: usize) -> Tensor {
    let mut gx = Tensor::zeros(in_dims);
    match rank {
        1 => {
            let (c, n) = (in_dims[0], in_dims[1]);
            let on = 2 * n;
            for ch in 0..c {
                for j in 0..on {
                    let g = cot.data()[ch * on + j];
                    for (i, w) in axis_weights(j, n) {
                        gx.data_mut()[ch * n + i] += w * g;
                    }
                }
            }
        }
        2 => {
            let (c, h, n) = (in_dims[0], in_dims[1], in_dims[2]);
            let (oh, on) = (2 * h, 2 * n);
            for ch in 0..c {
                for jy in 0..oh {
                    let wy = axis_weights(jy, h);
                    for jx in 0..on {
                        let g = cot.data()[(ch * oh + jy) * on + jx];
                        let wx = axis_weights(jx, n);
                        for (iy, a) in wy {
                            for (ix, b) in wx {
                                gx.data_mut()[(ch * h + iy) * n + ix] += a * b * g;
                            }
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    gx
}

fn mirror(i: isize, n: usize) -> usize {
    // Edge-inclusive reflection: -1 -> 0, n -> n-1.
    let n = n as isize;
    let mut v = i;
    if v < 0 {
        v = -v - 1;
    }
    if v >= n {
        v = 2 * n - 1 - v;
    }
    v.clamp(0, n - 1) as usize
}

/// Symmetric (edge-inclusive) padding of the spatial dimensions.
pub fn pad_reflect(tape: &mut Tape, input: VarId, pad: &[(usize, usize)]) -> Result<VarId> {
    let x = tensor(tape, input)?.clone();
    let rank = spatial_rank(x.dims())?;
    if pad.len() != rank {
        return Err(Error::ShapeMismatch("pad entries must match spatial rank".into()));
    }
    let pad = pad.to_vec();
    let out = pad_forward(&x, &pad, rank);
    tape.record(
        vec![input],
        Value::Tensor(out),
        Box::new(move |args| {
            let x = args.inputs[0].as_tensor()?;
            let cot = args.cot.as_tensor()?;
            Ok(vec![Value::Tensor(pad_backward(x.dims(), cot, &pad, rank))])
        }),
    )
}

fn pad_forward(x: &Tensor, pad: &[(usize, usize)], rank: usize) -> Tensor {
    match rank {
        1 => {
            let (c, n) = (x.dims()[0], x.dims()[1]);
            let on = n + pad[0].0 + pad[0].1;
            let mut out = Tensor::zeros(&[c, on]);
            for ch in 0..c {
                for j in 0..on {
                    let src = mirror(j as isize - pad[0].0 as isize, n);
                    out.data_mut()[ch * on + j] = x.data()[ch * n + src];
                }
            }
            out
        }
        2 => {
            let (c, h, n) = (x.dims()[0], x.dims()[1], x.dims()[2]);
            let oh = h + pad[0].0 + pad[0].1;
            let on = n + pad[1].0 + pad[1].1;
            let mut out = Tensor::zeros(&[c, oh, on]);
            for ch in 0..c {
                for jy in 0..oh {
                    let sy = mirror(jy as isize - pad[0].0 as isize, h);
                    for jx in 0..on {
                        let sx = mirror(jx as isize - pad[1].0 as isize, n);
                        out.data_mut()[(ch * oh + jy) * on + jx] = x.data()[(ch * h + sy) * n + sx];
                    }
                }
            }
            out
        }
        _ => unreachable!(),
    }
}

fn pad_backward(in_dims: &[usize], cot: &Tensor, pad: &[(usize, usize)], rank: usize) -> Tensor {
    let mut gx = Tensor::zeros(in_dims);
    match rank {
        1 => {
            let (c, n) = (in_dims[0], in_dims[1]);
            let on = n + pad[0].0 + pad[0].1;
            for ch in 0..c {
                for j in 0..on {
                    let src = mirror(j as isize - pad[0].0 as isize, n);
                    gx.data_mut()[ch * n + src] += cot.data()[ch * on + j];
                }
            }
        }
        2 => {
            let (c, h, n) = (in_dims[0], in_dims[1], in_dims[2]);
            let oh = h + pad[0].0 + pad[0].1;
            let on = n + pad[1].0 + pad[1].1;
            for ch in 0..c {
                for jy in 0..oh {
                    let sy = mirror(jy as isize - pad[0].0 as isize, h);
                    for jx in 0..on {
                        let sx = mirror(jx as isize - pad[1].0 as isize, n);
                        gx.data_mut()[(ch * h + sy) * n + sx] +=
                            cot.data()[(ch * oh + jy) * on + jx];
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    gx
}

/// Crop the spatial dimensions to `size`, starting at the origin.
pub fn crop(tape: &mut Tape, input: VarId, size: &[usize]) -> Result<VarId> {
    let x = tensor(tape, input)?.clone();
    let rank = spatial_rank(x.dims())?;
    if size.len() != rank {
        return Err(Error::ShapeMismatch("crop size must match spatial rank".into()));
    }
    let size = size.to_vec();
    let out = crop_forward(&x, &size, rank)?;
    tape.record(
        vec![input],
        Value::Tensor(out),
        Box::new(move |args| {
            let x = args.inputs[0].as_tensor()?;
            let cot = args.cot.as_tensor()?;
            let mut gx = Tensor::zeros(x.dims());
            match rank {
                1 => {
                    let (c, n) = (x.dims()[0], x.dims()[1]);
                    for ch in 0..c {
                        for j in 0..size[0] {
                            gx.data_mut()[ch * n + j] = cot.data()[ch * size[0] + j];
                        }
                    }
                }
                2 => {
                    let (c, h, n) = (x.dims()[0], x.dims()[1], x.dims()[2]);
                    for ch in 0..c {
                        for jy in 0..size[0] {
                            for jx in 0..size[1] {
                                gx.data_mut()[(ch * h + jy) * n + jx] =
                                    cot.data()[(ch * size[0] + jy) * size[1] + jx];
                            }
                        }
                    }
                }
                _ => unreachable!(),
            }
            Ok(vec![Value::Tensor(gx)])
        }),
    )
}

fn crop_forward(x: &Tensor, size: &[usize], rank: usize) -> Result<Tensor> {
    match rank {
        1 => {
            let (c, n) = (x.dims()[0], x.dims()[1]);
            if size[0] > n {
                return Err(Error::ShapeMismatch("crop larger than input".into()));
            }
            let mut out = Tensor::zeros(&[c, size[0]]);
            for ch in 0..c {
                for j in 0..size[0] {
                    out.data_mut()[ch * size[0] + j] = x.data()[ch * n + j];
                }
            }
            Ok(out)
        }
        2 => {
            let (c, h, n) = (x.dims()[0], x.dims()[1], x.dims()[2]);
            if size[0] > h || size[1] > n {
                return Err(Error::ShapeMismatch("crop larger than input".into()));
            }
            let mut out = Tensor::zeros(&[c, size[0], size[1]]);
            for ch in 0..c {
                for jy in 0..size[0] {
                    for jx in 0..size[1] {
                        out.data_mut()[(ch * size[0] + jy) * size[1] + jx] =
                            x.data()[(ch * h + jy) * n + jx];
                    }
                }
            }
            Ok(out)
        }
        _ => unreachable!(),
    }
}

/// Concatenate two activations along the channel axis.
pub fn concat_channels(tape: &mut Tape, a: VarId, b: VarId) -> Result<VarId> {
    let ta = tensor(tape, a)?.clone();
    let tb = tensor(tape, b)?.clone();
    if ta.dims()[1..] != tb.dims()[1..] {
        return Err(Error::ShapeMismatch(format!(
            "concat spatial dims disagree: {:?} vs {:?}",
            ta.dims(),
            tb.dims()
        )));
    }
    let mut dims = ta.dims().to_vec();
    dims[0] += tb.dims()[0];
    let mut data = ta.data().to_vec();
    data.extend_from_slice(tb.data());
    let na = ta.len();
    tape.record(
        vec![a, b],
        Value::Tensor(Tensor::new(dims, data)?),
        Box::new(move |args| {
            let cot = args.cot.as_tensor()?;
            let ga = Tensor::new(
                args.inputs[0].as_tensor()?.dims().to_vec(),
                cot.data()[..na].to_vec(),
            )?;
            let gb = Tensor::new(
                args.inputs[1].as_tensor()?.dims().to_vec(),
                cot.data()[na..].to_vec(),
            )?;
            Ok(vec![Value::Tensor(ga), Value::Tensor(gb)])
        }),
    )
}

/// Take channels `[from, to)` of an activation.
pub fn slice_channels(tape: &mut Tape, a: VarId, from: usize, to: usize) -> Result<VarId> {
    let t = tensor(tape, a)?.clone();
    let c = t.dims()[0];
    if from >= to || to > c {
        return Err(Error::ShapeMismatch(format!(
            "invalid channel slice {from}..{to} of {c}"
        )));
    }
    let per: usize = t.dims()[1..].iter().product();
    let mut dims = t.dims().to_vec();
    dims[0] = to - from;
    let data = t.data()[from * per..to * per].to_vec();
    tape.record(
        vec![a],
        Value::Tensor(Tensor::new(dims, data)?),
        Box::new(move |args| {
            let full = args.inputs[0].as_tensor()?;
            let cot = args.cot.as_tensor()?;
            let mut g = Tensor::zeros(full.dims());
            g.data_mut()[from * per..to * per].copy_from_slice(cot.data());
            Ok(vec![Value::Tensor(g)])
        }),
    )
}

/// Leaky rectifier used inside residual blocks.
pub fn activation(tape: &mut Tape, a: VarId) -> Result<VarId> {
    ops::leaky_relu(tape, a, 0.1)
}
