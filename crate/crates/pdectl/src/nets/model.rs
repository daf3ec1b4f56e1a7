//! Encoder-decoder network with residual blocks: strided-convolution
//! downsampling, skip concatenations, linear upsampling, and an optional
//! dense bottleneck that gives the network a whole-domain receptive field.

use std::collections::BTreeMap;

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers;
use crate::autodiff::{ops, Tape, Tensor, VarId};
use crate::error::{Error, Result};

/// Number of feature maps fed through the dense bottleneck.
const DENSE_MAPS: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_channels: usize,
    pub output_channels: usize,
    /// Number of stride-2 downsampling levels.
    pub levels: usize,
    pub base_features: usize,
    pub feature_cap: usize,
    /// Spatial rank of the activations (1 or 2).
    pub spatial_rank: usize,
    /// Route part of the coarsest activation through a dense layer so the
    /// receptive field covers the whole domain. Requires `input_dims`.
    pub global_bottleneck: bool,
    /// Fixed input resolution, only needed for the dense bottleneck.
    pub input_dims: Option<Vec<usize>>,
}

impl NetSpec {
    pub fn desk_default(spatial_rank: usize, input_channels: usize, output_channels: usize) -> Self {
        Self {
            input_channels,
            output_channels,
            levels: 3,
            base_features: 4,
            feature_cap: 16,
            spatial_rank,
            global_bottleneck: false,
            input_dims: None,
        }
    }

    pub fn features(&self, level: usize) -> usize {
        (self.base_features << level).min(self.feature_cap)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::Config("network needs at least one level".into()));
        }
        if self.spatial_rank == 0 || self.spatial_rank > 2 {
            return Err(Error::Config("spatial rank must be 1 or 2".into()));
        }
        if self.global_bottleneck && self.input_dims.is_none() {
            return Err(Error::Config(
                "a dense bottleneck requires fixed input dims".into(),
            ));
        }
        if let Some(dims) = &self.input_dims {
            for &d in dims {
                if padded_size(d, self.levels) >> self.levels < 2 {
                    return Err(Error::Config(format!(
                        "resolution {d} too small for {} levels",
                        self.levels
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Named parameter arrays. Iteration order is the name order, which keeps
/// training and serialization deterministic.
pub type ParamSet = BTreeMap<String, Tensor>;

/// Parameters mounted on a tape for one forward/backward pass. Cloning
/// shares the same tape variables, so gradients from several uses
/// accumulate.
#[derive(Clone)]
pub struct TapedParams {
    ids: BTreeMap<String, VarId>,
}

impl TapedParams {
    pub fn load(tape: &mut Tape, params: &ParamSet) -> Self {
        let ids = params
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        Self { ids }
    }

    pub fn get(&self, name: &str) -> Result<VarId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn ids(&self) -> &BTreeMap<String, VarId> {
        &self.ids
    }
}

fn kernel_dims(spec: &NetSpec, co: usize, ci: usize, k: usize) -> Vec<usize> {
    let mut d = vec![co, ci];
    d.extend(std::iter::repeat(k).take(spec.spatial_rank));
    d
}

fn fan_in(dims: &[usize]) -> usize {
    dims[1..].iter().product()
}

/// Smallest size >= n divisible by 2^levels.
pub fn padded_size(n: usize, levels: usize) -> usize {
    let m = 1 << levels;
    n.div_ceil(m) * m
}

/// Initialize parameters with fan-in-scaled uniform weights; the final
/// output layer starts at zero so an untrained network is a no-op on top of
/// its skip path.
pub fn init_params(spec: &NetSpec, seed: u64) -> Result<ParamSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();

    fn add(params: &mut ParamSet, rng: &mut ChaCha8Rng, name: String, dims: Vec<usize>, zero: bool) {
        let n: usize = dims.iter().product();
        let s = (1.0 / fan_in(&dims) as f64).sqrt();
        let data = if zero {
            vec![0.0; n]
        } else {
            (0..n).map(|_| rng.random_range(-s..s)).collect()
        };
        let co = dims[0];
        params.insert(name.replace(".w", ".b"), Tensor::zeros(&[co]));
        params.insert(name, Tensor::new(dims, data).unwrap());
    }

    let mut ch = spec.input_channels;
    for l in 0..spec.levels {
        let f = spec.features(l);
        add(&mut params, &mut rng, format!("enc{l}.down.w"), kernel_dims(spec, f, ch, 2), false);
        for r in 0..2 {
            add(&mut params, &mut rng, format!("enc{l}.res{r}.c1.w"), kernel_dims(spec, f, f, 3), false);
            add(&mut params, &mut rng, format!("enc{l}.res{r}.c2.w"), kernel_dims(spec, f, f, 3), false);
        }
        ch = f;
    }
    for r in 0..2 {
        add(&mut params, &mut rng, format!("bottom.res{r}.c1.w"), kernel_dims(spec, ch, ch, 3), false);
        add(&mut params, &mut rng, format!("bottom.res{r}.c2.w"), kernel_dims(spec, ch, ch, 3), false);
    }
    let mut bottom_ch = ch;
    if spec.global_bottleneck {
        let dims = spec.input_dims.as_ref().unwrap();
        let coarse: usize = dims
            .iter()
            .map(|&d| padded_size(d, spec.levels) >> spec.levels)
            .product();
        let maps = DENSE_MAPS.min(ch);
        let n = maps * coarse;
        let s = (1.0 / n as f64).sqrt();
        let data = (0..n * n).map(|_| rng.random_range(-s..s)).collect();
        params.insert("bottleneck.dense.w".into(), Tensor::new(vec![n, n], data)?);
        params.insert("bottleneck.dense.b".into(), Tensor::zeros(&[n]));
        bottom_ch = ch + maps;
    }
    let mut dec_in = bottom_ch;
    for l in (0..spec.levels).rev() {
        let skip_ch = if l == 0 {
            spec.input_channels
        } else {
            spec.features(l - 1)
        };
        let out_ch = if l == 0 {
            spec.output_channels
        } else {
            spec.features(l - 1)
        };
        add(
            &mut params,
            &mut rng,
            format!("dec{l}.conv.w"),
            kernel_dims(spec, out_ch, dec_in + skip_ch, 3),
            l == 0,
        );
        if l > 0 {
            for r in 0..2 {
                add(&mut params, &mut rng, format!("dec{l}.res{r}.c1.w"), kernel_dims(spec, out_ch, out_ch, 3), false);
                add(&mut params, &mut rng, format!("dec{l}.res{r}.c2.w"), kernel_dims(spec, out_ch, out_ch, 3), false);
            }
        }
        dec_in = out_ch;
    }
    Ok(params)
}

fn conv_same(tape: &mut Tape, x: VarId, p: &TapedParams, name: &str, rank: usize) -> Result<VarId> {
    let pads = vec![(1usize, 1usize); rank];
    let padded = layers::pad_reflect(tape, x, &pads)?;
    layers::conv(
        tape,
        padded,
        p.get(&format!("{name}.w"))?,
        p.get(&format!("{name}.b"))?,
        1,
    )
}

fn res_block(tape: &mut Tape, x: VarId, p: &TapedParams, name: &str, rank: usize) -> Result<VarId> {
    let t = conv_same(tape, x, p, &format!("{name}.c1"), rank)?;
    let t = layers::activation(tape, t)?;
    let t = conv_same(tape, t, p, &format!("{name}.c2"), rank)?;
    let t = layers::activation(tape, t)?;
    ops::add(tape, x, t)
}

/// Run the network on a `[channels, space...]` activation.
pub fn forward(tape: &mut Tape, spec: &NetSpec, params: &TapedParams, input: VarId) -> Result<VarId> {
    spec.validate()?;
    let in_dims = tape.value(input).as_tensor()?.dims().to_vec();
    if in_dims.len() != spec.spatial_rank + 1 || in_dims[0] != spec.input_channels {
        return Err(Error::ShapeMismatch(format!(
            "expected [{}, space...] input of rank {}, got {:?}",
            spec.input_channels, spec.spatial_rank, in_dims
        )));
    }
    let spatial: Vec<usize> = in_dims[1..].to_vec();
    let padded: Vec<usize> = spatial
        .iter()
        .map(|&d| padded_size(d, spec.levels))
        .collect();
    let rank = spec.spatial_rank;

    let mut cur = if padded != spatial {
        let pads: Vec<(usize, usize)> = spatial
            .iter()
            .zip(&padded)
            .map(|(&s, &p)| (0, p - s))
            .collect();
        layers::pad_reflect(tape, input, &pads)?
    } else {
        input
    };

    let mut skips = vec![cur];
    for l in 0..spec.levels {
        let down = layers::conv(
            tape,
            cur,
            params.get(&format!("enc{l}.down.w"))?,
            params.get(&format!("enc{l}.down.b"))?,
            2,
        )?;
        let mut x = layers::activation(tape, down)?;
        for r in 0..2 {
            x = res_block(tape, x, params, &format!("enc{l}.res{r}"), rank)?;
        }
        skips.push(x);
        cur = x;
    }

    for r in 0..2 {
        cur = res_block(tape, cur, params, &format!("bottom.res{r}"), rank)?;
    }

    if spec.global_bottleneck {
        let dims = tape.value(cur).as_tensor()?.dims().to_vec();
        let maps = DENSE_MAPS.min(dims[0]);
        let head = layers::slice_channels(tape, cur, 0, maps)?;
        let mut out_dims = dims.clone();
        out_dims[0] = maps;
        let mixed = layers::dense(
            tape,
            head,
            params.get("bottleneck.dense.w")?,
            params.get("bottleneck.dense.b")?,
            out_dims,
        )?;
        let mixed = layers::activation(tape, mixed)?;
        cur = layers::concat_channels(tape, cur, mixed)?;
    }

    for l in (0..spec.levels).rev() {
        let up = layers::upsample2x(tape, cur)?;
        let cat = layers::concat_channels(tape, up, skips[l])?;
        let mut x = conv_same(tape, cat, params, &format!("dec{l}.conv"), rank)?;
        if l > 0 {
            x = layers::activation(tape, x)?;
            for r in 0..2 {
                x = res_block(tape, x, params, &format!("dec{l}.res{r}"), rank)?;
            }
        }
        cur = x;
    }

    if padded != spatial {
        cur = layers::crop(tape, cur, &spatial)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Value;
    use crate::testutil::rng;
    use rand::RngExt;

    fn random_input(dims: &[usize], seed: u64) -> Tensor {
        let mut r = rng(seed);
        let n: usize = dims.iter().product();
        Tensor::new(dims.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = NetSpec::desk_default(2, 2, 1);
        let mut params = init_params(&spec, 7).unwrap();
        for t in params.values_mut() {
            *t = Tensor::zeros(t.dims());
        }
        let mut tape = Tape::new();
        let x = tape.leaf(random_input(&[2, 16, 16], 3));
        let p = TapedParams::load(&mut tape, &params);
        let y = forward(&mut tape, &spec, &p, x).unwrap();
        let out = tape.value(y).as_tensor().unwrap();
        assert_eq!(out.dims(), &[1, 16, 16]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_shape_follows_input_shape() {
        let spec = NetSpec::desk_default(1, 2, 1);
        let params = init_params(&spec, 9).unwrap();
        for n in [16usize, 32, 64, 12] {
            let mut tape = Tape::new();
            let x = tape.leaf(random_input(&[2, n], 1));
            let p = TapedParams::load(&mut tape, &params);
            let y = forward(&mut tape, &spec, &p, x).unwrap();
            assert_eq!(tape.value(y).as_tensor().unwrap().dims(), &[1, n]);
        }
        // Same forward twice is deterministic.
        let mut t1 = Tape::new();
        let x1 = t1.leaf(random_input(&[2, 16], 5));
        let p1 = TapedParams::load(&mut t1, &params);
        let y1 = forward(&mut t1, &spec, &p1, x1).unwrap();
        let mut t2 = Tape::new();
        let x2 = t2.leaf(random_input(&[2, 16], 5));
        let p2 = TapedParams::load(&mut t2, &params);
        let y2 = forward(&mut t2, &spec, &p2, x2).unwrap();
        assert_eq!(t1.value(y1).as_tensor().unwrap().data(), t2.value(y2).as_tensor().unwrap().data());
    }

    fn loss_of(spec: &NetSpec, params: &ParamSet, x0: &Tensor) -> f64 {
        let mut tape = Tape::new();
        let xin = tape.leaf(x0.clone());
        let p = TapedParams::load(&mut tape, params);
        let y = forward(&mut tape, spec, &p, xin).unwrap();
        let sq = ops::mul(&mut tape, y, y).unwrap();
        let s = ops::sum(&mut tape, sq).unwrap();
        tape.value(s).as_tensor().unwrap().item()
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        // Two-level net with a dense bottleneck on an 8x8 input. The zero
        // output layer is randomized so the base point is generic; every
        // parameter kind is then spot-checked with central differences.
        let spec = NetSpec {
            input_channels: 2,
            output_channels: 1,
            levels: 2,
            base_features: 2,
            feature_cap: 4,
            spatial_rank: 2,
            global_bottleneck: true,
            input_dims: Some(vec![8, 8]),
        };
        let mut params = init_params(&spec, 11).unwrap();
        let final_w = params.get_mut("dec0.conv.w").unwrap();
        *final_w = random_input(&final_w.dims().to_vec(), 99);
        let x0 = random_input(&[2, 8, 8], 21);
        let names: Vec<String> = params.keys().cloned().collect();

        let mut tape = Tape::new();
        let xin = tape.leaf(x0.clone());
        let p = TapedParams::load(&mut tape, &params);
        let y = forward(&mut tape, &spec, &p, xin).unwrap();
        let sq = ops::mul(&mut tape, y, y).unwrap();
        let s = ops::sum(&mut tape, sq).unwrap();
        let map = tape.backward_with_seed(s, Value::scalar(1.0)).unwrap();

        let mut r = rng(31);
        let h = 1e-6;
        let mut worst = 0.0f64;
        for _ in 0..60 {
            let name = &names[r.random_range(0..names.len())];
            let len = params[name].len();
            let i = r.random_range(0..len);
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += h;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= h;
            let fd = (loss_of(&spec, &plus, &x0) - loss_of(&spec, &minus, &x0)) / (2.0 * h);
            let id = p.get(name).unwrap();
            let an = map.grad_or_zero(id, tape.value(id)).flatten()[i];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max((fd - an).abs() / denom);
        }
        assert!(worst <= 1e-3, "network parameter gradients rel err {worst}");
    }
}
