//! Task heads on top of the encoder-decoder network: the midpoint
//! observation predictor with its per-time-scale model bank, and the force
//! estimator in its three output modes.

use std::collections::BTreeMap;

use super::model::{forward, NetSpec, ParamSet, TapedParams};
use crate::autodiff::{ops, Tape, VarId};
use crate::error::{Error, Result};
use crate::fields::CenteredField;

/// One predictor model per power-of-two time scale.
#[derive(Debug, Clone)]
pub struct OPModelBank {
    models: BTreeMap<usize, (NetSpec, ParamSet)>,
    /// Clamp predictions at zero (densities are non-negative).
    pub clamp_nonneg: bool,
}

impl OPModelBank {
    pub fn new(clamp_nonneg: bool) -> Self {
        Self {
            models: BTreeMap::new(),
            clamp_nonneg,
        }
    }

    pub fn insert(&mut self, scale: usize, spec: NetSpec, params: ParamSet) -> Result<()> {
        if !scale.is_power_of_two() || scale < 2 {
            return Err(Error::NotPowerOfTwo(scale));
        }
        self.models.insert(scale, (spec, params));
        Ok(())
    }

    pub fn get(&self, scale: usize) -> Result<&(NetSpec, ParamSet)> {
        self.models.get(&scale).ok_or(Error::MissingScale(scale))
    }

    pub fn get_mut(&mut self, scale: usize) -> Result<&mut (NetSpec, ParamSet)> {
        self.models.get_mut(&scale).ok_or(Error::MissingScale(scale))
    }

    pub fn scales(&self) -> impl Iterator<Item = usize> + '_ {
        self.models.keys().copied()
    }

    pub fn models(&self) -> &BTreeMap<usize, (NetSpec, ParamSet)> {
        &self.models
    }

    /// Banks for scales 2, 4, ..., n with freshly initialized parameters.
    pub fn initialized(
        n: usize,
        template: &NetSpec,
        clamp_nonneg: bool,
        seed: u64,
    ) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::NotPowerOfTwo(n));
        }
        let mut bank = Self::new(clamp_nonneg);
        let mut scale = 2;
        while scale <= n {
            let params = super::model::init_params(template, seed ^ (scale as u64))?;
            bank.insert(scale, template.clone(), params)?;
            scale *= 2;
        }
        Ok(bank)
    }
}

/// Observation-predictor forward pass on a tape: stacks the two
/// observations, runs the scale's network and adds the two-input average as
/// a skip, so zero parameters predict the plain midpoint average.
pub fn op_predict_taped(
    tape: &mut Tape,
    spec: &NetSpec,
    params: &TapedParams,
    clamp_nonneg: bool,
    o_left: VarId,
    o_right: VarId,
) -> Result<VarId> {
    let grid = tape.value(o_left).as_centered()?.spec().clone();
    if tape.value(o_right).as_centered()?.spec().dims() != grid.dims() {
        return Err(Error::ShapeMismatch("observation grids differ".into()));
    }
    let stacked = ops::stack_fields(tape, &[o_left, o_right])?;
    let y = forward(tape, spec, params, stacked)?;
    let net_out = ops::channel_to_field(tape, y, 0, &grid)?;
    let s = ops::add(tape, o_left, o_right)?;
    let avg = ops::scale(tape, s, 0.5)?;
    let pred = ops::add(tape, net_out, avg)?;
    if clamp_nonneg {
        ops::relu(tape, pred)
    } else {
        Ok(pred)
    }
}

/// Convenience wrapper: one midpoint prediction on plain fields.
pub fn op_predict(
    bank: &OPModelBank,
    scale: usize,
    o_left: &CenteredField,
    o_right: &CenteredField,
) -> Result<CenteredField> {
    let (spec, params) = bank.get(scale)?;
    let mut tape = Tape::new();
    let l = tape.leaf(o_left.clone());
    let r = tape.leaf(o_right.clone());
    let p = TapedParams::load(&mut tape, params);
    let out = op_predict_taped(&mut tape, spec, &p, bank.clamp_nonneg, l, r)?;
    Ok(tape.value(out).as_centered()?.clone())
}

/// What the force estimator produces, depending on the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfeMode {
    /// The force field itself (1D state control).
    DirectForce,
    /// A scalar stream potential whose curl is the force.
    StreamPotential,
    /// Two cell-centered velocity channels, restricted to the control region.
    ControlVelocity,
}

/// Force-estimator output, one variant per mode.
pub enum CfeOutput {
    Force(VarId),
    StreamPotential(VarId),
    Velocity(VarId, VarId),
}

/// Force-estimator forward pass: stacks the current observation with the
/// targeted next observation and maps through the network head.
pub fn cfe_infer_taped(
    tape: &mut Tape,
    spec: &NetSpec,
    params: &TapedParams,
    mode: CfeMode,
    o_current: VarId,
    o_next: VarId,
    control_mask: Option<&[f64]>,
) -> Result<CfeOutput> {
    let grid = tape.value(o_current).as_centered()?.spec().clone();
    if tape.value(o_next).as_centered()?.spec().dims() != grid.dims() {
        return Err(Error::ShapeMismatch("observation grids differ".into()));
    }
    let expected_out = match mode {
        CfeMode::ControlVelocity => 2,
        _ => 1,
    };
    if spec.output_channels != expected_out {
        return Err(Error::Config(format!(
            "mode {mode:?} needs {expected_out} output channels, spec has {}",
            spec.output_channels
        )));
    }
    let stacked = ops::stack_fields(tape, &[o_current, o_next])?;
    let y = forward(tape, spec, params, stacked)?;
    match mode {
        CfeMode::DirectForce => Ok(CfeOutput::Force(ops::channel_to_field(tape, y, 0, &grid)?)),
        CfeMode::StreamPotential => Ok(CfeOutput::StreamPotential(ops::channel_to_field(
            tape, y, 0, &grid,
        )?)),
        CfeMode::ControlVelocity => {
            let mut vx = ops::channel_to_field(tape, y, 0, &grid)?;
            let mut vy = ops::channel_to_field(tape, y, 1, &grid)?;
            if let Some(mask) = control_mask {
                vx = ops::mask_centered(tape, vx, mask.to_vec())?;
                vy = ops::mask_centered(tape, vy, mask.to_vec())?;
            }
            Ok(CfeOutput::Velocity(vx, vy))
        }
    }
}

/// The closed-form estimator used by the hierarchical schemes on fully
/// observable states: the force that would carry `u` to the next observation
/// in one Euler step. The solver transports the state before adding the
/// force, so applying this mid-trajectory leaves the natural drift of one
/// step as residual; the terminal step therefore computes it against the
/// naturally evolved state instead.
pub fn analytic_cfe_burger(
    u: &CenteredField,
    o_next: &CenteredField,
    dt: f64,
) -> Result<CenteredField> {
    if u.spec().dims() != o_next.spec().dims() {
        return Err(Error::ShapeMismatch("state and target grids differ".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Config("dt must be positive".into()));
    }
    Ok(o_next.zip(u, |t, s| (t - s) / dt))
}

/// Taped variant of [`analytic_cfe_burger`].
pub fn analytic_cfe_burger_taped(
    tape: &mut Tape,
    u: VarId,
    o_next: VarId,
    dt: f64,
) -> Result<VarId> {
    let d = ops::sub(tape, o_next, u)?;
    ops::scale(tape, d, 1.0 / dt)
}
