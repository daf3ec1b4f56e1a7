//! Objective pieces: the quadratic force penalty integrated over space and
//! time, the terminal observation loss with optional blurring, and their
//! taped counterparts.

use crate::autodiff::{ops, Tape, VarId};
use crate::error::{Error, Result};
use crate::fields::{blur, CenteredField, StaggeredField};

/// Decomposed objective value: `total = alpha * force + observation`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossReport {
    pub force_loss: f64,
    pub observation_loss: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossReport {
    pub fn new(alpha: f64, force_loss: f64, observation_loss: f64) -> Self {
        Self {
            force_loss,
            observation_loss,
            alpha,
            total: alpha * force_loss + observation_loss,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
    }
}

/// Sum of squared force samples weighted by cell volume and step length.
pub fn force_loss_centered(forces: &[CenteredField], dt: f64) -> f64 {
    forces
        .iter()
        .map(|f| {
            let vol = f.spec().cell_volume();
            f.data().iter().map(|v| v * v).sum::<f64>() * (vol * dt)
        })
        .sum()
}

pub fn force_loss_staggered(forces: &[StaggeredField], dt: f64) -> f64 {
    forces
        .iter()
        .map(|f| {
            let vol = f.spec().cell_volume();
            f.components()
                .iter()
                .flatten()
                .map(|v| v * v)
                .sum::<f64>()
                * (vol * dt)
        })
        .sum()
}

/// Mean squared difference, optionally comparing blurred copies.
pub fn observation_loss(
    o_final: &CenteredField,
    o_target: &CenteredField,
    blur_r: Option<f64>,
) -> Result<f64> {
    if o_final.spec().dims() != o_target.spec().dims() {
        return Err(Error::ShapeMismatch("observation grids differ".into()));
    }
    let (a, b) = match blur_r {
        Some(r) => (blur(o_final, r), blur(o_target, r)),
        None => (o_final.clone(), o_target.clone()),
    };
    let n = a.data().len() as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        * (1.0 / n))
}

/// Taped force penalty accumulated over a sequence of force variables.
pub fn taped_force_loss(tape: &mut Tape, forces: &[VarId], dt: f64) -> Result<VarId> {
    let mut acc: Option<VarId> = None;
    for &f in forces {
        let vol = match tape.value(f) {
            crate::autodiff::Value::Centered(c) => c.spec().cell_volume(),
            crate::autodiff::Value::Staggered(s) => s.spec().cell_volume(),
            crate::autodiff::Value::Tensor(_) => {
                return Err(Error::ShapeMismatch("force must be a field".into()))
            }
        };
        let sq = ops::mul(tape, f, f)?;
        let s = ops::sum(tape, sq)?;
        let term = ops::scale(tape, s, vol * dt)?;
        acc = Some(match acc {
            None => term,
            Some(a) => ops::add(tape, a, term)?,
        });
    }
    acc.ok_or_else(|| Error::Config("empty force sequence".into()))
}

/// Taped observation loss with optional blurring of both sides.
pub fn taped_observation_loss(
    tape: &mut Tape,
    o_final: VarId,
    o_target: VarId,
    blur_r: Option<f64>,
) -> Result<VarId> {
    let (a, b) = match blur_r {
        Some(r) => (ops::blur(tape, o_final, r)?, ops::blur(tape, o_target, r)?),
        None => (o_final, o_target),
    };
    ops::mean_sq_diff(tape, a, b)
}
