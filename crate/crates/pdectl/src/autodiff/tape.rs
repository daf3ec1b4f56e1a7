//! Append-only record of primitive operations with eager forward values and
//! per-node adjoint rules; walking it backwards yields cotangents for every
//! reachable input.

use std::cell::Cell;
use std::rc::Rc;

use super::value::Value;
use crate::error::{Error, Result};

/// Index of a recorded value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Inputs handed to a node's adjoint rule.
pub struct BackwardArgs<'a> {
    /// Cotangent of the node's output.
    pub cot: &'a Value,
    /// Forward values of the node's inputs, in recording order.
    pub inputs: &'a [&'a Value],
    /// Forward value of the node's output.
    pub output: &'a Value,
}

/// Adjoint rule: maps the output cotangent to one cotangent per input.
/// This is the extension point for operations whose derivative is not built
/// from other primitives (e.g. re-solving a linear system).
pub type BackwardFn = Box<dyn Fn(&BackwardArgs) -> Result<Vec<Value>>>;

struct Node {
    value: Value,
    inputs: Vec<VarId>,
    backward: Option<BackwardFn>,
}

thread_local! {
    static LIVE_NODES: Cell<usize> = const { Cell::new(0) };
    static PEAK_NODES: Cell<usize> = const { Cell::new(0) };
}

/// Bookkeeping of value-storing nodes alive across all tapes on this thread,
/// used by tests to verify the memory behavior of checkpointing.
pub mod mem {
    use super::{LIVE_NODES, PEAK_NODES};

    pub fn live_nodes() -> usize {
        LIVE_NODES.with(|c| c.get())
    }

    pub fn peak_nodes() -> usize {
        PEAK_NODES.with(|c| c.get())
    }

    pub fn reset_peak() {
        PEAK_NODES.with(|c| c.set(live_nodes()));
    }

    pub(super) fn incr(n: usize) {
        LIVE_NODES.with(|c| c.set(c.get() + n));
        PEAK_NODES.with(|p| p.set(p.get().max(live_nodes())));
    }

    pub(super) fn decr(n: usize) {
        LIVE_NODES.with(|c| c.set(c.get().saturating_sub(n)));
    }
}

/// Reverse-mode differentiation record. Single-owner while recording;
/// the values it stores are immutable once written.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input (leaf) value.
    pub fn leaf(&mut self, value: impl Into<Value>) -> VarId {
        self.push(value.into(), Vec::new(), None)
    }

    /// Record an operation with its eagerly computed output value and its
    /// adjoint rule. Inputs must already live on this tape.
    pub fn record(
        &mut self,
        inputs: Vec<VarId>,
        value: Value,
        backward: BackwardFn,
    ) -> Result<VarId> {
        for id in &inputs {
            if id.0 >= self.nodes.len() {
                return Err(Error::ShapeMismatch(format!(
                    "input {} not on tape (len {})",
                    id.0,
                    self.nodes.len()
                )));
            }
        }
        Ok(self.push(value, inputs, Some(backward)))
    }

    fn push(&mut self, value: Value, inputs: Vec<VarId>, backward: Option<BackwardFn>) -> VarId {
        mem::incr(1);
        self.nodes.push(Node {
            value,
            inputs,
            backward,
        });
        VarId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: VarId) -> &Value {
        &self.nodes[id.0].value
    }

    pub fn inputs(&self, id: VarId) -> &[VarId] {
        &self.nodes[id.0].inputs
    }

    /// Walk the tape backwards from a scalar loss, seeding its cotangent
    /// with one.
    pub fn backward(&self, loss: VarId) -> Result<GradientMap> {
        let v = self.value(loss);
        if !v.is_scalar() {
            return Err(Error::NonScalarLoss(v.kind_name().to_string()));
        }
        self.backward_with_seed(loss, Value::scalar(1.0))
    }

    /// Walk the tape backwards from an arbitrary variable with an explicit
    /// seed cotangent of the same shape.
    pub fn backward_with_seed(&self, from: VarId, seed: Value) -> Result<GradientMap> {
        if !seed.same_shape(self.value(from)) {
            return Err(Error::ShapeMismatch(
                "seed cotangent shape does not match variable".into(),
            ));
        }
        let mut grads: Vec<Option<Value>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[from.0] = Some(seed);
        for i in (0..=from.0).rev() {
            let Some(cot) = grads[i].clone() else {
                continue;
            };
            let node = &self.nodes[i];
            let Some(backward) = &node.backward else {
                continue;
            };
            let input_values: Vec<&Value> = node.inputs.iter().map(|id| self.value(*id)).collect();
            let args = BackwardArgs {
                cot: &cot,
                inputs: &input_values,
                output: &node.value,
            };
            let input_cots = backward(&args)?;
            debug_assert_eq!(input_cots.len(), node.inputs.len());
            for (id, c) in node.inputs.iter().zip(input_cots) {
                match &mut grads[id.0] {
                    Some(acc) => acc.accumulate(&c)?,
                    slot @ None => *slot = Some(c),
                }
            }
        }
        Ok(GradientMap { grads })
    }

    /// Record a recomputable segment. The forward pass stores only the
    /// segment inputs and its output; the backward pass replays the segment
    /// on a scratch tape to rebuild interior values. Long solver chains
    /// would otherwise keep every intermediate field alive at once.
    pub fn checkpoint(&mut self, inputs: &[VarId], segment: Segment) -> Result<VarId> {
        let input_values: Vec<Value> = inputs.iter().map(|id| self.value(*id).clone()).collect();
        let out_value = run_segment(&segment, &input_values)?;
        let seg = segment.clone();
        self.record(
            inputs.to_vec(),
            out_value,
            Box::new(move |args| {
                let values: Vec<Value> = args.inputs.iter().map(|v| (*v).clone()).collect();
                let mut scratch = Tape::new();
                let ids: Vec<VarId> = values.into_iter().map(|v| scratch.leaf(v)).collect();
                let out = seg(&mut scratch, &ids)?;
                let map = scratch.backward_with_seed(out, args.cot.clone())?;
                Ok(ids
                    .iter()
                    .zip(args.inputs)
                    .map(|(id, input)| map.grad_or_zero(*id, input))
                    .collect())
            }),
        )
    }
}

impl Drop for Tape {
    fn drop(&mut self) {
        mem::decr(self.nodes.len());
    }
}

/// A pure function of its tape inputs, replayable on any tape.
pub type Segment = Rc<dyn Fn(&mut Tape, &[VarId]) -> Result<VarId>>;

fn run_segment(segment: &Segment, input_values: &[Value]) -> Result<Value> {
    let mut scratch = Tape::new();
    let ids: Vec<VarId> = input_values.iter().map(|v| scratch.leaf(v.clone())).collect();
    let out = segment(&mut scratch, &ids)?;
    Ok(scratch.value(out).clone())
}

/// Cotangents produced by a backward pass, keyed by tape variable.
pub struct GradientMap {
    grads: Vec<Option<Value>>,
}

impl GradientMap {
    pub fn get(&self, id: VarId) -> Option<&Value> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Cotangent of `id`, or a zero value shaped like `like` when the
    /// variable was unreachable from the loss.
    pub fn grad_or_zero(&self, id: VarId, like: &Value) -> Value {
        self.get(id).cloned().unwrap_or_else(|| like.zeros_like())
    }
}
