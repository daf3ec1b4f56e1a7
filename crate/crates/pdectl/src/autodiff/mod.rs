//! Reverse-mode differentiation over field and network operations: an
//! append-only tape with eagerly computed forward values, per-node adjoint
//! rules, recomputing checkpoints for long chains, and a registry of taped
//! primitives.

pub mod ops;
mod tape;
mod value;

pub use tape::{mem, BackwardArgs, BackwardFn, GradientMap, Segment, Tape, VarId};
pub use value::{Tensor, Value};
