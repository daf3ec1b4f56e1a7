//! Values carried on the differentiation tape: grid fields, plus a plain
//! row-major tensor used for scalars, network activations and parameters.

use crate::error::{Error, Result};
use crate::fields::{CenteredField, StaggeredField};

/// Dense row-major tensor of 64-bit reals. Rank 0 (`dims = []`) is a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if data.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "tensor dims {dims:?} need {n} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            dims: vec![],
            data: vec![v],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn reshaped(&self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data.clone())
    }
}

/// A value on the tape.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Centered(CenteredField),
    Staggered(StaggeredField),
    Tensor(Tensor),
}

impl Value {
    pub fn scalar(v: f64) -> Self {
        Value::Tensor(Tensor::scalar(v))
    }

    pub fn as_centered(&self) -> Result<&CenteredField> {
        match self {
            Value::Centered(f) => Ok(f),
            other => Err(Error::ShapeMismatch(format!(
                "expected centered field, got {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_staggered(&self) -> Result<&StaggeredField> {
        match self {
            Value::Staggered(f) => Ok(f),
            other => Err(Error::ShapeMismatch(format!(
                "expected staggered field, got {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_tensor(&self) -> Result<&Tensor> {
        match self {
            Value::Tensor(t) => Ok(t),
            other => Err(Error::ShapeMismatch(format!(
                "expected tensor, got {}",
                other.kind_name()
            ))),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Centered(_) => "centered",
            Value::Staggered(_) => "staggered",
            Value::Tensor(_) => "tensor",
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, Value::Tensor(t) if t.len() == 1 && t.rank() == 0)
    }

    /// Shape equality across kinds.
    pub fn same_shape(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Centered(a), Value::Centered(b)) => a.spec().dims() == b.spec().dims(),
            (Value::Staggered(a), Value::Staggered(b)) => a.spec().dims() == b.spec().dims(),
            (Value::Tensor(a), Value::Tensor(b)) => a.dims() == b.dims(),
            _ => false,
        }
    }

    pub fn zeros_like(&self) -> Value {
        match self {
            Value::Centered(f) => Value::Centered(CenteredField::zeros(f.spec())),
            Value::Staggered(f) => Value::Staggered(StaggeredField::zeros(f.spec())),
            Value::Tensor(t) => Value::Tensor(Tensor::zeros(t.dims())),
        }
    }

    /// Elementwise combination of two values of identical shape and kind.
    pub fn zip(&self, other: &Value, f: impl Fn(f64, f64) -> f64) -> Result<Value> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch(format!(
                "cannot combine {} with {}",
                self.kind_name(),
                other.kind_name()
            )));
        }
        Ok(match (self, other) {
            (Value::Centered(a), Value::Centered(b)) => Value::Centered(a.zip(b, f)),
            (Value::Staggered(a), Value::Staggered(b)) => Value::Staggered(a.zip(b, f)),
            (Value::Tensor(a), Value::Tensor(b)) => {
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
                Value::Tensor(Tensor::new(a.dims().to_vec(), data)?)
            }
            _ => unreachable!(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Value {
        match self {
            Value::Centered(a) => Value::Centered(a.map(&f)),
            Value::Staggered(a) => Value::Staggered(a.map(&f)),
            Value::Tensor(a) => Value::Tensor(Tensor {
                dims: a.dims.clone(),
                data: a.data.iter().map(|&x| f(x)).collect(),
            }),
        }
    }

    pub fn accumulate(&mut self, other: &Value) -> Result<()> {
        *self = self.zip(other, |a, b| a + b)?;
        Ok(())
    }

    pub fn sum_all(&self) -> f64 {
        match self {
            Value::Centered(a) => a.data().iter().sum(),
            Value::Staggered(a) => a.components().iter().flatten().sum(),
            Value::Tensor(a) => a.data().iter().sum(),
        }
    }

    /// Total number of stored reals.
    pub fn numel(&self) -> usize {
        match self {
            Value::Centered(a) => a.data().len(),
            Value::Staggered(a) => a.components().iter().map(|c| c.len()).sum(),
            Value::Tensor(a) => a.len(),
        }
    }

    /// Copy all entries into a flat vector (component-concatenated for
    /// staggered values).
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Value::Centered(a) => a.data().to_vec(),
            Value::Staggered(a) => a.components().concat(),
            Value::Tensor(a) => a.data().to_vec(),
        }
    }

    /// Rebuild a value of the same shape as `self` from a flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Value> {
        if flat.len() != self.numel() {
            return Err(Error::ShapeMismatch("flat length mismatch".into()));
        }
        Ok(match self {
            Value::Centered(a) => {
                Value::Centered(CenteredField::new(a.spec().clone(), flat.to_vec())?)
            }
            Value::Staggered(a) => {
                let mut comps = Vec::new();
                let mut off = 0;
                for k in 0..a.spec().rank() {
                    let len = a.spec().face_count(k);
                    comps.push(flat[off..off + len].to_vec());
                    off += len;
                }
                Value::Staggered(StaggeredField::new(a.spec().clone(), comps)?)
            }
            Value::Tensor(t) => Value::Tensor(Tensor::new(t.dims().to_vec(), flat.to_vec())?),
        })
    }
}

impl From<CenteredField> for Value {
    fn from(f: CenteredField) -> Self {
        Value::Centered(f)
    }
}

impl From<StaggeredField> for Value {
    fn from(f: StaggeredField) -> Self {
        Value::Staggered(f)
    }
}

impl From<Tensor> for Value {
    fn from(t: Tensor) -> Self {
        Value::Tensor(t)
    }
}
