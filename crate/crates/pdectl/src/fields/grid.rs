//! Uniform grid descriptions and the two field layouts built on them.
//!
//! Conventions used throughout the crate:
//!
//! * Grids are 1D or 2D, row-major. For 2D `dims = [n0, n1]` a centered
//!   sample `(i, j)` lives at flat index `i * n1 + j`.
//! * In physical coordinates, cell `i` along axis `a` spans
//!   `[origin_a + i*dx_a, origin_a + (i+1)*dx_a]`; its center sits at
//!   `origin_a + (i + 0.5)*dx_a` and faces sit at integer multiples of `dx_a`.
//! * A staggered field samples component `k` at the centers of the faces
//!   perpendicular to axis `k`, so component `k` has `dims[k] + 1` samples
//!   along axis `k` and `dims[j]` along every other axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_RANK: usize = 2;

/// Geometry of a uniform 1D or 2D grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
}

impl GridSpec {
    /// Grid with unit spacing and zero origin.
    pub fn unit(dims: &[usize]) -> Result<Self> {
        Self::new(dims, &vec![1.0; dims.len()], &vec![0.0; dims.len()])
    }

    pub fn new(dims: &[usize], spacing: &[f64], origin: &[f64]) -> Result<Self> {
        if dims.is_empty() || dims.len() > MAX_RANK {
            return Err(Error::InvalidGrid(format!(
                "rank must be 1 or 2, got {}",
                dims.len()
            )));
        }
        if spacing.len() != dims.len() || origin.len() != dims.len() {
            return Err(Error::InvalidGrid(
                "dims, spacing and origin must have equal rank".into(),
            ));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidGrid(format!(
                "all dims must be >= 2, got {dims:?}"
            )));
        }
        if spacing.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "all spacings must be positive and finite, got {spacing:?}"
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            spacing: spacing.to_vec(),
            origin: origin.to_vec(),
        })
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Number of cell-centered samples.
    pub fn cell_count(&self) -> usize {
        self.dims.iter().product()
    }

    /// Cell volume (product of spacings).
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Number of samples of staggered component `k`.
    pub fn face_count(&self, k: usize) -> usize {
        self.dims
            .iter()
            .enumerate()
            .map(|(a, &d)| if a == k { d + 1 } else { d })
            .product()
    }

    /// Physical position of the center of cell `idx` (flat index).
    pub fn cell_center(&self, idx: usize) -> Vec<f64> {
        let mut pos = vec![0.0; self.rank()];
        match self.rank() {
            1 => pos[0] = self.origin[0] + (idx as f64 + 0.5) * self.spacing[0],
            2 => {
                let n1 = self.dims[1];
                pos[0] = self.origin[0] + ((idx / n1) as f64 + 0.5) * self.spacing[0];
                pos[1] = self.origin[1] + ((idx % n1) as f64 + 0.5) * self.spacing[1];
            }
            _ => unreachable!(),
        }
        pos
    }

    /// Physical position of face sample `idx` of staggered component `k`.
    pub fn face_center(&self, k: usize, idx: usize) -> Vec<f64> {
        let mut pos = vec![0.0; self.rank()];
        match self.rank() {
            1 => pos[0] = self.origin[0] + idx as f64 * self.spacing[0],
            2 => {
                // Component 0 is laid out (n0+1, n1); component 1 is (n0, n1+1).
                let row_len = if k == 0 { self.dims[1] } else { self.dims[1] + 1 };
                let i = idx / row_len;
                let j = idx % row_len;
                let (c0, c1) = if k == 0 {
                    (i as f64, j as f64 + 0.5)
                } else {
                    (i as f64 + 0.5, j as f64)
                };
                pos[0] = self.origin[0] + c0 * self.spacing[0];
                pos[1] = self.origin[1] + c1 * self.spacing[1];
            }
            _ => unreachable!(),
        }
        pos
    }
}

/// Scalar field sampled at cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredField {
    spec: GridSpec,
    data: Vec<f64>,
}

impl CenteredField {
    pub fn new(spec: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != spec.cell_count() {
            return Err(Error::ShapeMismatch(format!(
                "centered field needs {} samples, got {}",
                spec.cell_count(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(
                "centered field contains non-finite values".into(),
            ));
        }
        Ok(Self { spec, data })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        Self {
            spec: spec.clone(),
            data: vec![0.0; spec.cell_count()],
        }
    }

    pub fn constant(spec: &GridSpec, value: f64) -> Self {
        Self {
            spec: spec.clone(),
            data: vec![value; spec.cell_count()],
        }
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..spec.cell_count())
            .map(|idx| f(&spec.cell_center(idx)))
            .collect();
        Self {
            spec: spec.clone(),
            data,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
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

    /// Flat index of sample (i, j) on a 2D grid.
    pub fn idx2(&self, i: usize, j: usize) -> usize {
        i * self.spec.dims()[1] + j
    }

    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx2(i, j)]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.spec.dims(), other.spec.dims());
        Self {
            spec: self.spec.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Vector field with each component sampled on the faces perpendicular to
/// its axis (marker-and-cell layout).
#[derive(Debug, Clone, PartialEq)]
pub struct StaggeredField {
    spec: GridSpec,
    components: Vec<Vec<f64>>,
}

impl StaggeredField {
    pub fn new(spec: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != spec.rank() {
            return Err(Error::ShapeMismatch(format!(
                "staggered field needs {} components, got {}",
                spec.rank(),
                components.len()
            )));
        }
        for (k, c) in components.iter().enumerate() {
            if c.len() != spec.face_count(k) {
                return Err(Error::ShapeMismatch(format!(
                    "component {k} needs {} samples, got {}",
                    spec.face_count(k),
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::ShapeMismatch(format!(
                    "component {k} contains non-finite values"
                )));
            }
        }
        Ok(Self { spec, components })
    }

    pub fn zeros(spec: &GridSpec) -> Self {
        let components = (0..spec.rank())
            .map(|k| vec![0.0; spec.face_count(k)])
            .collect();
        Self {
            spec: spec.clone(),
            components,
        }
    }

    pub fn from_fn(spec: &GridSpec, f: impl Fn(usize, &[f64]) -> f64) -> Self {
        let components = (0..spec.rank())
            .map(|k| {
                (0..spec.face_count(k))
                    .map(|idx| f(k, &spec.face_center(k, idx)))
                    .collect()
            })
            .collect();
        Self {
            spec: spec.clone(),
            components,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.components[k]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut Vec<f64> {
        &mut self.components[k]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Flat index into component 0 (layout (n0+1, n1)) for a 2D grid.
    pub fn idx_x(&self, i: usize, j: usize) -> usize {
        i * self.spec.dims()[1] + j
    }

    /// Flat index into component 1 (layout (n0, n1+1)) for a 2D grid.
    pub fn idx_y(&self, i: usize, j: usize) -> usize {
        i * (self.spec.dims()[1] + 1) + j
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec.clone(),
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|&v| f(v)).collect())
                .collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.spec.dims(), other.spec.dims());
        Self {
            spec: self.spec.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_dims_and_bad_spacing() {
        assert!(GridSpec::unit(&[1]).is_err());
        assert!(GridSpec::new(&[4], &[0.0], &[0.0]).is_err());
        assert!(GridSpec::new(&[4], &[-1.0], &[0.0]).is_err());
        assert!(GridSpec::unit(&[4, 4, 4]).is_err());
        assert!(GridSpec::unit(&[4, 4]).is_ok());
    }

    #[test]
    fn face_counts_match_layout() {
        let g = GridSpec::unit(&[3, 5]).unwrap();
        assert_eq!(g.face_count(0), 4 * 5);
        assert_eq!(g.face_count(1), 3 * 6);
        assert_eq!(g.cell_count(), 15);
    }

    #[test]
    fn positions_follow_mac_convention() {
        let g = GridSpec::new(&[4, 4], &[0.5, 2.0], &[1.0, -1.0]).unwrap();
        let c = g.cell_center(0);
        assert_eq!(c, vec![1.25, 0.0]);
        // First x-face sits on the domain edge.
        let f = g.face_center(0, 0);
        assert_eq!(f, vec![1.0, 0.0]);
        let f = g.face_center(1, 0);
        assert_eq!(f, vec![1.25, -1.0]);
    }

    #[test]
    fn field_constructors_validate_shape() {
        let g = GridSpec::unit(&[4]).unwrap();
        assert!(CenteredField::new(g.clone(), vec![0.0; 3]).is_err());
        assert!(CenteredField::new(g.clone(), vec![f64::NAN; 4]).is_err());
        assert!(StaggeredField::new(g.clone(), vec![vec![0.0; 5]]).is_ok());
        assert!(StaggeredField::new(g, vec![vec![0.0; 4]]).is_err());
    }
}
