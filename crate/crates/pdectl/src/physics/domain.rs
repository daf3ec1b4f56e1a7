//! Simulation domain description: wall kinds, obstacle and control masks,
//! and the buoyancy direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Solid wall: no flow through, zero normal velocity.
    Closed,
    /// Free boundary: zero-pressure ghost cells, material may leave.
    Open,
}

/// Per-axis pair of boundary kinds, `[low, high]`.
pub type BoundaryPair = [BoundaryKind; 2];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    grid: GridSpec,
    boundaries: Vec<BoundaryPair>,
    obstacle: Vec<bool>,
    control: Option<Vec<bool>>,
    buoyancy: Vec<f64>,
}

impl DomainSpec {
    /// Closed box with no obstacles, unrestricted control and no buoyancy.
    pub fn closed_box(grid: &GridSpec) -> Self {
        Self {
            boundaries: vec![[BoundaryKind::Closed; 2]; grid.rank()],
            obstacle: vec![false; grid.cell_count()],
            control: None,
            buoyancy: vec![0.0; grid.rank()],
            grid: grid.clone(),
        }
    }

    pub fn new(
        grid: &GridSpec,
        boundaries: Vec<BoundaryPair>,
        obstacle: Vec<bool>,
        control: Option<Vec<bool>>,
        buoyancy: Vec<f64>,
    ) -> Result<Self> {
        if boundaries.len() != grid.rank() || buoyancy.len() != grid.rank() {
            return Err(Error::Config(
                "boundary and buoyancy entries must match grid rank".into(),
            ));
        }
        if obstacle.len() != grid.cell_count() {
            return Err(Error::Config("obstacle mask must cover the grid".into()));
        }
        if let Some(c) = &control {
            if c.len() != grid.cell_count() {
                return Err(Error::Config("control mask must cover the grid".into()));
            }
            if c.iter().zip(&obstacle).any(|(&c, &o)| c && o) {
                return Err(Error::Config(
                    "control and obstacle masks must not overlap".into(),
                ));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            boundaries,
            obstacle,
            control,
            buoyancy,
        })
    }

    pub fn with_buoyancy(mut self, buoyancy: Vec<f64>) -> Self {
        assert_eq!(buoyancy.len(), self.grid.rank());
        self.buoyancy = buoyancy;
        self
    }

    pub fn with_open_side(mut self, axis: usize, high: bool) -> Self {
        self.boundaries[axis][usize::from(high)] = BoundaryKind::Open;
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn boundaries(&self) -> &[BoundaryPair] {
        &self.boundaries
    }

    pub fn obstacle_mask(&self) -> &[bool] {
        &self.obstacle
    }

    pub fn control_mask(&self) -> Option<&[bool]> {
        self.control.as_deref()
    }

    pub fn buoyancy(&self) -> &[f64] {
        &self.buoyancy
    }

    pub fn is_solid(&self, cell: usize) -> bool {
        self.obstacle[cell]
    }

    /// True when at least one side is open (the pressure system then has
    /// fixed-value ghost cells and no constant nullspace).
    pub fn has_open_side(&self) -> bool {
        self.boundaries
            .iter()
            .flatten()
            .any(|b| *b == BoundaryKind::Open)
    }

    /// 1.0 for fluid cells, 0.0 for obstacle cells.
    pub fn fluid_mask(&self) -> Vec<f64> {
        self.obstacle
            .iter()
            .map(|&s| if s { 0.0 } else { 1.0 })
            .collect()
    }

    /// Per-component face masks: 0.0 on faces that touch an obstacle cell or
    /// a closed wall, 1.0 elsewhere (open-boundary faces stay free).
    pub fn face_keep_masks(&self) -> Vec<Vec<f64>> {
        let g = &self.grid;
        let mut masks = Vec::new();
        match g.rank() {
            1 => {
                let n = g.dims()[0];
                let mut m = vec![1.0; n + 1];
                for i in 0..=n {
                    let lo = if i == 0 { None } else { Some(i - 1) };
                    let hi = if i == n { None } else { Some(i) };
                    m[i] = self.face_keep(0, lo, hi);
                }
                masks.push(m);
            }
            2 => {
                let [n0, n1] = [g.dims()[0], g.dims()[1]];
                let mut mx = vec![1.0; (n0 + 1) * n1];
                for i in 0..=n0 {
                    for j in 0..n1 {
                        let lo = if i == 0 { None } else { Some((i - 1) * n1 + j) };
                        let hi = if i == n0 { None } else { Some(i * n1 + j) };
                        mx[i * n1 + j] = self.face_keep(0, lo, hi);
                    }
                }
                masks.push(mx);
                let mut my = vec![1.0; n0 * (n1 + 1)];
                for i in 0..n0 {
                    for j in 0..=n1 {
                        let lo = if j == 0 { None } else { Some(i * n1 + j - 1) };
                        let hi = if j == n1 { None } else { Some(i * n1 + j) };
                        my[i * (n1 + 1) + j] = self.face_keep(1, lo, hi);
                    }
                }
                masks.push(my);
            }
            _ => unreachable!(),
        }
        masks
    }

    fn face_keep(&self, axis: usize, lo: Option<usize>, hi: Option<usize>) -> f64 {
        let solid = |c: Option<usize>| c.map(|i| self.is_solid(i)).unwrap_or(false);
        if solid(lo) || solid(hi) {
            return 0.0;
        }
        match (lo, hi) {
            (None, _) if self.boundaries[axis][0] == BoundaryKind::Closed => 0.0,
            (_, None) if self.boundaries[axis][1] == BoundaryKind::Closed => 0.0,
            _ => 1.0,
        }
    }

    /// Face masks restricting force application to the control region:
    /// a face is kept only when every adjacent cell lies in the region.
    /// Without a control mask, this equals [`Self::face_keep_masks`].
    pub fn control_face_masks(&self) -> Vec<Vec<f64>> {
        let Some(control) = &self.control else {
            return self.face_keep_masks();
        };
        let g = &self.grid;
        let inside = |c: Option<usize>| c.map(|i| control[i]).unwrap_or(false);
        let mut masks = Vec::new();
        match g.rank() {
            1 => {
                let n = g.dims()[0];
                let m = (0..=n)
                    .map(|i| {
                        let lo = if i == 0 { None } else { Some(i - 1) };
                        let hi = if i == n { None } else { Some(i) };
                        if inside(lo) && inside(hi) {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect();
                masks.push(m);
            }
            2 => {
                let [n0, n1] = [g.dims()[0], g.dims()[1]];
                let mut mx = vec![0.0; (n0 + 1) * n1];
                for i in 0..=n0 {
                    for j in 0..n1 {
                        let lo = if i == 0 { None } else { Some((i - 1) * n1 + j) };
                        let hi = if i == n0 { None } else { Some(i * n1 + j) };
                        if inside(lo) && inside(hi) {
                            mx[i * n1 + j] = 1.0;
                        }
                    }
                }
                masks.push(mx);
                let mut my = vec![0.0; n0 * (n1 + 1)];
                for i in 0..n0 {
                    for j in 0..=n1 {
                        let lo = if j == 0 { None } else { Some(i * n1 + j - 1) };
                        let hi = if j == n1 { None } else { Some(i * n1 + j) };
                        if inside(lo) && inside(hi) {
                            my[i * (n1 + 1) + j] = 1.0;
                        }
                    }
                }
                masks.push(my);
            }
            _ => unreachable!(),
        }
        masks
    }
}

/// Settings for the iterative pressure solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoissonConfig {
    pub max_iterations: usize,
    /// Relative residual target in the 2-norm. The solver additionally
    /// polishes until the residual max-norm drops below ten times this
    /// value, which is what bounds the post-projection divergence.
    pub tolerance: f64,
}

impl PoissonConfig {
    pub fn new(max_iterations: usize, tolerance: f64) -> Result<Self> {
        if max_iterations == 0 || !(tolerance > 0.0) {
            return Err(Error::Config(
                "Poisson solver needs max_iterations >= 1 and tolerance > 0".into(),
            ));
        }
        Ok(Self {
            max_iterations,
            tolerance,
        })
    }
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            tolerance: 1e-6,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masks_and_overlap_are_validated() {
        let g = GridSpec::unit(&[4, 4]).unwrap();
        let mut obstacle = vec![false; 16];
        obstacle[5] = true;
        let mut control = vec![false; 16];
        control[5] = true;
        assert!(DomainSpec::new(
            &g,
            vec![[BoundaryKind::Closed; 2]; 2],
            obstacle.clone(),
            Some(control),
            vec![0.0, 0.0],
        )
        .is_err());

        let dom = DomainSpec::new(
            &g,
            vec![[BoundaryKind::Closed; 2]; 2],
            obstacle,
            None,
            vec![0.0, 0.0],
        )
        .unwrap();
        let masks = dom.face_keep_masks();
        // Faces around obstacle cell (1,1) are blocked.
        assert_eq!(masks[0][1 * 4 + 1], 0.0);
        assert_eq!(masks[0][2 * 4 + 1], 0.0);
        assert_eq!(masks[1][1 * 5 + 1], 0.0);
        assert_eq!(masks[1][1 * 5 + 2], 0.0);
        // Closed outer walls blocked; interior fluid faces free.
        assert_eq!(masks[0][0], 0.0);
        assert_eq!(masks[0][2 * 4 + 3], 1.0);
    }

    #[test]
    fn open_top_frees_the_high_y_faces() {
        let g = GridSpec::unit(&[3, 3]).unwrap();
        let dom = DomainSpec::closed_box(&g).with_open_side(1, true);
        let masks = dom.face_keep_masks();
        assert_eq!(masks[1][3], 1.0, "top face of column 0 should be free");
        assert_eq!(masks[1][0], 0.0, "bottom face stays closed");
        assert!(dom.has_open_side());
    }
}
