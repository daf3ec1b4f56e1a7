//! Parametric 2D shape library rasterized to density fields for the shape
//! transition experiments.

use serde::{Deserialize, Serialize};

use crate::fields::{CenteredField, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disk,
    Square,
    Rectangle,
    Triangle,
    Diamond,
    Ring,
    Cross,
    LShape,
    BarHorizontal,
    BarVertical,
}

pub const ALL_SHAPES: [Shape; 10] = [
    Shape::Disk,
    Shape::Square,
    Shape::Rectangle,
    Shape::Triangle,
    Shape::Diamond,
    Shape::Ring,
    Shape::Cross,
    Shape::LShape,
    Shape::BarHorizontal,
    Shape::BarVertical,
];

impl Shape {
    /// Signed membership in shape-local coordinates with `size` the
    /// half-extent: returns true when (dx, dy) lies inside.
    fn contains(&self, dx: f64, dy: f64, s: f64) -> bool {
        match self {
            Shape::Disk => dx * dx + dy * dy <= s * s,
            Shape::Square => dx.abs() <= s && dy.abs() <= s,
            Shape::Rectangle => dx.abs() <= s && dy.abs() <= 0.55 * s,
            Shape::Triangle => {
                // Upward triangle: base at -s, apex at +s.
                dy >= -s && dy <= s && dx.abs() <= (s - dy) * 0.5
            }
            Shape::Diamond => dx.abs() + dy.abs() <= s,
            Shape::Ring => {
                let r2 = dx * dx + dy * dy;
                r2 <= s * s && r2 >= (0.45 * s) * (0.45 * s)
            }
            Shape::Cross => {
                (dx.abs() <= 0.35 * s && dy.abs() <= s) || (dy.abs() <= 0.35 * s && dx.abs() <= s)
            }
            Shape::LShape => {
                (dx.abs() <= 0.35 * s && dy.abs() <= s)
                    || (dy >= -s && dy <= -0.3 * s && dx >= -0.35 * s && dx <= s)
            }
            Shape::BarHorizontal => dx.abs() <= s && dy.abs() <= 0.3 * s,
            Shape::BarVertical => dx.abs() <= 0.3 * s && dy.abs() <= s,
        }
    }

    /// Rasterize at a physical center with half-extent `size`, sampling each
    /// cell at its center; inside cells get density one.
    pub fn rasterize(&self, spec: &GridSpec, center: &[f64], size: f64) -> CenteredField {
        CenteredField::from_fn(spec, |p| {
            if self.contains(p[0] - center[0], p[1] - center[1], size) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Scale `target` so its total mass matches `reference`.
pub fn match_mass(reference: &CenteredField, target: &CenteredField) -> CenteredField {
    let c = reference.sum() / target.sum();
    target.map(|v| c * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shape_has_positive_mass_and_fits_with_margin() {
        let g = GridSpec::unit(&[32, 32]).unwrap();
        for shape in ALL_SHAPES {
            let f = shape.rasterize(&g, &[16.0, 16.0], 6.0);
            assert!(f.sum() > 0.0, "{shape:?} rasterized empty");
            // No mass on the outer two-cell ring.
            for i in 0..32 {
                for j in 0..32 {
                    if i < 2 || j < 2 || i >= 30 || j >= 30 {
                        assert_eq!(f.at2(i, j), 0.0, "{shape:?} touches the border");
                    }
                }
            }
        }
    }

    #[test]
    fn mass_matching_is_exact() {
        let g = GridSpec::unit(&[16, 16]).unwrap();
        let a = Shape::Disk.rasterize(&g, &[8.0, 8.0], 3.0);
        let b = Shape::Cross.rasterize(&g, &[8.0, 8.0], 4.0);
        let b2 = match_mass(&a, &b);
        assert!((b2.sum() - a.sum()).abs() < 1e-9);
    }
}
