//! Element-local nodal fields.

use crate::error::{MhdError, Result};
use crate::mesh::BoxMesh;

/// Values at every `(element, i, j, k)` point; coincident points are stored once per element.
pub type ScalarField = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        VectorField {
            x: vec![0.0; n],
            y: vec![0.0; n],
            z: vec![0.0; n],
        }
    }

    pub fn from_components(c: [Vec<f64>; 3]) -> Self {
        let [x, y, z] = c;
        VectorField { x, y, z }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn comp(&self, i: usize) -> &[f64] {
        match i {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }

    pub fn comp_mut(&mut self, i: usize) -> &mut Vec<f64> {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            _ => &mut self.z,
        }
    }

    /// `self + a * other`, component-wise.
    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        for c in 0..3 {
            for (s, o) in self.comp_mut(c).iter_mut().zip(other.comp(c)) {
                *s += a * o;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in 0..3 {
            self.comp_mut(c).iter_mut().for_each(|v| *v *= a);
        }
    }

    pub fn max_abs(&self) -> f64 {
        (0..3)
            .flat_map(|c| self.comp(c).iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Piecewise-constant positive coefficient, one value per element.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub values: Vec<f64>,
}

impl CoefficientField {
    pub fn uniform(n_elements: usize, value: f64) -> Self {
        CoefficientField {
            values: vec![value; n_elements],
        }
    }

    /// 1 on fluid elements, `r_w` on solid elements.
    pub fn wall_ratio(mesh: &BoxMesh, r_w: f64) -> Result<Self> {
        if !(r_w > 0.0) || !r_w.is_finite() {
            return Err(MhdError::Validation {
                field: "r_w".into(),
                message: format!("must be positive, got {r_w}"),
            });
        }
        Ok(CoefficientField {
            values: (0..mesh.n_elements())
                .map(|e| if mesh.is_fluid(e) { 1.0 } else { r_w })
                .collect(),
        })
    }
}
