use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::mesh::DomainMesh;

/// Nodal values on a [`DomainMesh`], interior nodes first, then the collar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    values: Vec<f64>,
    n_interior: usize,
}

impl GridFunction {
    pub fn new(mesh: &DomainMesh, values: Vec<f64>) -> Result<Self> {
        check_len(mesh.n_total(), values.len())?;
        Ok(Self {
            values,
            n_interior: mesh.n_interior(),
        })
    }

    pub fn zeros(mesh: &DomainMesh) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn constant(mesh: &DomainMesh, c: f64) -> Self {
        Self {
            values: vec![c; mesh.n_total()],
            n_interior: mesh.n_interior(),
        }
    }

    /// Evaluates `f` at every node.
    pub fn from_fn(mesh: &DomainMesh, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        Self {
            values: (0..mesh.n_total()).map(|i| f(mesh.point(i))).collect(),
            n_interior: mesh.n_interior(),
        }
    }

    /// 1 on Ω, 0 on the collar.
    pub fn indicator(mesh: &DomainMesh) -> Self {
        let mut values = vec![0.0; mesh.n_total()];
        values[..mesh.n_interior()].fill(1.0);
        Self {
            values,
            n_interior: mesh.n_interior(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[..self.n_interior]
    }

    pub fn exterior(&self) -> &[f64] {
        &self.values[self.n_interior..]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            n_interior: self.n_interior,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c·other`.
    pub fn axpy(&self, c: f64, other: &GridFunction) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
            n_interior: self.n_interior,
        }
    }

    /// Negative part `max(−u, 0)`.
    pub fn negative_part(&self) -> Self {
        self.map(|v| (-v).max(0.0))
    }

    pub fn interior_max(&self) -> f64 {
        self.interior()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn interior_min(&self) -> f64 {
        self.interior()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check(&self, mesh: &DomainMesh) -> Result<()> {
        check_len(mesh.n_total(), self.values.len())?;
        check_len(mesh.n_interior(), self.n_interior)
    }
}
