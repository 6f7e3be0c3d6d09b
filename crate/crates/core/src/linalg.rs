//! Dense symmetric matrices with row-parallel products.

use nalgebra::DMatrix;

use crate::par::{self, Exec};

/// Row-major dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from row-major data and symmetrizes as `(A + Aᵀ)/2`.
    pub fn from_rows_symmetrized(n: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = m;
                data[j * n + i] = m;
            }
        }
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// `A x`.
    pub fn apply(&self, exec: Exec, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        par::map_indexed(exec, self.n, |i| dot(self.row(i), x))
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, exec: Exec, x: &[f64]) -> f64 {
        dot(&self.apply(exec, x), x)
    }

    /// `self + diag(d)` scaled: `c·A + diag(d)`.
    pub fn scaled_plus_diag(&self, c: f64, d: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, j| {
            let v = c * self.data[i * n + j];
            if i == j {
                v + d[i]
            } else {
                v
            }
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Volume-weighted inner product `Σ vol·a·b`.
pub fn weighted_dot(vol: &[f64], a: &[f64], b: &[f64]) -> f64 {
    vol.iter().zip(a).zip(b).map(|((w, x), y)| w * x * y).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
