//! Discrete Sobolev constant of the regional seminorm on Ω.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::linalg::{self, SymMatrix};
use crate::nonlocal::FormOperator;

#[derive(Debug, Clone, Copy)]
pub struct SobolevOptions {
    pub max_iter: usize,
    /// Stop once the quotient changes by less than `rel_tol·Q` per step.
    pub rel_tol: f64,
}

impl Default for SobolevOptions {
    fn default() -> Self {
        Self {
            max_iter: 4000,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SobolevEstimate {
    /// `S_h = sqrt(min Q)`.
    pub s_h: f64,
    /// `min Q(u) = regional(u, u) / ‖u‖²_{2*}` over zero-mean `u`.
    pub quotient: f64,
    pub two_star: f64,
    /// `|Ω|_h`.
    pub measure: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub minimizer: Vec<f64>,
}

impl SobolevEstimate {
    /// Constant `S_emb` with `‖u‖²_{2*} ≤ S_emb² ε^{−2s} ‖u‖²_{H^s_ε}` for
    /// every `u`, constants included. Splitting `u` into its mean and a
    /// zero-mean part gives `S_emb² = 2·max(1/Q, |Ω|^{2/2*−1} ε^{2s})`.
    pub fn embedding_constant(&self, eps: f64, s: f64) -> f64 {
        let e2s = eps.powf(2.0 * s);
        let mean_part = self.measure.powf(2.0 / self.two_star - 1.0) * e2s;
        (2.0 * (1.0 / self.quotient).max(mean_part)).sqrt()
    }
}

/// `(Σ vol |u|^q)^{1/q}`.
pub fn lq_norm(vol: &[f64], u: &[f64], q: f64) -> f64 {
    let m = linalg::max_abs(u);
    if m == 0.0 {
        return 0.0;
    }
    let sum: f64 = vol
        .iter()
        .zip(u)
        .map(|(w, v)| w * (v.abs() / m).powf(q))
        .sum();
    m * sum.powf(1.0 / q)
}

struct Quotient<'a> {
    r: &'a SymMatrix,
    vol: &'a [f64],
    q: f64,
    exec: crate::par::Exec,
}

impl Quotient<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let n = lq_norm(self.vol, u, self.q);
        self.r.quad_form(self.exec, u) / (n * n)
    }

    /// Gradient at `u` with `‖u‖_q = 1`.
    fn gradient(&self, u: &[f64], value: f64) -> Vec<f64> {
        let ru = self.r.apply(self.exec, u);
        ru.iter()
            .zip(u)
            .zip(self.vol)
            .map(|((a, &v), w)| 2.0 * (a - value * w * v.abs().powf(self.q - 2.0) * v))
            .collect()
    }
}

/// Minimizes the regional Sobolev quotient over zero-mean grid functions by
/// preconditioned projected gradient descent with Armijo backtracking.
///
/// The preconditioner is `L + c·vol volᵀ`, positive definite because `L`
/// only annihilates constants; applying its inverse to a zero-sum vector
/// returns a zero-mean one, so iterates stay on the constraint set.
pub fn estimate_sobolev_constant(op: &FormOperator, opts: SobolevOptions) -> SobolevEstimate {
    let mesh = op.mesh();
    let vol = mesh.interior_volumes();
    let n = vol.len();
    let q = op.two_star();
    let r = op.regional_stiffness();
    let quot = Quotient {
        r: &r,
        vol,
        q,
        exec: op.exec(),
    };
    let measure = mesh.interior_measure();

    let diag_mean = (0..n).map(|i| r.get(i, i)).sum::<f64>() / n as f64;
    let vol_mean = measure / n as f64;
    let c = diag_mean / (vol_mean * vol_mean * n as f64);
    let m = DMatrix::from_fn(n, n, |i, j| r.get(i, j) + c * vol[i] * vol[j]);
    let chol = m
        .cholesky()
        .expect("regional stiffness plus rank-one mean term is SPD");

    let project = |v: &mut [f64]| {
        let mean = v.iter().sum::<f64>() / measure;
        for (x, w) in v.iter_mut().zip(vol) {
            *x -= mean * w;
        }
    };
    let normalize = |u: &mut [f64]| {
        let nq = lq_norm(vol, u, q);
        u.iter_mut().for_each(|x| *x /= nq);
    };

    // Start from the first coordinate, centered.
    let mut u: Vec<f64> = (0..n).map(|i| mesh.point(i)[0]).collect();
    let mean = linalg::weighted_dot(vol, &u, &vec![1.0; n]) / measure;
    u.iter_mut().for_each(|x| *x -= mean);
    normalize(&mut u);

    let mut value = quot.value(&u);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut g = quot.gradient(&u, value);
        project(&mut g);
        let d = chol.solve(&nalgebra::DVector::from_column_slice(&g));
        let slope = -linalg::dot(d.as_slice(), &g);
        if slope >= 0.0 || -slope <= 1e-28 * value {
            converged = true;
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = u.iter().zip(d.iter()).map(|(a, b)| a - step * b).collect();
            let tv = quot.value(&trial);
            if tv <= value + 1e-4 * step * slope {
                accepted = Some((trial, tv));
                break;
            }
            step *= 0.5;
        }
        let Some((mut next, next_value)) = accepted else {
            converged = true;
            break;
        };
        normalize(&mut next);
        let change = value - next_value;
        u = next;
        value = next_value;
        if change <= opts.rel_tol * value {
            converged = true;
            break;
        }
    }

    SobolevEstimate {
        s_h: value.sqrt(),
        quotient: value,
        two_star: q,
        measure,
        iterations,
        converged,
        minimizer: u,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFunction;
    use crate::mesh::build_interval_mesh;
    use crate::nonlocal::assemble;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lq_norm_of_constant() {
        let vol = vec![0.5; 4];
        let u = vec![1.0; 4];
        assert!((lq_norm(&vol, &u, 4.0) - 2f64.powf(0.25)).abs() < 1e-15);
        assert_eq!(lq_norm(&vol, &[0.0; 4], 4.0), 0.0);
    }

    #[test]
    fn minimizer_has_zero_mean_and_lower_quotient() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.05, 2.0).unwrap();
        let op = assemble(mesh, 0.25, 1.0).unwrap();
        let est = estimate_sobolev_constant(&op, SobolevOptions::default());
        assert!(est.converged, "{est:?}");
        let vol = op.mesh().interior_volumes();
        let mean: f64 = est.minimizer.iter().zip(vol).map(|(u, w)| u * w).sum();
        assert!(mean.abs() < 1e-12);
        let start: Vec<f64> = (0..vol.len()).map(|i| op.mesh().point(i)[0]).collect();
        let r = op.regional_stiffness();
        let q0 = r.quad_form(op.exec(), &start) / lq_norm(vol, &start, 4.0).powi(2);
        assert!(est.quotient < q0);
        assert!(est.quotient > 0.0);
    }

    #[test]
    fn embedding_bound_on_random_functions() {
        let mesh = build_interval_mesh(-1.0, 1.0, 0.05, 2.0).unwrap();
        let op = assemble(mesh, 0.25, 0.3).unwrap();
        let est = estimate_sobolev_constant(&op, SobolevOptions::default());
        let s_emb = est.embedding_constant(0.3, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let u = GridFunction::from_fn(op.mesh(), |_| rng.gen_range(-1.0..1.5));
            let lhs = lq_norm(op.mesh().interior_volumes(), u.interior(), 4.0).powi(2);
            let rhs = s_emb * s_emb * 0.3f64.powf(-0.5) * op.norm_sq(&u).unwrap();
            assert!(lhs <= rhs, "{lhs} > {rhs}");
        }
    }
}
