//! Singular-kernel weights and the operators derived from them.
//!
//! One symmetric set of pair weights
//! `w_ij = C_{N,s}·vol_i·vol_j / |x_i − x_j|^{N+2s}` over the admissible pairs
//! (everything except collar×collar) realizes the fractional Laplacian on Ω,
//! the nonlocal Neumann derivative on the collar, and the energy form. Because
//! all three share the weights, the discrete Gauss and Green identities hold up
//! to rounding.
//!
//! The self-cell weight is zero: on a symmetric cell the first-order Taylor
//! part of the integrand cancels, leaving an O(h^{2−2s}) local error. The kernel
//! beyond the collar is dropped from the identities; [`FormOperator::frac_laplacian_far_field`]
//! adds it back analytically for a prescribed far-field value.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{check_len, Error, Result};
use crate::grid::GridFunction;
use crate::linalg::SymMatrix;
use crate::mesh::{DomainMesh, DomainShape};
use crate::par::{self, Exec};

/// `C_{N,s} = 4^s·s·Γ(N/2 + s) / (π^{N/2}·Γ(1 − s))`.
pub fn normalization_constant(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    4f64.powf(s) * s * gamma(0.5 * n + s) / (PI.powf(0.5 * n) * gamma(1.0 - s))
}

/// Fractional critical exponent `2*_s = 2N/(N − 2s)`.
pub fn critical_exponent(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    2.0 * n / (n - 2.0 * s)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AssemblyOptions {
    /// Overrides the default `C_{N,s}`.
    pub c_ns: Option<f64>,
    pub exec: Exec,
}

#[derive(Debug, Clone)]
struct KernelWeights {
    /// `n_int × n_total`, row-major; zero on the diagonal.
    interior_rows: Vec<f64>,
    /// `n_ext × n_int`: the interior–collar block seen from the collar side.
    exterior_rows: Vec<f64>,
    /// Per interior node: `C_{N,s}·∫ |x_i − y|^{−N−2s} dy` over the region
    /// beyond the collar.
    tail: Vec<f64>,
}

/// Assembled kernel weights for a mesh, order `s` and scale `ε`.
#[derive(Debug, Clone)]
pub struct FormOperator {
    mesh: Arc<DomainMesh>,
    s: f64,
    eps: f64,
    c_ns: f64,
    exec: Exec,
    weights: Arc<KernelWeights>,
}

/// Outcome of an identity check: absolute residual and the magnitude of
/// the summed terms.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityCheck {
    pub residual: f64,
    pub scale: f64,
}

impl IdentityCheck {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual
        } else {
            self.residual / self.scale
        }
    }
}

pub fn assemble(mesh: impl Into<Arc<DomainMesh>>, s: f64, eps: f64) -> Result<FormOperator> {
    assemble_with(mesh, s, eps, AssemblyOptions::default())
}

pub fn assemble_with(
    mesh: impl Into<Arc<DomainMesh>>,
    s: f64,
    eps: f64,
    opts: AssemblyOptions,
) -> Result<FormOperator> {
    let mesh = mesh.into();
    let dim = mesh.dim();
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Parameter(format!("s = {s} must lie in (0, 1)")));
    }
    if (dim as f64) <= 2.0 * s {
        return Err(Error::Parameter(format!(
            "N = {dim} must exceed 2s = {}",
            2.0 * s
        )));
    }
    check_eps(eps)?;
    let c_ns = opts.c_ns.unwrap_or_else(|| normalization_constant(dim, s));
    if !(c_ns.is_finite() && c_ns > 0.0) {
        return Err(Error::Parameter(format!(
            "C_(N,s) = {c_ns} must be positive"
        )));
    }

    let n_int = mesh.n_interior();
    let n_tot = mesh.n_total();
    let n_ext = mesh.n_exterior();
    let half_power = 0.5 * (dim as f64 + 2.0 * s);

    let mut interior_rows = vec![0.0; n_int * n_tot];
    par::for_each_row(opts.exec, &mut interior_rows, n_tot, |i, row| {
        let xi = mesh.point(i);
        let ci = c_ns * mesh.volume(i);
        for (j, w) in row.iter_mut().enumerate() {
            if j != i {
                let r2: f64 = xi
                    .iter()
                    .zip(mesh.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                *w = ci * mesh.volume(j) * r2.powf(-half_power);
            }
        }
    });

    let mut exterior_rows = vec![0.0; n_ext * n_int];
    par::for_each_row(opts.exec, &mut exterior_rows, n_int, |k, row| {
        for (j, w) in row.iter_mut().enumerate() {
            *w = interior_rows[j * n_tot + n_int + k];
        }
    });

    let tail = par::map_indexed(opts.exec, n_int, |i| c_ns * far_field_mass(&mesh, i, s));

    Ok(FormOperator {
        mesh,
        s,
        eps,
        c_ns,
        exec: opts.exec,
        weights: Arc::new(KernelWeights {
            interior_rows,
            exterior_rows,
            tail,
        }),
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("ε = {eps} must be positive")))
    }
}

/// `∫ |x_i − y|^{−N−2s} dy` over the region outside the collar.
fn far_field_mass(mesh: &DomainMesh, i: usize, s: f64) -> f64 {
    let x = mesh.point(i);
    match mesh.shape() {
        DomainShape::Interval { .. } => {
            let (lo, hi) = mesh.outer_box()[0];
            ((x[0] - lo).powf(-2.0 * s) + (hi - x[0]).powf(-2.0 * s)) / (2.0 * s)
        }
        shape => {
            // Polar integration: ∫_0^{2π} r(θ)^{−2s}/(2s) dθ, with r(θ) the distance
            // along the ray to the level set dist(·, Ω) = R_ext.
            const RAYS: usize = 512;
            let r_ext = mesh.r_ext();
            let t_max = shape.diameter() + r_ext + 1.0;
            let mut acc = 0.0;
            for k in 0..RAYS {
                let theta = 2.0 * PI * (k as f64 + 0.5) / RAYS as f64;
                let (dx, dy) = (theta.cos(), theta.sin());
                let (mut lo, mut hi) = (0.0, t_max);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if shape.distance(&[x[0] + mid * dx, x[1] + mid * dy]) < r_ext {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                acc += (0.5 * (lo + hi)).powf(-2.0 * s);
            }
            acc * (2.0 * PI / RAYS as f64) / (2.0 * s)
        }
    }
}

impl FormOperator {
    /// Same weights, different ε.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        Ok(Self {
            eps,
            ..self.clone()
        })
    }

    pub fn with_exec(&self, exec: Exec) -> Self {
        Self {
            exec,
            ..self.clone()
        }
    }

    pub fn mesh(&self) -> &DomainMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<DomainMesh> {
        Arc::clone(&self.mesh)
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn c_ns(&self) -> f64 {
        self.c_ns
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    /// `ε^{2s}`.
    pub fn eps_factor(&self) -> f64 {
        self.eps.powf(2.0 * self.s)
    }

    pub fn two_star(&self) -> f64 {
        critical_exponent(self.dim(), self.s)
    }

    fn n_int(&self) -> usize {
        self.mesh.n_interior()
    }

    fn n_tot(&self) -> usize {
        self.mesh.n_total()
    }

    fn interior_row(&self, i: usize) -> &[f64] {
        let n = self.n_tot();
        &self.weights.interior_rows[i * n..(i + 1) * n]
    }

    fn exterior_row(&self, k: usize) -> &[f64] {
        let n = self.n_int();
        &self.weights.exterior_rows[k * n..(k + 1) * n]
    }

    /// Pair weight `w_ij`; zero on the diagonal and between collar nodes.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let n_int = self.n_int();
        match (i < n_int, j < n_int) {
            (true, _) => self.interior_row(i)[j],
            (false, true) => self.exterior_row(i - n_int)[j],
            (false, false) => 0.0,
        }
    }

    /// Far-field kernel mass per interior node (see module docs).
    pub fn tail(&self) -> &[f64] {
        &self.weights.tail
    }

    /// Scales one interior–interior weight without touching its transpose.
    /// Fault injection for the identity suite.
    #[doc(hidden)]
    pub fn inject_asymmetry(&mut self, factor: f64) {
        if self.n_int() < 2 {
            return;
        }
        let weights = Arc::make_mut(&mut self.weights);
        weights.interior_rows[1] *= factor;
    }

    /// `(−Δ)ˢu` at the interior nodes, kernel truncated at the collar edge.
    pub fn frac_laplacian(&self, u: &GridFunction) -> Result<Vec<f64>> {
        u.check(&self.mesh)?;
        let vals = u.values();
        Ok(par::map_indexed(self.exec, self.n_int(), |i| {
            let ui = vals[i];
            let acc: f64 = self
                .interior_row(i)
                .iter()
                .zip(vals)
                .map(|(w, uj)| w * (ui - uj))
                .sum();
            acc / self.mesh.volume(i)
        }))
    }

    /// `(−Δ)ˢu` with `u ≡ far_value` beyond the collar.
    pub fn frac_laplacian_far_field(&self, u: &GridFunction, far_value: f64) -> Result<Vec<f64>> {
        let mut out = self.frac_laplacian(u)?;
        for ((o, t), ui) in out.iter_mut().zip(self.tail()).zip(u.interior()) {
            *o += t * (ui - far_value);
        }
        Ok(out)
    }

    /// `𝒩ₛu` at the collar nodes.
    pub fn neumann_derivative(&self, u: &GridFunction) -> Result<Vec<f64>> {
        u.check(&self.mesh)?;
        let vals = u.values();
        let n_int = self.n_int();
        Ok(par::map_indexed(self.exec, self.mesh.n_exterior(), |k| {
            let uk = vals[n_int + k];
            let acc: f64 = self
                .exterior_row(k)
                .iter()
                .zip(&vals[..n_int])
                .map(|(w, uj)| w * (uk - uj))
                .sum();
            acc / self.mesh.volume(n_int + k)
        }))
    }

    /// Collar values making the discrete `𝒩ₛu` vanish: kernel-weighted
    /// averages of the interior values.
    pub fn exterior_extension(&self, u_int: &[f64]) -> Result<GridFunction> {
        check_len(self.n_int(), u_int.len())?;
        let ext = par::map_indexed(self.exec, self.mesh.n_exterior(), |k| {
            let row = self.exterior_row(k);
            let num: f64 = row.iter().zip(u_int).map(|(w, u)| w * u).sum();
            let den: f64 = row.iter().sum();
            num / den
        });
        let mut values = Vec::with_capacity(self.n_tot());
        values.extend_from_slice(u_int);
        values.extend(ext);
        GridFunction::new(&self.mesh, values)
    }

    /// Returns `(Σ, Σ|·|)` of `½ Σ_{admissible ordered pairs} w (Δu)(Δv)`.
    fn seminorm_parts(&self, u: &GridFunction, v: &GridFunction) -> Result<(f64, f64)> {
        u.check(&self.mesh)?;
        v.check(&self.mesh)?;
        let (uv, vv) = (u.values(), v.values());
        let n_int = self.n_int();
        let rows = par::map_indexed(self.exec, n_int, |i| {
            let (ui, vi) = (uv[i], vv[i]);
            let row = self.interior_row(i);
            let mut acc = 0.0;
            let mut abs = 0.0;
            for (j, w) in row.iter().enumerate() {
                // Interior pairs are visited from both rows; collar pairs once.
                let c = if j < n_int { 0.5 } else { 1.0 };
                let t = c * w * (ui - uv[j]) * (vi - vv[j]);
                acc += t;
                abs += t.abs();
            }
            (acc, abs)
        });
        Ok(rows
            .iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y)))
    }

    /// `(C_{N,s}/2)∬_{ℝ^{2N}∖(Ωᶜ)²} (u(x)−u(y))(v(x)−v(y))/|x−y|^{N+2s}`, without ε.
    pub fn seminorm(&self, u: &GridFunction, v: &GridFunction) -> Result<f64> {
        Ok(self.seminorm_parts(u, v)?.0)
    }

    /// The same double integral restricted to Ω×Ω.
    pub fn regional_seminorm(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let n_int = self.n_int();
        check_len(n_int, u.len())?;
        check_len(n_int, v.len())?;
        let rows = par::map_indexed(self.exec, n_int, |i| {
            let row = &self.interior_row(i)[..n_int];
            0.5 * row
                .iter()
                .zip(u)
                .zip(v)
                .map(|((w, uj), vj)| w * (u[i] - uj) * (v[i] - vj))
                .sum::<f64>()
        });
        Ok(rows.iter().sum())
    }

    /// `⟨u, v⟩_{ε,s} = ε^{2s}·seminorm(u, v) + Σ_Ω vol·u·v`.
    pub fn bilinear_form(&self, u: &GridFunction, v: &GridFunction) -> Result<f64> {
        let semi = self.seminorm(u, v)?;
        let mass: f64 = self
            .mesh
            .interior_volumes()
            .iter()
            .zip(u.interior())
            .zip(v.interior())
            .map(|((w, a), b)| w * a * b)
            .sum();
        Ok(self.eps_factor() * semi + mass)
    }

    pub fn norm_sq(&self, u: &GridFunction) -> Result<f64> {
        self.bilinear_form(u, u)
    }

    /// Green identity: `seminorm(u, v) = Σ_Ω vol·v·(−Δ)ˢu + Σ_collar vol·v·𝒩ₛu`.
    pub fn check_integration_by_parts(
        &self,
        u: &GridFunction,
        v: &GridFunction,
    ) -> Result<IdentityCheck> {
        let (lhs, lhs_abs) = self.seminorm_parts(u, v)?;
        let lap = self.frac_laplacian(u)?;
        let neu = self.neumann_derivative(u)?;
        let (rhs, rhs_abs) = self.volume_pairing(v.values(), &lap, &neu);
        Ok(IdentityCheck {
            residual: (lhs - rhs).abs(),
            scale: lhs_abs + rhs_abs,
        })
    }

    /// Gauss identity: `Σ_Ω vol·(−Δ)ˢu + Σ_collar vol·𝒩ₛu = 0`.
    pub fn check_divergence(&self, u: &GridFunction) -> Result<IdentityCheck> {
        let lap = self.frac_laplacian(u)?;
        let neu = self.neumann_derivative(u)?;
        let ones = vec![1.0; self.n_tot()];
        let (sum, abs) = self.volume_pairing(&ones, &lap, &neu);
        Ok(IdentityCheck {
            residual: sum.abs(),
            scale: abs,
        })
    }

    /// The two volume sums of the divergence identity, returned separately.
    pub fn divergence_sums(&self, u: &GridFunction) -> Result<(f64, f64)> {
        let lap = self.frac_laplacian(u)?;
        let neu = self.neumann_derivative(u)?;
        let n_int = self.n_int();
        let vol = self.mesh.volumes();
        let interior = lap.iter().zip(&vol[..n_int]).map(|(l, w)| l * w).sum();
        let exterior = neu.iter().zip(&vol[n_int..]).map(|(l, w)| l * w).sum();
        Ok((interior, exterior))
    }

    fn volume_pairing(&self, v: &[f64], lap: &[f64], neu: &[f64]) -> (f64, f64) {
        let n_int = self.n_int();
        let vol = self.mesh.volumes();
        let terms = lap
            .iter()
            .zip(&v[..n_int])
            .zip(&vol[..n_int])
            .chain(neu.iter().zip(&v[n_int..]).zip(&vol[n_int..]))
            .map(|((l, vi), w)| w * vi * l);
        terms.fold((0.0, 0.0), |(s, a), t| (s + t, a + t.abs()))
    }

    /// Interior stiffness `A` with `uᵀAu = seminorm(ū, ū)` where `ū` is the
    /// Neumann extension of `u`; the collar degrees of freedom are eliminated.
    pub fn reduced_stiffness(&self) -> SymMatrix {
        let n = self.n_int();
        let n_ext = self.mesh.n_exterior();
        let ext_sums: Vec<f64> = (0..n_ext)
            .map(|k| self.exterior_row(k).iter().sum())
            .collect();
        let mut data = vec![0.0; n * n];
        par::for_each_row(self.exec, &mut data, n, |i, out| {
            let row = self.interior_row(i);
            for j in 0..n {
                out[j] = -row[j];
            }
            out[i] = row.iter().sum();
            for (k, &wik) in row[n..].iter().enumerate() {
                let c = wik / ext_sums[k];
                for (o, wjk) in out.iter_mut().zip(self.exterior_row(k)) {
                    *o -= c * wjk;
                }
            }
        });
        SymMatrix::from_rows_symmetrized(n, data)
    }

    /// Regional stiffness `L` on Ω×Ω: `uᵀLu = regional_seminorm(u, u)`.
    pub fn regional_stiffness(&self) -> SymMatrix {
        let n = self.n_int();
        let mut data = vec![0.0; n * n];
        par::for_each_row(self.exec, &mut data, n, |i, out| {
            let row = &self.interior_row(i)[..n];
            for j in 0..n {
                out[j] = -row[j];
            }
            out[i] = row.iter().sum();
        });
        SymMatrix::from_rows_symmetrized(n, data)
    }
}

/// Both sides of the dilation identity
/// `‖u‖² = ε^N [regional(v_ε) + ‖v_ε‖²_{L²(Ω_ε)}]` with `v_ε(x) = u(εx)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub relative_residual: f64,
}

/// Evaluates the dilation identity on `mesh` (spacing h) and on the same
/// lattice scaled by `1/ε` (spacing h/ε), with the regional norm
/// `ε^{2s}·regional(u) + ‖u‖²_{L²(Ω)}`.
pub fn verify_scaling_identity(
    mesh: &DomainMesh,
    s: f64,
    eps: f64,
    u: impl Fn(&[f64]) -> f64,
    exec: Exec,
) -> Result<ScalingCheck> {
    check_eps(eps)?;
    let dim = mesh.dim();
    let c = normalization_constant(dim, s);
    let lhs = {
        let vals: Vec<f64> = (0..mesh.n_interior()).map(|i| u(mesh.point(i))).collect();
        eps.powf(2.0 * s) * regional_sum(mesh, s, c, &vals, exec) + mass(mesh, &vals)
    };
    let scaled = mesh.scaled(1.0 / eps)?;
    let rhs = {
        let vals: Vec<f64> = (0..scaled.n_interior())
            .map(|i| {
                let x: Vec<f64> = scaled.point(i).iter().map(|c| eps * c).collect();
                u(&x)
            })
            .collect();
        eps.powi(dim as i32) * (regional_sum(&scaled, s, c, &vals, exec) + mass(&scaled, &vals))
    };
    let relative_residual = if lhs == 0.0 {
        (lhs - rhs).abs()
    } else {
        ((lhs - rhs) / lhs).abs()
    };
    Ok(ScalingCheck {
        lhs,
        rhs,
        relative_residual,
    })
}

fn regional_sum(mesh: &DomainMesh, s: f64, c: f64, u: &[f64], exec: Exec) -> f64 {
    let n = mesh.n_interior();
    let half_power = 0.5 * (mesh.dim() as f64 + 2.0 * s);
    par::map_indexed(exec, n, |i| {
        let xi = mesh.point(i);
        let mut acc = 0.0;
        for j in 0..n {
            if j != i {
                let r2: f64 = xi
                    .iter()
                    .zip(mesh.point(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let d = u[i] - u[j];
                acc += mesh.volume(i) * mesh.volume(j) * d * d * r2.powf(-half_power);
            }
        }
        0.5 * c * acc
    })
    .iter()
    .sum()
}

fn mass(mesh: &DomainMesh, u: &[f64]) -> f64 {
    mesh.interior_volumes()
        .iter()
        .zip(u)
        .map(|(w, v)| w * v * v)
        .sum()
}
