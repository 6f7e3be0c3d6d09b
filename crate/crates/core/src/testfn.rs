//! The tent function `φ_ε` and the closed-form constants built from it.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::mesh::DomainMesh;
use crate::par;
use crate::problem::ProblemSpec;

/// `φ_ε(x) = ε^{−N}(1 − |x|/ε)₊`, zero on the collar.
pub fn phi_eps(mesh: &DomainMesh, eps: f64) -> Result<GridFunction> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Parameter(format!("ε = {eps} must be positive")));
    }
    let origin = vec![0.0; mesh.dim()];
    let margin = mesh.shape().inner_margin(&origin);
    if margin < eps {
        return Err(Error::Parameter(format!(
            "ball of radius ε = {eps} around the origin leaves Ω (margin {margin})"
        )));
    }
    let n = mesh.dim() as i32;
    let scale = eps.powi(-n);
    let mut values = vec![0.0; mesh.n_total()];
    for (i, v) in values.iter_mut().enumerate().take(mesh.n_interior()) {
        let r = mesh.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        *v = scale * (1.0 - r / eps).max(0.0);
    }
    GridFunction::new(mesh, values)
}

/// Volume of the unit ball in ℝᴺ.
pub fn omega_n(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0 + 1.0),
    }
}

/// `K_q = N Ω_N ∫₀¹ (1 − ρ)^q ρ^{N−1} dρ = N Ω_N B(N, q+1)`.
pub fn k_q(n: usize, q: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::Parameter(format!("K_q needs q > 0, got {q}")));
    }
    // B(N, q+1) = (N−1)! / ((q+1)(q+2)···(q+N)) for integer N.
    let beta = (1..n).fold(1.0, |acc, k| acc * k as f64)
        / (1..=n).fold(1.0, |acc, k| acc * (q + k as f64));
    Ok(n as f64 * omega_n(n) * beta)
}

/// `∫₀ᵗ (1 − ρ)² ρ^{N−1} dρ`.
fn tent_mass(n: usize, t: f64) -> f64 {
    let nf = n as f64;
    t.powi(n as i32) * (1.0 / nf - 2.0 * t / (nf + 1.0) + t * t / (nf + 2.0))
}

/// The σ ∈ (0,1) for which `{φ_ε > σε^{−N}}` carries half of `∫φ_ε²`.
pub fn solve_sigma(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    let target = 0.5 * tent_mass(n, 1.0);
    let h = |t: f64| tent_mass(n, t) - target;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    if !(h(lo) < 0.0 && h(hi) > 0.0) {
        return Err(Error::Certificate {
            name: "sigma_bracket",
            detail: format!("no sign change of the half-mass equation for N = {n}"),
        });
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(1.0 - 0.5 * (lo + hi))
}

/// `Σ_{φ > σε^{−N}} vol·φ² / Σ vol·φ²`.
pub fn half_mass_ratio(mesh: &DomainMesh, phi: &GridFunction, eps: f64, sigma: f64) -> f64 {
    let level = sigma * eps.powi(-(mesh.dim() as i32));
    let (mut inner, mut total) = (0.0, 0.0);
    for (v, w) in phi.interior().iter().zip(mesh.interior_volumes()) {
        let m = w * v * v;
        total += m;
        if *v > level {
            inner += m;
        }
    }
    inner / total
}

/// `g(t) = I_ε(tφ)` through the full energy.
pub fn g_of_t(spec: &ProblemSpec, phi: &GridFunction, t: f64) -> Result<f64> {
    spec.energy(&phi.scaled(t))
}

/// `g` and `g'` along the ray `t ↦ tφ` using the quadratic structure
/// `g(t) = t²‖φ‖²/2 − Σ vol·F(tφ)`.
#[derive(Debug, Clone)]
pub struct TentRay<'a> {
    spec: &'a ProblemSpec,
    phi: &'a GridFunction,
    norm_sq: f64,
}

impl<'a> TentRay<'a> {
    pub fn new(spec: &'a ProblemSpec, phi: &'a GridFunction) -> Result<Self> {
        let norm_sq = spec.op().norm_sq(phi)?;
        Ok(Self { spec, phi, norm_sq })
    }

    /// `‖φ‖²_{H^s_ε}`.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn g(&self, t: f64) -> f64 {
        let vol = self.spec.mesh().interior_volumes();
        let potential: f64 = vol
            .iter()
            .zip(self.phi.interior())
            .map(|(w, &v)| w * self.spec.big_f(t * v))
            .sum();
        0.5 * t * t * self.norm_sq - potential
    }

    pub fn g_prime(&self, t: f64) -> f64 {
        let vol = self.spec.mesh().interior_volumes();
        let pairing: f64 = vol
            .iter()
            .zip(self.phi.interior())
            .map(|(w, &v)| w * self.spec.f(t * v) * v)
            .sum();
        t * self.norm_sq - pairing
    }
}

/// Constants of the tent-function estimates and their numeric certificates.
#[derive(Debug, Clone, Serialize)]
pub struct Thresholds {
    pub eps: f64,
    pub norm_sq: f64,
    /// `C_est = ε^N ‖φ_ε‖²_{H^s_ε}`.
    pub c_est: f64,
    pub k2: f64,
    pub sigma: f64,
    pub r1: f64,
    pub r2: f64,
    pub m_r1: f64,
    pub m_r2: f64,
    pub t1: f64,
    pub t2: f64,
    pub c1: f64,
    /// `C₁ ε^N`.
    pub bound: f64,
    pub g_max: f64,
    pub t_max: f64,
}

/// Computes `t₁`, `t₂` and the bound `C₁ε^N` and certifies on samples that
/// `g' < 0` past `t₁`, `g < 0` from `t₂` on, and `max g ≤ C₁ε^N`.
pub fn thresholds(spec: &ProblemSpec, phi: &GridFunction) -> Result<Thresholds> {
    let n = spec.dim();
    let eps = spec.eps();
    let eps_n = eps.powi(n as i32);
    let nl = spec.nonlinearity();
    let ray = TentRay::new(spec, phi)?;
    let norm_sq = ray.norm_sq();
    let c_est = eps_n * norm_sq;
    let k2 = k_q(n, 2.0)?;
    let sigma = solve_sigma(n)?;
    let r1 = 4.0 * c_est / k2;
    let r2 = 2.0 * c_est / k2;
    let m_r1 = nl.superlinear_threshold(r1)?;
    let m_r2 = nl.superlinear_threshold(r2)?;
    let little_m = 0.5 * m_r2 * m_r2 * r2;
    let t1 = m_r1 * eps_n / sigma;
    let t2_energy =
        (2.0 * little_m * spec.mesh().interior_measure() * eps_n / (r2 * k2 - c_est)).sqrt();
    let t2 = 1.1 * t1.max(t2_energy);
    let c1 = c_est * m_r1 * m_r1 / (2.0 * sigma * sigma);
    let bound = c1 * eps_n;

    let exec = spec.op().exec();
    let log_ts = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
        (0..k)
            .map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64))
            .collect()
    };
    let ts = log_ts(t1 * (1.0 + 1e-9), 100.0 * t2, 400);
    let gp = par::map_indexed(exec, ts.len(), |i| ray.g_prime(ts[i]));
    if let Some(i) = gp.iter().position(|&v| v >= 0.0) {
        return Err(Error::Certificate {
            name: "g_prime_negative",
            detail: format!("g'({:e}) = {:e} ≥ 0 with t₁ = {t1:e}", ts[i], gp[i]),
        });
    }
    let ts = log_ts(t2, 100.0 * t2, 400);
    let gv = par::map_indexed(exec, ts.len(), |i| ray.g(ts[i]));
    if let Some(i) = gv.iter().position(|&v| v >= 0.0) {
        return Err(Error::Certificate {
            name: "g_negative",
            detail: format!("g({:e}) = {:e} ≥ 0 with t₂ = {t2:e}", ts[i], gv[i]),
        });
    }

    let (t_max, g_max) = maximize_on(&ray, t2, exec);
    if g_max > bound {
        return Err(Error::Certificate {
            name: "energy_bound",
            detail: format!("max g = {g_max:e} at t = {t_max:e} exceeds C₁ε^N = {bound:e}"),
        });
    }

    Ok(Thresholds {
        eps,
        norm_sq,
        c_est,
        k2,
        sigma,
        r1,
        r2,
        m_r1,
        m_r2,
        t1,
        t2,
        c1,
        bound,
        g_max,
        t_max,
    })
}

/// Maximum of `g` on `[0, t_hi]`: uniform scan, then golden-section refinement.
fn maximize_on(ray: &TentRay<'_>, t_hi: f64, exec: par::Exec) -> (f64, f64) {
    let k = 4001;
    let dt = t_hi / (k - 1) as f64;
    let vals = par::map_indexed(exec, k, |i| ray.g(i as f64 * dt));
    let (imax, _) = vals
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let (mut a, mut b) = (
        (imax as f64 - 1.0).max(0.0) * dt,
        ((imax + 1) as f64 * dt).min(t_hi),
    );
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if ray.g(c) > ray.g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let t = 0.5 * (a + b);
    [(t, ray.g(t)), (imax as f64 * dt, vals[imax])]
        .into_iter()
        .fold(
            (0.0, f64::NEG_INFINITY),
            |acc, p| if p.1 > acc.1 { p } else { acc },
        )
}
