//! Mountain-pass critical points of `I_ε` by path deformation, plus the
//! certificates attached to them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::linalg;
use crate::par;
use crate::problem::{check_hypotheses, ProblemSpec, ReducedProblem};
use crate::sobolev::{lq_norm, SobolevEstimate};
use crate::testfn::{self, Thresholds};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MpaConfig {
    /// Vertices of the discrete path, endpoints included.
    pub path_points: usize,
    /// Stopping tolerance relative to `max|∇I(e)|`.
    pub grad_tol_rel: f64,
    /// Absolute tolerance; overrides `grad_tol_rel` when set.
    pub grad_tol_abs: Option<f64>,
    pub max_outer: usize,
    /// Largest trial step of the descent line search.
    pub descent_step: f64,
    /// Hand over to Newton once the residual drops below `newton_switch·max|u|`.
    pub newton_switch: f64,
    pub max_newton: usize,
    /// Amplitude (relative to `max e`) of a seeded perturbation of the initial path.
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for MpaConfig {
    fn default() -> Self {
        Self {
            path_points: 33,
            grad_tol_rel: 1e-8,
            grad_tol_abs: None,
            max_outer: 5000,
            descent_step: 1.0,
            newton_switch: 1e-1,
            max_newton: 40,
            perturbation: 0.0,
            seed: 0,
        }
    }
}

impl MpaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.path_points < 8 {
            return Err(Error::Parameter(format!(
                "solver.path_points = {} must be at least 8",
                self.path_points
            )));
        }
        if !(self.grad_tol_rel > 0.0) || self.grad_tol_abs.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Parameter("solver.grad_tol must be positive".into()));
        }
        if !(self.descent_step > 0.0) {
            return Err(Error::Parameter(
                "solver.descent_step must be positive".into(),
            ));
        }
        if !(self.newton_switch > 0.0) {
            return Err(Error::Parameter(
                "solver.newton_switch must be positive".into(),
            ));
        }
        if !(self.perturbation >= 0.0) {
            return Err(Error::Parameter(
                "solver.perturbation must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub eps: f64,
    #[serde(skip)]
    pub u: GridFunction,
    /// `c_ε = I_ε(u)`.
    pub level: f64,
    pub residual: f64,
    pub grad_tol: f64,
    pub min_u: f64,
    pub max_u: f64,
    /// `c_ε / min_{μ ∈ Fix f} I_ε(μ)`.
    pub energy_vs_constant: f64,
    pub norm_sq: f64,
    pub iterations: usize,
    pub descent_iterations: usize,
    pub newton_iterations: usize,
    pub converged: bool,
    /// Volume-weighted std/mean of `u` on Ω.
    pub nonconstancy: f64,
    pub constant_capture: bool,
    /// Sampled path maximum after each outer iteration.
    pub path_max_history: Vec<f64>,
}

/// `e = t₂φ_ε`, certified to satisfy `I_ε(e) < 0`.
pub fn endpoint(spec: &ProblemSpec, phi: &GridFunction) -> Result<(GridFunction, Thresholds)> {
    let th = testfn::thresholds(spec, phi)?;
    let e = phi.scaled(th.t2);
    let energy = spec.energy(&e)?;
    if !(energy < 0.0) {
        return Err(Error::Certificate {
            name: "endpoint_energy",
            detail: format!("I_ε(e) = {energy:e} is not negative at t₂ = {:e}", th.t2),
        });
    }
    Ok((e, th))
}

/// Constants of the mountain-pass geometry `I_ε ≥ δ` on `‖u‖ = ρ`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PassGeometry {
    /// `a = 1/2 − η`.
    pub a: f64,
    /// `B` in `I_ε(u) ≥ a‖u‖² − B‖u‖^p`.
    pub b: f64,
    pub s_emb: f64,
    pub rho: f64,
    pub delta: f64,
}

/// From `F(t) ≤ ηt²/2 + C_η t^p/p`, Hölder and the embedding constant:
/// `I_ε(u) ≥ a‖u‖² − B‖u‖^p` with
/// `B = (C_η/p)|Ω|^{1−p/2*}(S_emb²ε^{−2s})^{p/2}`.
/// Taking `ρ = (a/2B)^{1/(p−2)}` gives `δ = ρ²(a − Bρ^{p−2}) = aρ²/2`.
pub fn pass_geometry(spec: &ProblemSpec, sobolev: &SobolevEstimate) -> Result<PassGeometry> {
    let nl = spec.nonlinearity();
    let a = 0.5 - nl.eta;
    if !(a > 0.0) {
        return Err(Error::Parameter(format!(
            "η = {} must be below 1/2",
            nl.eta
        )));
    }
    let p = nl.p;
    let s_emb = sobolev.embedding_constant(spec.eps(), spec.s());
    let big_a = s_emb * s_emb * spec.eps().powf(-2.0 * spec.s());
    let measure = spec.mesh().interior_measure();
    let b = nl.c_eta / p * measure.powf(1.0 - p / spec.two_star()) * big_a.powf(0.5 * p);
    let rho = (a / (2.0 * b)).powf(1.0 / (p - 2.0));
    let delta = rho * rho * (a - b * rho.powf(p - 2.0));
    Ok(PassGeometry {
        a,
        b,
        s_emb,
        rho,
        delta,
    })
}

struct Vertex {
    x: Vec<f64>,
    /// Cached `A x`.
    ax: Vec<f64>,
    energy: f64,
}

/// Maximum of `I` along one segment of the polyline.
#[derive(Clone, Copy)]
struct SegmentMax {
    lambda: f64,
    energy: f64,
}

struct Solver<'a> {
    red: &'a ReducedProblem,
    chol: Cholesky<f64, Dyn>,
    exec: par::Exec,
}

impl Solver<'_> {
    fn vol(&self) -> &[f64] {
        self.red.spec().mesh().interior_volumes()
    }

    fn ef(&self) -> f64 {
        self.red.spec().op().eps_factor()
    }

    fn local(&self, x: &[f64]) -> f64 {
        let spec = self.red.spec();
        self.vol()
            .iter()
            .zip(x)
            .map(|(w, &v)| w * (0.5 * v * v - spec.big_f(v)))
            .sum()
    }

    fn vertex(&self, x: Vec<f64>) -> Vertex {
        let ax = self.red.stiffness().apply(par::Exec::Sequential, &x);
        let energy = 0.5 * self.ef() * linalg::dot(&x, &ax) + self.local(&x);
        Vertex { x, ax, energy }
    }

    fn vertices(&self, xs: Vec<Vec<f64>>) -> Vec<Vertex> {
        par::map_indexed(self.exec, xs.len(), |k| self.vertex(xs[k].clone()))
    }

    /// Golden-section search of `λ ↦ I(a + λ(b − a))` after a coarse scan.
    /// The quadratic part is evaluated from the cached products `A a`, `A b`.
    fn segment_max(&self, a: &Vertex, b: &Vertex) -> SegmentMax {
        let d: Vec<f64> = b.x.iter().zip(&a.x).map(|(p, q)| p - q).collect();
        let ad: Vec<f64> = b.ax.iter().zip(&a.ax).map(|(p, q)| p - q).collect();
        let aa = linalg::dot(&a.x, &a.ax);
        let a_d = linalg::dot(&a.x, &ad);
        let dd = linalg::dot(&d, &ad);
        let ef = self.ef();
        let spec = self.red.spec();
        let vol = self.vol();
        let energy = |lam: f64| {
            if lam == 0.0 {
                return a.energy;
            }
            if lam == 1.0 {
                return b.energy;
            }
            let quad = 0.5 * ef * (aa + 2.0 * lam * a_d + lam * lam * dd);
            let local: f64 = vol
                .iter()
                .zip(&a.x)
                .zip(&d)
                .map(|((w, &p), &q)| {
                    let v = p + lam * q;
                    w * (0.5 * v * v - spec.big_f(v))
                })
                .sum();
            quad + local
        };
        const SCAN: usize = 8;
        let mut best = SegmentMax {
            lambda: 0.0,
            energy: a.energy,
        };
        for i in 1..=SCAN {
            let lam = i as f64 / SCAN as f64;
            let e = energy(lam);
            if e > best.energy {
                best = SegmentMax {
                    lambda: lam,
                    energy: e,
                };
            }
        }
        let h = 1.0 / SCAN as f64;
        let (mut lo, mut hi) = ((best.lambda - h).max(0.0), (best.lambda + h).min(1.0));
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - ratio * (hi - lo);
        let mut dpt = lo + ratio * (hi - lo);
        let (mut ec, mut edp) = (energy(c), energy(dpt));
        while hi - lo > 1e-10 {
            if ec > edp {
                hi = dpt;
                dpt = c;
                edp = ec;
                c = hi - ratio * (hi - lo);
                ec = energy(c);
            } else {
                lo = c;
                c = dpt;
                ec = edp;
                dpt = lo + ratio * (hi - lo);
                edp = energy(dpt);
            }
        }
        let lam = 0.5 * (lo + hi);
        let e = energy(lam);
        if e > best.energy {
            best = SegmentMax {
                lambda: lam,
                energy: e,
            };
        }
        best
    }

    fn segment_maxima(&self, path: &[Vertex]) -> Vec<SegmentMax> {
        par::map_indexed(self.exec, path.len() - 1, |k| {
            self.segment_max(&path[k], &path[k + 1])
        })
    }

    fn form_dist(&self, a: &Vertex, b: &Vertex) -> f64 {
        let d2: f64 = self.ef()
            * b.x
                .iter()
                .zip(&a.x)
                .zip(b.ax.iter().zip(&a.ax))
                .map(|((p, q), (r, t))| (p - q) * (r - t))
                .sum::<f64>()
            + self
                .vol()
                .iter()
                .zip(b.x.iter().zip(&a.x))
                .map(|(w, (p, q))| w * (p - q) * (p - q))
                .sum::<f64>();
        d2.max(0.0).sqrt()
    }

    /// `count` vertices spaced uniformly in form-norm arclength.
    fn resample(&self, path: &[Vertex], count: usize) -> Vec<Vertex> {
        let m = path.len() - 1;
        let seg: Vec<f64> = (0..m)
            .map(|k| self.form_dist(&path[k], &path[k + 1]))
            .collect();
        let total: f64 = seg.iter().sum();
        let mut xs = Vec::with_capacity(count);
        let (mut k, mut start) = (0, 0.0);
        for j in 0..count {
            let target = total * j as f64 / (count - 1) as f64;
            while k < m - 1 && start + seg[k] < target {
                start += seg[k];
                k += 1;
            }
            let lam = if j == 0 {
                0.0
            } else if j == count - 1 {
                1.0
            } else if seg[k] > 0.0 {
                ((target - start) / seg[k]).clamp(0.0, 1.0)
            } else {
                0.0
            };
            xs.push(
                path[k]
                    .x
                    .iter()
                    .zip(&path[k + 1].x)
                    .map(|(a, b)| a + lam * (b - a))
                    .collect(),
            );
        }
        self.vertices(xs)
    }

    /// Newton's method on `∇I = 0` from `x0`; `None` unless the residual
    /// reaches `tol`.
    fn newton(&self, x0: &[f64], tol: f64, max_iter: usize) -> (Option<Vec<f64>>, usize) {
        let spec = self.red.spec();
        let vol = self.vol();
        let ef = self.ef();
        let a = self.red.stiffness();
        let n = x0.len();
        let mut x = x0.to_vec();
        let mut r = self.red.residual(&x);
        for it in 1..=max_iter {
            let g = self.red.gradient(&x);
            let mut hess = DMatrix::from_fn(n, n, |i, j| ef * a.get(i, j));
            for i in 0..n {
                hess[(i, i)] += vol[i] * (1.0 - spec.nonlinearity().derivative(x[i]));
            }
            let Some(step) = hess.lu().solve(&DVector::from_column_slice(&g)) else {
                return (None, it);
            };
            let mut lam = 1.0;
            let mut accepted = false;
            while lam >= 1.0 / 64.0 {
                let trial: Vec<f64> = x
                    .iter()
                    .zip(step.iter())
                    .map(|(a, b)| a - lam * b)
                    .collect();
                let tr = self.red.residual(&trial);
                if tr < r {
                    x = trial;
                    r = tr;
                    accepted = true;
                    break;
                }
                lam *= 0.5;
            }
            if !accepted {
                return (None, it);
            }
            if r <= tol {
                return (Some(x), it);
            }
        }
        (None, max_iter)
    }
}

fn path_max(maxima: &[SegmentMax]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, s) in maxima.iter().enumerate() {
        if s.energy > best.1 {
            best = (k, s.energy);
        }
    }
    best
}

/// Path-deformation min-max from the segment `t ↦ t·e`.
///
/// The path is the polyline through its vertices and its maximum is located
/// exactly on every segment. Each outer iteration inserts the maximizer as a
/// vertex and moves it one Armijo step along the `H^s_ε`-metric steepest
/// descent direction; a step is accepted only if the two segments touching
/// the moved vertex stay below the current path maximum, so the recorded
/// path maximum is nonincreasing and the path keeps crossing the mountain
/// range. Once the maximizer is close to critical, Newton's method polishes
/// it; the polished point is kept only if its energy matches the path level.
pub fn mountain_pass_solve(
    spec: &ProblemSpec,
    e: &GridFunction,
    cfg: &MpaConfig,
) -> Result<SolveReport> {
    let red = ReducedProblem::new(spec.clone());
    mountain_pass_solve_reduced(&red, e, cfg)
}

/// As [`mountain_pass_solve`], reusing an assembled reduced problem.
pub fn mountain_pass_solve_reduced(
    red: &ReducedProblem,
    e: &GridFunction,
    cfg: &MpaConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let spec = red.spec();
    e.check(spec.mesh())?;
    let e_energy = spec.energy(e)?;
    if !(e_energy < 0.0) {
        return Err(Error::Parameter(format!(
            "path endpoint must have negative energy, got {e_energy:e}"
        )));
    }
    let grad_tol = cfg
        .grad_tol_abs
        .unwrap_or(cfg.grad_tol_rel * spec.weak_residual(e)?);

    let chol = red
        .form_matrix()
        .cholesky()
        .ok_or_else(|| Error::Parameter("form matrix is not positive definite".into()))?;
    let solver = Solver {
        red,
        chol,
        exec: spec.op().exec(),
    };

    let m = cfg.path_points - 1;
    let x_e = e.interior().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let amp = cfg.perturbation * linalg::max_abs(&x_e);
    let xs: Vec<Vec<f64>> = (0..=m)
        .map(|k| {
            let t = k as f64 / m as f64;
            let bump = (std::f64::consts::PI * t).sin();
            x_e.iter()
                .map(|v| t * v + amp * bump * rng.gen_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let mut path = solver.vertices(xs);
    let mut maxima = solver.segment_maxima(&path);
    let mut history = vec![path_max(&maxima).1];

    let mut step_cap = cfg.descent_step;
    let mut switch = cfg.newton_switch;
    let mut descent_iterations = 0;
    let mut newton_iterations = 0;
    let mut solution: Option<Vec<f64>> = None;
    let mut stalled = false;

    while descent_iterations < cfg.max_outer {
        let level = *history.last().expect("nonempty");
        let (j, _) = path_max(&maxima);
        let lam = maxima[j].lambda;
        // Vertex index carrying the maximizer, inserting it when interior.
        let k = if lam <= 0.0 {
            j
        } else if lam >= 1.0 {
            j + 1
        } else {
            let x: Vec<f64> = path[j]
                .x
                .iter()
                .zip(&path[j + 1].x)
                .map(|(a, b)| a + lam * (b - a))
                .collect();
            let v = solver.vertex(x);
            path.insert(j + 1, v);
            let left = solver.segment_max(&path[j], &path[j + 1]);
            let right = solver.segment_max(&path[j + 1], &path[j + 2]);
            maxima.splice(j..=j, [left, right]);
            j + 1
        };

        let x = path[k].x.clone();
        let r = red.residual(&x);
        if r <= grad_tol {
            solution = Some(x);
            break;
        }
        if r <= switch * linalg::max_abs(&x) {
            let (polished, its) = solver.newton(&x, grad_tol, cfg.max_newton);
            newton_iterations += its;
            match polished {
                Some(p) => {
                    let ep = red.energy(&p);
                    if (ep - path[k].energy).abs() <= 1e-2 * path[k].energy.abs() {
                        solution = Some(p);
                        break;
                    }
                    switch *= 0.5;
                }
                None => switch *= 0.5,
            }
        }

        descent_iterations += 1;
        let g = red.gradient(&x);
        let d = DVector::from_column_slice(&g);
        let d = solver.chol.solve(&d);
        let d = d.as_slice();
        let ad = red.stiffness().apply(par::Exec::Sequential, d);
        let slope = -linalg::dot(&g, d);
        let e0 = path[k].energy;
        let mut alpha = step_cap;
        let mut moved = None;
        while alpha > 1e-14 {
            let tx: Vec<f64> = x.iter().zip(d).map(|(a, b)| a - alpha * b).collect();
            let tax: Vec<f64> = path[k]
                .ax
                .iter()
                .zip(&ad)
                .map(|(a, b)| a - alpha * b)
                .collect();
            let te = 0.5 * solver.ef() * linalg::dot(&tx, &tax) + solver.local(&tx);
            if te <= e0 + 1e-4 * alpha * slope {
                let trial = Vertex {
                    x: tx,
                    ax: tax,
                    energy: te,
                };
                let left = (k > 0).then(|| solver.segment_max(&path[k - 1], &trial));
                let right = (k + 1 < path.len()).then(|| solver.segment_max(&trial, &path[k + 1]));
                let ok = left.is_none_or(|s| s.energy <= level)
                    && right.is_none_or(|s| s.energy <= level);
                if ok {
                    moved = Some((trial, left, right));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, left, right)) = moved else {
            // Stuck at a kink of the polyline: redistribute the vertices
            // once and give up if that does not free the maximizer.
            if stalled {
                break;
            }
            stalled = true;
            let candidate = solver.resample(&path, m + 1);
            let cand_max = solver.segment_maxima(&candidate);
            if path_max(&cand_max).1 <= level {
                path = candidate;
                maxima = cand_max;
            }
            step_cap = cfg.descent_step;
            history.push(path_max(&maxima).1);
            continue;
        };
        stalled = false;
        step_cap = (2.0 * alpha).min(cfg.descent_step);
        path[k] = trial;
        if let Some(s) = left {
            maxima[k - 1] = s;
        }
        if let Some(s) = right {
            maxima[k] = s;
        }
        let mut current = path_max(&maxima).1;

        if path.len() > 2 * (m + 1) {
            let candidate = solver.resample(&path, m + 1);
            let cand_max = solver.segment_maxima(&candidate);
            let cand_level = path_max(&cand_max).1;
            if cand_level <= current {
                path = candidate;
                maxima = cand_max;
                current = cand_level;
            }
        }
        history.push(current);
    }

    let (x, converged_hint) = match solution {
        Some(x) => (x, true),
        None => {
            let (j, _) = path_max(&maxima);
            let k = if maxima[j].lambda < 0.5 { j } else { j + 1 };
            (path[k].x.clone(), false)
        }
    };
    let u = red.extend(&x)?;
    let residual = spec.weak_residual(&u)?;
    let level = spec.energy(&u)?;
    let converged = converged_hint && residual <= grad_tol;

    let vol = spec.mesh().interior_volumes();
    let measure = spec.mesh().interior_measure();
    let mean = linalg::weighted_dot(vol, u.interior(), &vec![1.0; vol.len()]) / measure;
    let var = vol
        .iter()
        .zip(u.interior())
        .map(|(w, v)| w * (v - mean) * (v - mean))
        .sum::<f64>()
        / measure;
    let nonconstancy = if mean != 0.0 {
        var.sqrt() / mean.abs()
    } else {
        f64::INFINITY
    };
    let constant_capture = converged && nonconstancy < 1e-8;

    let fix = check_hypotheses(spec.nonlinearity(), spec.two_star()).fixed_points;
    let constant_level = fix
        .iter()
        .map(|&mu| spec.constant_energy(mu))
        .fold(f64::INFINITY, f64::min);

    Ok(SolveReport {
        eps: spec.eps(),
        level,
        residual,
        grad_tol,
        min_u: u.interior_min(),
        max_u: u.interior_max(),
        energy_vs_constant: level / constant_level,
        norm_sq: red.norm_sq(&x),
        iterations: descent_iterations + newton_iterations,
        descent_iterations,
        newton_iterations,
        converged,
        nonconstancy,
        constant_capture,
        path_max_history: history,
        u,
    })
}

/// `(min u, ε^{2s}·seminorm(u⁻, u⁻) + Σ vol·(u⁻)²)`.
pub fn nonnegativity_certificate(spec: &ProblemSpec, u: &GridFunction) -> Result<(f64, f64)> {
    let neg = u.negative_part();
    let semi = spec.op().seminorm(&neg, &neg)?;
    let mass = linalg::weighted_dot(
        spec.mesh().interior_volumes(),
        neg.interior(),
        neg.interior(),
    );
    Ok((u.interior_min(), spec.op().eps_factor() * semi + mass))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormCertificate {
    pub norm_sq: f64,
    /// `Σ vol·f(u)u`.
    pub pairing: f64,
    pub identity_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `‖u‖²_{H^s_ε} = Σ vol·f(u)u` (that is `I'(u)·u = 0`) within
/// `10·grad_tol·‖u‖²`.
pub fn apriori_norm_certificate(
    spec: &ProblemSpec,
    report: &SolveReport,
) -> Result<NormCertificate> {
    let u = &report.u;
    let norm_sq = spec.op().norm_sq(u)?;
    let pairing: f64 = spec
        .mesh()
        .interior_volumes()
        .iter()
        .zip(u.interior())
        .map(|(w, &v)| w * spec.f(v) * v)
        .sum();
    let identity_residual = (norm_sq - pairing).abs();
    let tolerance = 10.0 * report.grad_tol * norm_sq;
    Ok(NormCertificate {
        norm_sq,
        pairing,
        identity_residual,
        tolerance,
        passed: identity_residual <= tolerance,
    })
}

/// Fit of `‖u_ε‖² ≤ K₀ε^N` over a sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormBoundFit {
    /// `max ‖u_ε‖²/ε^N`.
    pub c_fit: f64,
    /// `(1/2 − 1/θ)^{−1}·C_fit`.
    pub k0: f64,
    /// `max/min` of `‖u_ε‖²/ε^N`.
    pub spread: f64,
}

pub fn fit_norm_bound(reports: &[SolveReport], dim: usize, theta: f64) -> Option<NormBoundFit> {
    if reports.is_empty() {
        return None;
    }
    let ratios: Vec<f64> = reports
        .iter()
        .map(|r| r.norm_sq / r.eps.powi(dim as i32))
        .collect();
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Some(NormBoundFit {
        c_fit: hi,
        k0: hi / (0.5 - 1.0 / theta),
        spread: hi / lo,
    })
}

/// `‖u‖_{2*}` on Ω; convenience for sphere sampling.
pub fn critical_norm(spec: &ProblemSpec, u: &GridFunction) -> f64 {
    lq_norm(
        spec.mesh().interior_volumes(),
        u.interior(),
        spec.two_star(),
    )
}
