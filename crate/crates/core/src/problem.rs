//! Nonlinearity models, the energy functional `I_ε` and its derivative.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::grid::GridFunction;
use crate::linalg::{self, SymMatrix};
use crate::mesh::DomainMesh;
use crate::nonlocal::FormOperator;

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityModel {
    /// `f(t) = max(t, 0)^{p−1}`.
    Power,
    /// Piecewise-linear through `(t_k, f_k)` with `t_0 = 0`, `f_0 = 0`,
    /// extended linearly past the last knot.
    Table {
        knots: Vec<f64>,
        values: Vec<f64>,
        /// Exact primitive at each knot.
        primitive: Vec<f64>,
    },
}

/// `f` together with the exponents and constants of its growth hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    pub model: NonlinearityModel,
    /// Subcritical exponent with `2 < p < 2*_s`.
    pub p: f64,
    /// Ambrosetti–Rabinowitz exponent θ > 2.
    pub theta: f64,
    /// Threshold past which `θF(t) ≤ t f(t)`.
    pub a3: f64,
    /// Linear coefficient of the growth bound `f(t) ≤ ηt + C_η t^{p−1}`.
    pub eta: f64,
    pub c_eta: f64,
}

impl NonlinearitySpec {
    /// Pure power `t₊^{p−1}`: θ = p, a₃ = 0, and `C_η = 1` for any η.
    pub fn power(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 2.0) {
            return Err(Error::Parameter(format!(
                "power exponent p = {p} must exceed 2"
            )));
        }
        Ok(Self {
            model: NonlinearityModel::Power,
            p,
            theta: p,
            a3: 0.0,
            eta: 0.25,
            c_eta: 1.0,
        })
    }

    /// Linear interpolation of `(t, f(t))` samples. `C_η` is fitted by
    /// [`check_hypotheses`]; until then it is left at 0.
    pub fn table(points: &[(f64, f64)], p: f64, theta: f64, a3: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter("table needs at least two knots".into()));
        }
        if points[0] != (0.0, 0.0) {
            return Err(Error::Parameter("table must start at (0, 0)".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Parameter(
                "table knots must be strictly increasing".into(),
            ));
        }
        let knots: Vec<f64> = points.iter().map(|p| p.0).collect();
        let values: Vec<f64> = points.iter().map(|p| p.1).collect();
        let mut primitive = vec![0.0; knots.len()];
        for k in 1..knots.len() {
            primitive[k] =
                primitive[k - 1] + 0.5 * (values[k] + values[k - 1]) * (knots[k] - knots[k - 1]);
        }
        Ok(Self {
            model: NonlinearityModel::Table {
                knots,
                values,
                primitive,
            },
            p,
            theta,
            a3,
            eta: 0.25,
            c_eta: 0.0,
        })
    }

    /// `f(t)`; zero for `t ≤ 0`.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.model {
            NonlinearityModel::Power => t.powf(self.p - 1.0),
            NonlinearityModel::Table { knots, values, .. } => {
                let k = segment(knots, t);
                let slope = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
                values[k] + slope * (t - knots[k])
            }
        }
    }

    /// `F(t) = ∫₀ᵗ f`.
    pub fn primitive(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.model {
            NonlinearityModel::Power => t.powf(self.p) / self.p,
            NonlinearityModel::Table {
                knots,
                values,
                primitive,
            } => {
                let k = segment(knots, t);
                let slope = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
                let d = t - knots[k];
                primitive[k] + values[k] * d + 0.5 * slope * d * d
            }
        }
    }

    /// `f'(t)` (one-sided at table knots).
    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match &self.model {
            NonlinearityModel::Power => (self.p - 1.0) * t.powf(self.p - 2.0),
            NonlinearityModel::Table { knots, values, .. } => {
                let k = segment(knots, t);
                (values[k + 1] - values[k]) / (knots[k + 1] - knots[k])
            }
        }
    }

    /// Smallest `M_R` with `f(ξ) ≥ Rξ` for all `ξ ≥ M_R` (power model only).
    pub fn superlinear_threshold(&self, r: f64) -> Result<f64> {
        match self.model {
            NonlinearityModel::Power => Ok(r.powf(1.0 / (self.p - 2.0))),
            NonlinearityModel::Table { .. } => Err(Error::Parameter(
                "superlinear threshold is only available for the power model".into(),
            )),
        }
    }
}

/// Index of the table segment containing `t`, clamped to the last one.
fn segment(knots: &[f64], t: f64) -> usize {
    match knots.binary_search_by(|k| k.total_cmp(&t)) {
        Ok(k) => k.min(knots.len() - 2),
        Err(k) => k.saturating_sub(1).min(knots.len() - 2),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub passed: bool,
    /// The ratio or margin the verdict rests on.
    pub observed: f64,
    pub detail: String,
}

impl HypothesisCheck {
    fn new(passed: bool, observed: f64, detail: String) -> Self {
        Self {
            passed,
            observed,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub f1_sign: HypothesisCheck,
    pub f2_origin: HypothesisCheck,
    pub f2_growth: HypothesisCheck,
    pub f3_superlinear: HypothesisCheck,
    pub f4_ambrosetti_rabinowitz: HypothesisCheck,
    pub f5_constants: HypothesisCheck,
    pub growth_bound: HypothesisCheck,
    pub fixed_points: Vec<f64>,
    /// `inf {t²/2 − F(t) : f(t) = t}`, `+∞` when there are no fixed points.
    pub alpha: f64,
    pub eta: f64,
    pub c_eta: f64,
    /// `C_η` of the `f(t) ≤ ηt + C_η t^{2*_s − 1}` bound used by the Moser ladder.
    pub c_eta_critical: f64,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.passed)
    }

    pub fn checks(&self) -> [(&'static str, &HypothesisCheck); 7] {
        [
            ("f1", &self.f1_sign),
            ("f2 at 0", &self.f2_origin),
            ("f2 at ∞", &self.f2_growth),
            ("f3", &self.f3_superlinear),
            ("f4", &self.f4_ambrosetti_rabinowitz),
            ("f5", &self.f5_constants),
            ("growth bound", &self.growth_bound),
        ]
    }

    /// Fails with the first violated hypothesis.
    pub fn ensure(&self) -> Result<()> {
        match self.checks().into_iter().find(|(_, c)| !c.passed) {
            None => Ok(()),
            Some((name, c)) => Err(Error::Hypothesis {
                name,
                detail: c.detail.clone(),
            }),
        }
    }
}

/// Log-spaced samples on `[1e-8, 1e8]`, 20 per decade.
fn log_samples() -> Vec<f64> {
    (0..=320)
        .map(|k| 10f64.powf(-8.0 + k as f64 / 20.0))
        .collect()
}

/// Samples the hypotheses (f1)–(f5) and the growth bounds on a log grid.
pub fn check_hypotheses(nl: &NonlinearitySpec, two_star: f64) -> HypothesisReport {
    let ts = log_samples();
    let p = nl.p;

    let f1_bad = ts
        .iter()
        .find(|&&t| nl.eval(-t) != 0.0 || nl.eval(t) <= 0.0);
    let f1_sign = HypothesisCheck::new(
        f1_bad.is_none(),
        f1_bad.copied().unwrap_or(0.0),
        match f1_bad {
            None => "f(t) = 0 for t < 0 and f(t) > 0 for t > 0 on all samples".into(),
            Some(t) => format!("sign condition violated at t = ±{t:e}"),
        },
    );

    let r_small = nl.eval(ts[0]) / ts[0];
    let r_next = nl.eval(ts[20]) / ts[20];
    let f2_origin = HypothesisCheck::new(
        r_small <= 1e-3 && r_small <= r_next,
        r_small,
        format!("f(t)/t = {r_small:e} at t = 1e-8"),
    );

    let growth = |t: f64| nl.eval(t) / t.powf(p - 1.0);
    let (g_far, g_mid) = (growth(ts[320]), growth(ts[280]));
    let subcritical = p > 2.0 && p < two_star;
    let f2_growth = HypothesisCheck::new(
        subcritical && g_far <= g_mid * (1.0 + 1e-9),
        g_far,
        format!(
            "f(t)/t^(p-1) = {g_far:e} at t = 1e8 (nonincreasing tail required), p = {p}, 2*_s = {two_star}"
        ),
    );

    let lin = |t: f64| nl.eval(t) / t;
    let (l_far, l_mid) = (lin(ts[320]), lin(ts[280]));
    let f3_superlinear = HypothesisCheck::new(
        l_far > 1e3 && l_far > l_mid,
        l_far,
        format!("f(t)/t = {l_far:e} at t = 1e8"),
    );

    let f4_bad = ts.iter().filter(|&&t| t > nl.a3).find(|&&t| {
        let lhs = nl.theta * nl.primitive(t);
        !(lhs > 0.0 && lhs <= t * nl.eval(t) * (1.0 + 1e-12))
    });
    let f4_ambrosetti_rabinowitz = HypothesisCheck::new(
        nl.theta > 2.0 && f4_bad.is_none(),
        nl.theta,
        match f4_bad {
            None => format!(
                "0 < θF(t) ≤ t f(t) for t > a3 = {}, θ = {}",
                nl.a3, nl.theta
            ),
            Some(t) => format!("θF(t) ≤ t f(t) violated at t = {t:e}"),
        },
    );

    let (fixed_points, degenerate) = fixed_points(nl, &ts);
    let alpha = if degenerate {
        0.0
    } else {
        fixed_points
            .iter()
            .map(|&t| 0.5 * t * t - nl.primitive(t))
            .fold(f64::INFINITY, f64::min)
    };
    let f5_constants = HypothesisCheck::new(
        alpha > 0.0,
        alpha,
        if degenerate {
            "f(t) = t on a continuum of samples: constant solutions cannot be excluded".into()
        } else {
            format!("Fix(f) = {fixed_points:?}, alpha = {alpha:e}")
        },
    );

    let dense: Vec<f64> = (0..10_000)
        .map(|k| 10f64.powf(-8.0 + 16.0 * k as f64 / 9_999.0))
        .collect();
    let c_eta = fit_growth_constant(nl, nl.eta, p, &dense);
    let c_eta_critical = fit_growth_constant(nl, nl.eta, two_star, &dense);
    let worst = dense
        .iter()
        .map(|&t| nl.eval(t) - (nl.eta * t + c_eta * t.powf(p - 1.0)))
        .fold(f64::NEG_INFINITY, f64::max);
    let growth_bound = HypothesisCheck::new(
        c_eta.is_finite() && worst <= 0.0,
        c_eta,
        format!(
            "f(t) ≤ {}·t + {c_eta:.6e}·t^(p-1) on 10^4 samples (max excess {worst:e})",
            nl.eta
        ),
    );

    HypothesisReport {
        f1_sign,
        f2_origin,
        f2_growth,
        f3_superlinear,
        f4_ambrosetti_rabinowitz,
        f5_constants,
        growth_bound,
        fixed_points,
        alpha,
        eta: nl.eta,
        c_eta,
        c_eta_critical,
    }
}

/// Smallest `C` with `f(t) ≤ ηt + C t^{q−1}` on the samples, nudged up by
/// one part in 10¹² so the fitted bound also holds after rounding.
fn fit_growth_constant(nl: &NonlinearitySpec, eta: f64, q: f64, ts: &[f64]) -> f64 {
    let c = ts
        .iter()
        .map(|&t| (nl.eval(t) - eta * t) / t.powf(q - 1.0))
        .fold(0.0_f64, f64::max);
    c * (1.0 + 1e-12)
}

/// Roots of `f(t) = t` on the sample range. The flag is set when `f − id`
/// vanishes on two consecutive samples (a continuum of fixed points).
fn fixed_points(nl: &NonlinearitySpec, ts: &[f64]) -> (Vec<f64>, bool) {
    let h = |t: f64| nl.eval(t) - t;
    let tol = |t: f64| 1e-12 * t.max(nl.eval(t));
    let mut roots: Vec<f64> = Vec::new();
    let mut degenerate = false;
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&l| (r - l).abs() > 1e-10 * r) {
            roots.push(r);
        }
    };
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ha, hb) = (h(a), h(b));
        let (za, zb) = (ha.abs() <= tol(a), hb.abs() <= tol(b));
        if za && zb {
            degenerate = true;
        }
        if za {
            push(a, &mut roots);
        } else if !zb && ha.signum() != hb.signum() {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if h(mid).signum() == ha.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * hi {
                    break;
                }
            }
            push(0.5 * (lo + hi), &mut roots);
        }
    }
    if let Some(&last) = ts.last() {
        if h(last).abs() <= tol(last) {
            push(last, &mut roots);
        }
    }
    (roots, degenerate)
}

/// The discrete problem: assembled operator plus nonlinearity.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    op: FormOperator,
    nonlinearity: NonlinearitySpec,
}

impl ProblemSpec {
    pub fn new(op: FormOperator, nonlinearity: NonlinearitySpec) -> Result<Self> {
        let two_star = op.two_star();
        if !(nonlinearity.p > 2.0 && nonlinearity.p < two_star) {
            return Err(Error::Parameter(format!(
                "p = {} must lie in (2, 2*_s = {two_star})",
                nonlinearity.p
            )));
        }
        Ok(Self { op, nonlinearity })
    }

    pub fn op(&self) -> &FormOperator {
        &self.op
    }

    pub fn mesh(&self) -> &DomainMesh {
        self.op.mesh()
    }

    pub fn nonlinearity(&self) -> &NonlinearitySpec {
        &self.nonlinearity
    }

    pub fn eps(&self) -> f64 {
        self.op.eps()
    }

    pub fn s(&self) -> f64 {
        self.op.s()
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn two_star(&self) -> f64 {
        self.op.two_star()
    }

    pub fn f(&self, t: f64) -> f64 {
        self.nonlinearity.eval(t)
    }

    pub fn big_f(&self, t: f64) -> f64 {
        self.nonlinearity.primitive(t)
    }

    /// `I_ε(u) = ½ε^{2s}·seminorm(u, u) + ½Σ_Ω vol·u² − Σ_Ω vol·F(u)`.
    pub fn energy(&self, u: &GridFunction) -> Result<f64> {
        let semi = self.op.seminorm(u, u)?;
        Ok(0.5 * self.op.eps_factor() * semi + self.local_energy(u.interior()))
    }

    fn local_energy(&self, u_int: &[f64]) -> f64 {
        self.mesh()
            .interior_volumes()
            .iter()
            .zip(u_int)
            .map(|(w, &v)| w * (0.5 * v * v - self.big_f(v)))
            .sum()
    }

    /// Volume-weighted Riesz representer of `v ↦ I'_ε(u)·v`:
    /// `ε^{2s}(−Δ)ˢu + u − f(u)` on Ω and `ε^{2s}𝒩ₛu` on the collar.
    pub fn energy_gradient(&self, u: &GridFunction) -> Result<GridFunction> {
        let ef = self.op.eps_factor();
        let lap = self.op.frac_laplacian(u)?;
        let neu = self.op.neumann_derivative(u)?;
        let mut g = Vec::with_capacity(u.len());
        g.extend(
            lap.iter()
                .zip(u.interior())
                .map(|(l, &v)| ef * l + v - self.f(v)),
        );
        g.extend(neu.iter().map(|n| ef * n));
        GridFunction::new(self.mesh(), g)
    }

    /// `I'_ε(u)·v` evaluated through the bilinear form.
    pub fn derivative(&self, u: &GridFunction, v: &GridFunction) -> Result<f64> {
        let form = self.op.bilinear_form(u, v)?;
        let nonlinear: f64 = self
            .mesh()
            .interior_volumes()
            .iter()
            .zip(u.interior())
            .zip(v.interior())
            .map(|((w, &a), b)| w * self.f(a) * b)
            .sum();
        Ok(form - nonlinear)
    }

    /// `max_i |I'_ε(u)·e_i| / vol_i` over all nodes.
    pub fn weak_residual(&self, u: &GridFunction) -> Result<f64> {
        Ok(linalg::max_abs(self.energy_gradient(u)?.values()))
    }

    /// `I_ε(μ) = (μ²/2 − F(μ))·|Ω|` for a constant μ.
    pub fn constant_energy(&self, mu: f64) -> f64 {
        (0.5 * mu * mu - self.big_f(mu)) * self.mesh().interior_measure()
    }
}

/// `I_ε` restricted to interior values, the collar filled in by the Neumann
/// extension. The collar enters the energy quadratically with no collar–collar
/// coupling, so the extension is the exact minimizer over collar values and
/// critical points of the reduced functional are critical points of `I_ε`.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    spec: ProblemSpec,
    stiffness: Arc<SymMatrix>,
}

impl ReducedProblem {
    pub fn new(spec: ProblemSpec) -> Self {
        let stiffness = Arc::new(spec.op().reduced_stiffness());
        Self { spec, stiffness }
    }

    /// Reuses a stiffness assembled for the same mesh and `s`.
    pub fn with_stiffness(spec: ProblemSpec, stiffness: Arc<SymMatrix>) -> Result<Self> {
        check_len(spec.mesh().n_interior(), stiffness.dim())?;
        Ok(Self { spec, stiffness })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn stiffness(&self) -> &Arc<SymMatrix> {
        &self.stiffness
    }

    pub fn n(&self) -> usize {
        self.stiffness.dim()
    }

    fn vol(&self) -> &[f64] {
        self.spec.mesh().interior_volumes()
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let ef = self.spec.op().eps_factor();
        0.5 * ef * self.stiffness.quad_form(self.spec.op().exec(), x) + self.spec.local_energy(x)
    }

    /// Euclidean gradient `ε^{2s}Ax + vol·(x − f(x))`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let ef = self.spec.op().eps_factor();
        let ax = self.stiffness.apply(self.spec.op().exec(), x);
        ax.iter()
            .zip(x)
            .zip(self.vol())
            .map(|((a, &v), w)| ef * a + w * (v - self.spec.f(v)))
            .collect()
    }

    /// Max-norm of the volume-weighted gradient.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.gradient(x)
            .iter()
            .zip(self.vol())
            .fold(0.0_f64, |m, (g, w)| m.max((g / w).abs()))
    }

    /// Gram matrix `ε^{2s}A + diag(vol)` of `⟨·,·⟩_{ε,s}` on extended functions.
    pub fn form_matrix(&self) -> DMatrix<f64> {
        self.stiffness
            .scaled_plus_diag(self.spec.op().eps_factor(), self.vol())
    }

    /// `‖ext(x)‖²_{H^s_ε}`.
    pub fn norm_sq(&self, x: &[f64]) -> f64 {
        let ef = self.spec.op().eps_factor();
        ef * self.stiffness.quad_form(self.spec.op().exec(), x)
            + linalg::weighted_dot(self.vol(), x, x)
    }

    pub fn extend(&self, x: &[f64]) -> Result<GridFunction> {
        self.spec.op().exterior_extension(x)
    }
}
